use std::collections::{BTreeMap, BTreeSet};
use std::io::{IsTerminal, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use sceneforge_core::format::LoadMode;
use sceneforge_core::layout::layout_ids;
use sceneforge_core::pipeline::{
    explain, generate, load_ontology, load_templates, prepare_layouts, trace_scene, write_outputs, GenerationConfig,
    OutputFormat, PipelineError,
};
use sceneforge_core::scene::Mode;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Comfort,
    Critical,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq, PartialOrd, Ord)]
enum FormatArg {
    Ndjson,
    Html,
    Text,
    Dot,
}

/// Enumerate motorway traffic scenes from a knowledge base.
///
/// Exit codes: 0 success, 1 knowledge base could not be loaded,
/// 2 invalid knowledge base or usage, 3 generation failed, 4 I/O error.
#[derive(Parser, Debug)]
#[command(name = "sceneforge", version)]
struct Args {
    /// Knowledge base file (JSON). Defaults to the bundled motorway sample.
    #[arg(long)]
    kb: Option<PathBuf>,

    /// Accept unknown fields in the knowledge base with a warning.
    #[arg(long)]
    lenient: bool,

    /// Layout filter: class names, `class#n` ids or layout signatures.
    #[arg(long, value_delimiter = ',')]
    layouts: Vec<String>,

    #[arg(long, default_value_t = 2)]
    positions_per_lane: u32,

    /// Participant multiset, e.g. `car=2,truck=1`.
    #[arg(long, value_parser = parse_participants, default_value = "")]
    participants: BTreeMap<String, u32>,

    #[arg(long, value_enum, default_value = "comfort")]
    mode: ModeArg,

    /// Weather setups to include (default: all).
    #[arg(long, value_delimiter = ',')]
    weather: Vec<String>,

    /// Output formats.
    #[arg(long = "format", value_enum, value_delimiter = ',', default_value = "ndjson")]
    formats: Vec<FormatArg>,

    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Keep only the first N scenes in canonical order (0 = all).
    #[arg(long, default_value_t = 0)]
    max_scenes: usize,

    /// Scenes per HTML index page.
    #[arg(long, default_value_t = 50)]
    page_size: usize,

    /// Phrase templates for the text and HTML renderers (TOML).
    #[arg(long)]
    templates: Option<PathBuf>,

    /// Print a statistics report to standard output.
    #[arg(long)]
    stats: bool,

    /// Print every derived fact of each written scene to standard error.
    #[arg(long)]
    trace_inference: bool,

    /// Print the derivation trace for one scene signature instead of writing a catalog.
    #[arg(long, value_name = "SIGNATURE")]
    explain: Option<String>,

    /// List the selected layouts and exit.
    #[arg(long)]
    list_layouts: bool,

    /// Worker threads (default: available parallelism).
    #[arg(long)]
    jobs: Option<usize>,
}

fn parse_participants(s: &str) -> Result<BTreeMap<String, u32>, String> {
    let mut out = BTreeMap::new();
    for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
        let (class, count) = item.split_once('=').ok_or_else(|| format!("`{item}` is not of the form class=count"))?;
        let count: u32 = count.trim().parse().map_err(|_| format!("`{count}` is not a participant count"))?;
        *out.entry(class.trim().to_owned()).or_default() += count;
    }
    Ok(out)
}

impl Args {
    fn config(&self) -> GenerationConfig {
        GenerationConfig {
            kb: self.kb.clone(),
            load_mode: if self.lenient { LoadMode::Lenient } else { LoadMode::Strict },
            layouts: self.layouts.clone(),
            positions_per_lane: self.positions_per_lane,
            participants: self.participants.clone(),
            mode: match self.mode {
                ModeArg::Comfort => Mode::Comfort,
                ModeArg::Critical => Mode::Critical,
            },
            weather: self.weather.clone(),
            formats: self
                .formats
                .iter()
                .map(|f| match f {
                    FormatArg::Ndjson => OutputFormat::Ndjson,
                    FormatArg::Html => OutputFormat::Html,
                    FormatArg::Text => OutputFormat::Text,
                    FormatArg::Dot => OutputFormat::Dot,
                })
                .collect::<BTreeSet<_>>(),
            out: Some(self.out.clone()),
            page_size: self.page_size,
            max_scenes: self.max_scenes,
            jobs: self.jobs,
            trace: self.trace_inference,
            templates: self.templates.clone(),
        }
    }
}

fn run(args: &Args) -> Result<(), PipelineError> {
    let config = args.config();
    let (onto, warnings) = load_ontology(&config)?;
    let stderr = std::io::stderr();
    for w in &warnings {
        let _ = writeln!(stderr.lock(), "warning: {w}");
    }

    if args.list_layouts {
        let (all, layout_warnings) = prepare_layouts(&onto, &[])?;
        for w in &layout_warnings {
            let _ = writeln!(stderr.lock(), "warning: {w}");
        }
        let (selected, _) = prepare_layouts(&onto, &config.layouts)?;
        let selected: BTreeSet<&str> = selected.iter().map(|l| l.signature.as_str()).collect();
        let mut stdout = std::io::stdout().lock();
        for (id, l) in layout_ids(&onto, &all).iter().zip(&all) {
            if selected.contains(l.signature.as_str()) {
                let _ = writeln!(stdout, "{id}\t{}", l.signature);
            }
        }
        return Ok(());
    }

    let templates = load_templates(&config)?;
    let catalog = generate(&onto, &config)?;
    for w in &catalog.warnings {
        let _ = writeln!(stderr.lock(), "warning: {w}");
    }

    if let Some(signature) = &args.explain {
        let mut stdout = std::io::stdout().lock();
        for line in explain(&onto, &catalog, signature)? {
            let _ = writeln!(stdout, "{line}");
        }
        return Ok(());
    }

    if config.trace {
        let mut err = stderr.lock();
        for scene in &catalog.scenes {
            let _ = writeln!(err, "scene {}", scene.signature);
            for line in trace_scene(&onto, &catalog, scene)? {
                let _ = writeln!(err, "  {line}");
            }
        }
    }

    write_outputs(&onto, &catalog, &config.formats, &args.out, &templates, config.page_size)?;

    if args.stats {
        let color = std::env::var_os("SCENEFORGE_NO_COLOR").is_none() && std::io::stdout().is_terminal();
        print!("{}", catalog.stats.render(color));
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
