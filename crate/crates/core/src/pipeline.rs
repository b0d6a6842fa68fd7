//! End-to-end generation: layouts, grids, placements, scenes, and catalog
//! output.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::export::{self, html, CatalogMetadata, SceneGraphDocument, SceneView, Templates};
use crate::format::{load_kb_file, FormatError, LoadMode};
use crate::kb::{KbError, Ontology, RuleKind, VerdictKind};
use crate::layout::{arrange, enumerate_layouts, layout_classes, select_layouts, LayoutError, LayoutInstance};
use crate::reasoner::{Reasoner, ReasonerError};
use crate::scene::{
    build_grid, enumerate_placements, multinomial_placement_count, raw_placement_count, resolve_participants,
    resolve_weather, Mode, Placement, PositionGrid, Scene, SceneError, SceneGenerator,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OutputFormat {
    Ndjson,
    Html,
    Text,
    Dot,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ndjson" => Some(OutputFormat::Ndjson),
            "html" => Some(OutputFormat::Html),
            "text" => Some(OutputFormat::Text),
            "dot" => Some(OutputFormat::Dot),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerationConfig {
    /// `None` selects the bundled sample knowledge base.
    pub kb: Option<PathBuf>,
    pub load_mode: LoadMode,
    /// Layout filter: class names, `class#index` ids or layout signatures.
    pub layouts: Vec<String>,
    pub positions_per_lane: u32,
    pub participants: BTreeMap<String, u32>,
    pub mode: Mode,
    /// Weather setups; empty means all.
    pub weather: Vec<String>,
    pub formats: BTreeSet<OutputFormat>,
    pub out: Option<PathBuf>,
    pub page_size: usize,
    /// 0 means unlimited.
    pub max_scenes: usize,
    /// Worker threads; `None` uses the available parallelism.
    pub jobs: Option<usize>,
    pub trace: bool,
    pub templates: Option<PathBuf>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            kb: None,
            load_mode: LoadMode::Strict,
            layouts: Vec::new(),
            positions_per_lane: 2,
            participants: BTreeMap::new(),
            mode: Mode::Comfort,
            weather: Vec::new(),
            formats: [OutputFormat::Ndjson].into_iter().collect(),
            out: None,
            page_size: 50,
            max_scenes: 0,
            jobs: None,
            trace: false,
            templates: None,
        }
    }
}

impl GenerationConfig {
    /// Settings that determine catalog content. Output location, formats,
    /// paging, worker count and tracing are left out so catalogs stay
    /// byte-identical across those choices.
    pub fn echo(&self) -> serde_json::Value {
        json!({
            "kb": self.kb.as_ref().map_or_else(|| "<bundled>".to_owned(), |p| p.display().to_string()),
            "layouts": self.layouts,
            "positions_per_lane": self.positions_per_lane,
            "participants": self.participants,
            "mode": self.mode.as_str(),
            "weather": self.weather,
            "max_scenes": self.max_scenes,
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Load(#[from] FormatError),
    #[error("invalid knowledge base: {0}")]
    Validation(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("no scene with signature {0} in the generated catalog")]
    UnknownSignature(String),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Load(FormatError::CrossReference(_) | FormatError::Stratification(_)) => 2,
            PipelineError::Load(FormatError::Io { .. }) => 4,
            PipelineError::Load(_) => 1,
            PipelineError::Validation(_) | PipelineError::Config(_) => 2,
            PipelineError::Generation(_) | PipelineError::UnknownSignature(_) => 3,
            PipelineError::Io { .. } => 4,
        }
    }

    fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> PipelineError {
        let context = context.into();
        move |source| PipelineError::Io { context, source }
    }
}

impl From<KbError> for PipelineError {
    fn from(e: KbError) -> Self {
        PipelineError::Validation(e.to_string())
    }
}

impl From<ReasonerError> for PipelineError {
    fn from(e: ReasonerError) -> Self {
        PipelineError::Validation(e.to_string())
    }
}

impl From<LayoutError> for PipelineError {
    fn from(e: LayoutError) -> Self {
        match e {
            LayoutError::NotALayout(_) => PipelineError::Config(e.to_string()),
            LayoutError::Kb(k) => k.into(),
            other => PipelineError::Generation(other.to_string()),
        }
    }
}

impl From<SceneError> for PipelineError {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::Kb(k) => k.into(),
            SceneError::NoManeuver { .. } | SceneError::EmptyGrid(_) => PipelineError::Generation(e.to_string()),
            other => PipelineError::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stats {
    pub kb_name: String,
    pub classes: usize,
    pub axioms: usize,
    pub inference_rules: usize,
    pub constraint_rules: usize,
    pub layouts: usize,
    pub weather_setups: usize,
    pub mode: Option<Mode>,
    /// Placements with distinguishable participants, summed over layouts.
    pub raw_placements: u128,
    pub placements: usize,
    /// Maneuver combinations times weather setups.
    pub candidates: usize,
    pub eliminated: usize,
    pub emitted: usize,
    /// Scenes each mode would emit for this configuration.
    pub emitted_comfort: usize,
    pub emitted_critical: usize,
    pub written: usize,
    /// Eliminated candidates per constraint rule (a candidate counts once per rule that fired).
    pub eliminated_by_rule: BTreeMap<String, usize>,
}

impl Stats {
    pub fn rows(&self) -> Vec<(String, String)> {
        let mut rows = vec![
            ("knowledge base".to_owned(), self.kb_name.clone()),
            ("classes".to_owned(), self.classes.to_string()),
            ("logical axioms".to_owned(), self.axioms.to_string()),
            (
                "rules".to_owned(),
                format!(
                    "{} ({} inference, {} constraint)",
                    self.inference_rules + self.constraint_rules,
                    self.inference_rules,
                    self.constraint_rules
                ),
            ),
            ("layouts".to_owned(), self.layouts.to_string()),
            ("weather setups".to_owned(), self.weather_setups.to_string()),
            ("placements (raw)".to_owned(), self.raw_placements.to_string()),
            ("placements (deduplicated)".to_owned(), self.placements.to_string()),
            ("candidate scenes".to_owned(), self.candidates.to_string()),
            ("eliminated scenes".to_owned(), self.eliminated.to_string()),
            ("emitted scenes".to_owned(), self.emitted.to_string()),
            ("scenes (comfort mode)".to_owned(), self.emitted_comfort.to_string()),
            ("scenes (critical mode)".to_owned(), self.emitted_critical.to_string()),
            ("scenes written".to_owned(), self.written.to_string()),
        ];
        if let Some(mode) = self.mode {
            rows.insert(1, ("mode".to_owned(), mode.as_str().to_owned()));
        }
        for (rule, n) in &self.eliminated_by_rule {
            rows.push((format!("eliminated by {rule}"), n.to_string()));
        }
        rows
    }

    pub fn render(&self, color: bool) -> String {
        let rows = self.rows();
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            if color {
                let _ = writeln!(out, "\x1b[1m{k:<width$}\x1b[0m  \x1b[36m{v}\x1b[0m");
            } else {
                let _ = writeln!(out, "{k:<width$}  {v}");
            }
        }
        out
    }
}

/// A generated catalog with everything needed to render it.
pub struct Catalog {
    pub layouts: Vec<LayoutInstance>,
    pub grids: Vec<PositionGrid>,
    pub scenes: Vec<Scene>,
    pub stats: Stats,
    pub warnings: Vec<String>,
    pub metadata: CatalogMetadata,
    pub mode: Mode,
}

impl Catalog {
    pub fn view<'a>(&'a self, onto: &'a Ontology, scene: &'a Scene) -> SceneView<'a> {
        SceneView { onto, layout: &self.layouts[scene.layout], grid: &self.grids[scene.layout], scene }
    }

    pub fn document(&self, onto: &Ontology, scene: &Scene) -> SceneGraphDocument {
        export::to_scene_graph(self.view(onto, scene), self.mode.as_str(), &self.metadata)
    }

    pub fn find(&self, signature: &str) -> Option<&Scene> {
        self.scenes.binary_search_by(|s| s.signature.as_str().cmp(signature)).ok().map(|i| &self.scenes[i])
    }

    /// One JSON document per line, in canonical order.
    pub fn ndjson(&self, onto: &Ontology) -> String {
        let mut out = Vec::new();
        self.write_ndjson(onto, &mut out).expect("writing to memory");
        String::from_utf8(out).expect("documents are UTF-8")
    }

    pub fn write_ndjson(&self, onto: &Ontology, w: &mut impl Write) -> std::io::Result<()> {
        self.for_each_chunk(onto, |docs| {
            for d in docs {
                w.write_all(d.to_json_line().as_bytes())?;
                w.write_all(b"\n")?;
            }
            Ok(())
        })
    }

    /// Builds documents chunk by chunk in parallel and hands each chunk, in
    /// canonical order, to `f`.
    pub fn for_each_chunk<E>(
        &self,
        onto: &Ontology,
        mut f: impl FnMut(&[SceneGraphDocument]) -> Result<(), E>,
    ) -> Result<(), E> {
        for chunk in self.scenes.chunks(CHUNK) {
            let docs: Vec<SceneGraphDocument> = chunk.par_iter().map(|s| self.document(onto, s)).collect();
            f(&docs)?;
        }
        Ok(())
    }
}

const CHUNK: usize = 4096;

pub fn load_ontology(config: &GenerationConfig) -> Result<(Ontology, Vec<String>), PipelineError> {
    let loaded = match &config.kb {
        Some(path) => load_kb_file(path, config.load_mode)?,
        None => crate::format::load_kb(crate::sample::SAMPLE_KB_JSON.as_bytes(), LoadMode::Strict)?,
    };
    let onto = Ontology::new(loaded.kb)?;
    Ok((onto, loaded.warnings))
}

fn metadata(onto: &Ontology, config: &GenerationConfig) -> CatalogMetadata {
    CatalogMetadata {
        kb_name: onto.kb().name.clone(),
        config: config.echo(),
        generated_at: std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.trim().parse().ok()),
        tool_version: TOOL_VERSION.to_owned(),
    }
}

/// Layouts after filtering, arranged, in canonical order.
pub fn prepare_layouts(
    onto: &Ontology,
    filter: &[String],
) -> Result<(Vec<LayoutInstance>, Vec<String>), PipelineError> {
    let classes = layout_classes(onto)?;
    let wanted: Vec<String> = if filter.is_empty() {
        classes
    } else {
        let named: BTreeSet<String> =
            filter.iter().map(|f| f.split(['~', '#']).next().unwrap_or_default().to_owned()).collect();
        for n in &named {
            if !classes.contains(n) {
                return Err(PipelineError::Config(format!("`{n}` is not a layout class")));
            }
        }
        named.into_iter().collect()
    };
    let enumeration = enumerate_layouts(onto, &wanted)?;
    let mut layouts = select_layouts(onto, enumeration.layouts, filter);
    if layouts.is_empty() {
        return Err(PipelineError::Config(format!("layout filter {filter:?} matches no layout")));
    }
    for l in &mut layouts {
        arrange(l, onto)?;
    }
    Ok((layouts, enumeration.warnings))
}

pub fn generate(onto: &Ontology, config: &GenerationConfig) -> Result<Catalog, PipelineError> {
    if config.positions_per_lane == 0 {
        return Err(PipelineError::Config("positions per lane must be at least 1".into()));
    }
    let reasoner = Reasoner::new(onto)?;
    let participants = resolve_participants(onto, &config.participants)?;
    let weather = resolve_weather(onto, &config.weather)?;
    let (layouts, warnings) = prepare_layouts(onto, &config.layouts)?;

    let mut grids = Vec::with_capacity(layouts.len());
    let mut work: Vec<(usize, Placement)> = Vec::new();
    let mut raw_placements = 0u128;
    let counts: Vec<u64> = participants.iter().map(|&(_, n)| n as u64).collect();
    for (i, layout) in layouts.iter().enumerate() {
        let grid = build_grid(layout, config.positions_per_lane, onto)?;
        let placements = enumerate_placements(onto, &grid, &participants)?;
        debug_assert_eq!(placements.len() as u128, multinomial_placement_count(grid.positions.len() as u64, &counts));
        raw_placements += raw_placement_count(grid.positions.len() as u64, counts.iter().sum());
        work.extend(placements.into_iter().map(|p| (i, p)));
        grids.push(grid);
    }

    let generator = SceneGenerator::new(onto, &reasoner, config.mode, weather.clone())?;
    let run =
        || -> Vec<_> { work.par_iter().map(|(i, p)| generator.generate(*i, &layouts[*i], &grids[*i], p)).collect() };
    let results = match config.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| PipelineError::Config(format!("cannot start {n} workers: {e}")))?
            .install(run),
        None => run(),
    };

    let w = weather.len();
    let mut stats = Stats {
        kb_name: onto.kb().name.clone(),
        classes: onto.class_count(),
        axioms: onto.kb().axiom_count(),
        inference_rules: onto.kb().rules.iter().filter(|r| r.kind() == RuleKind::Inference).count(),
        constraint_rules: onto.kb().rules.iter().filter(|r| r.kind() == RuleKind::Constraint).count(),
        layouts: layouts.len(),
        weather_setups: w,
        mode: Some(config.mode),
        raw_placements,
        placements: work.len(),
        ..Stats::default()
    };
    let mut scenes = Vec::new();
    for r in results {
        let outcome = r?;
        stats.candidates += outcome.candidates * w;
        stats.eliminated += outcome.eliminated * w;
        stats.emitted_comfort += (outcome.candidates - outcome.forbidden - outcome.comfort_only) * w;
        stats.emitted_critical += (outcome.candidates - outcome.forbidden) * w;
        for (rule, n) in outcome.eliminated_by_rule {
            *stats.eliminated_by_rule.entry(rule).or_default() += n * w;
        }
        scenes.extend(outcome.scenes);
    }
    scenes.par_sort_unstable_by(|a, b| a.signature.cmp(&b.signature));
    let before = scenes.len();
    scenes.dedup_by(|a, b| a.signature == b.signature);
    if scenes.len() != before {
        return Err(PipelineError::Generation(format!(
            "{} scenes share a signature with another scene",
            before - scenes.len()
        )));
    }
    stats.emitted = scenes.len();
    if config.max_scenes > 0 {
        scenes.truncate(config.max_scenes);
    }
    stats.written = scenes.len();

    Ok(Catalog { layouts, grids, scenes, stats, warnings, metadata: metadata(onto, config), mode: config.mode })
}

/// The placement a scene was generated from.
pub fn scene_placement(grid: &PositionGrid, scene: &Scene) -> Placement {
    Placement {
        participants: scene
            .participants
            .iter()
            .map(|p| {
                let slot = grid
                    .positions
                    .iter()
                    .position(|g| g.element == p.element && g.index == p.index)
                    .expect("participant position is on the grid");
                (p.class, slot)
            })
            .collect(),
    }
}

/// Derivations and verdicts for one scene, one line each.
pub fn trace_scene(onto: &Ontology, catalog: &Catalog, scene: &Scene) -> Result<Vec<String>, PipelineError> {
    let reasoner = Reasoner::new(onto)?;
    let generator = SceneGenerator::new(onto, &reasoner, catalog.mode, vec![scene.weather])?;
    let grid = &catalog.grids[scene.layout];
    let placement = scene_placement(grid, scene);
    let facts = generator.scene_facts(grid, &placement);
    let mut trace = Vec::new();
    let mut closed = facts.store.clone();
    reasoner.infer_traced(&mut closed, &mut trace);
    let assignment: Vec<_> = scene.participants.iter().map(|p| p.maneuver).collect();
    let performs = onto.require_property("performs")?;
    let mut lines: Vec<String> = Vec::new();
    let render = |lines: &mut Vec<String>, trace: &[crate::reasoner::Derivation]| {
        for d in trace {
            let bindings: Vec<String> = d.bindings.iter().map(|(k, v)| format!("?{k}={v}")).collect();
            lines.push(format!("derive {} [{}] {}", d.rule, bindings.join(", "), onto.fact_display(&d.fact)));
        }
    };
    render(&mut lines, &trace);
    for (&v, &m) in facts.participants.iter().zip(&assignment) {
        let mi = closed.instances_of(m)[0];
        lines.push(format!(
            "assert {}",
            onto.fact_display(&crate::kb::Fact::Property { subject: v, property: performs, object: mi })
        ));
    }
    let mut trace = Vec::new();
    let store = generator.assign(&facts.store, &closed, &facts.participants, &assignment, Some(&mut trace));
    render(&mut lines, &trace);
    let verdicts = reasoner.check_constraints(&store);
    if verdicts.is_empty() {
        lines.push("verdicts: none".to_owned());
    }
    for v in verdicts {
        let bindings: Vec<String> = v.bindings.iter().map(|(k, x)| format!("?{k}={x}")).collect();
        let effect = match (v.kind, catalog.mode) {
            (VerdictKind::Forbidden, _) | (VerdictKind::InvalidComfortOnly, Mode::Comfort) => "eliminates",
            (VerdictKind::InvalidComfortOnly, Mode::Critical) => "annotates",
        };
        lines.push(format!("verdict {} {} [{}] {effect}", v.kind.keyword(), v.rule, bindings.join(", ")));
    }
    Ok(lines)
}

pub fn explain(onto: &Ontology, catalog: &Catalog, signature: &str) -> Result<Vec<String>, PipelineError> {
    let scene = catalog.find(signature).ok_or_else(|| PipelineError::UnknownSignature(signature.to_owned()))?;
    let mut lines = vec![format!("scene {}", scene.signature)];
    lines.extend(trace_scene(onto, catalog, scene)?);
    Ok(lines)
}

pub fn load_templates(config: &GenerationConfig) -> Result<Templates, PipelineError> {
    match &config.templates {
        None => Ok(Templates::english()),
        Some(path) => {
            let text =
                fs::read_to_string(path).map_err(PipelineError::io(format!("cannot read {}", path.display())))?;
            Templates::parse(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<(), PipelineError> {
    fs::write(path, contents).map_err(PipelineError::io(format!("cannot write {}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(path).map_err(PipelineError::io(format!("cannot create {}", path.display())))
}

/// Writes the requested formats below `out`; returns the files written.
pub fn write_outputs(
    onto: &Ontology,
    catalog: &Catalog,
    formats: &BTreeSet<OutputFormat>,
    out: &Path,
    templates: &Templates,
    page_size: usize,
) -> Result<Vec<PathBuf>, PipelineError> {
    create_dir(out)?;
    let mut written = Vec::new();
    let html_dir = out.join("catalog");
    let text_dir = out.join("text");
    let dot_dir = out.join("dot");
    let mut ndjson = None;
    for f in formats {
        match f {
            OutputFormat::Ndjson => {
                let path = out.join("catalog.ndjson");
                let file =
                    fs::File::create(&path).map_err(PipelineError::io(format!("cannot create {}", path.display())))?;
                ndjson = Some((BufWriter::new(file), path));
            }
            OutputFormat::Html => create_dir(&html_dir)?,
            OutputFormat::Text => create_dir(&text_dir)?,
            OutputFormat::Dot => create_dir(&dot_dir)?,
        }
    }
    let html = formats.contains(&OutputFormat::Html);
    let text = formats.contains(&OutputFormat::Text);
    let dot = formats.contains(&OutputFormat::Dot);
    let mut entries: Vec<(String, String)> = Vec::new();
    catalog.for_each_chunk(onto, |docs| -> Result<(), PipelineError> {
        for d in docs {
            if let Some((w, path)) = &mut ndjson {
                let io = PipelineError::io(format!("cannot write {}", path.display()));
                w.write_all(d.to_json_line().as_bytes()).and_then(|_| w.write_all(b"\n")).map_err(io)?;
            }
            let sentence = (html || text).then(|| export::text::to_text(d, templates));
            if html {
                let path = html_dir.join(export::scene_file_name(&d.signature, "html"));
                write(&path, &html::scene_page(d, templates, &html::index_file_name(0)))?;
                written.push(path);
                entries.push((d.signature.clone(), sentence.clone().unwrap_or_default()));
            }
            if text {
                let path = text_dir.join(export::scene_file_name(&d.signature, "txt"));
                write(&path, &(sentence.unwrap_or_default() + "\n"))?;
                written.push(path);
            }
            if dot {
                let path = dot_dir.join(export::scene_file_name(&d.signature, "dot"));
                write(&path, &export::dot::to_dot(d))?;
                written.push(path);
            }
        }
        Ok(())
    })?;
    if let Some((mut w, path)) = ndjson {
        w.flush().map_err(PipelineError::io(format!("cannot write {}", path.display())))?;
        written.insert(0, path);
    }
    if html {
        let title = format!("Scene catalog: {}", onto.kb().name);
        for (name, page) in html::index_pages(&title, &entries, &catalog.stats.rows(), page_size) {
            let path = html_dir.join(name);
            write(&path, &page)?;
            written.push(path);
        }
    }
    Ok(written)
}
