//! On-disk knowledge-base format (`.kb.json`, schema version "1").
//!
//! Loading is staged: JSON syntax, then `format_version`, then the sections
//! record by record, then rule texts, then cross-reference validation and
//! rule stratification. Saving is canonical: sections sorted by name, fixed
//! key order, two-space indentation and a trailing newline.

pub mod rule_syntax;

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::kb::{
    validate_kb, ClassDef, CompositionAxiom, Diagnostic, KnowledgeBase, Note, Ontology, ParameterDef, PropertyDef,
    RuleKind, Severity,
};
use crate::reasoner::Reasoner;

pub use rule_syntax::{parse_atom, parse_rule, RuleSyntaxError};

pub const FORMAT_VERSION: &str = "1";
pub const SUPPORTED_MAJOR: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadMode {
    /// Unknown record fields are errors.
    #[default]
    Strict,
    /// Unknown record fields are dropped with a warning.
    Lenient,
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("syntax error at line {line}, column {column} (byte {offset}): {message}")]
    Syntax { line: usize, column: usize, offset: usize, message: String },
    #[error("unsupported format_version {0:?} (supported: {SUPPORTED_MAJOR}.x)")]
    UnsupportedVersion(String),
    #[error("schema violation in {location}: {message}")]
    Schema { location: String, message: String },
    #[error("rule {rule} (rules[{index}]) {source}")]
    RuleSyntax { rule: String, index: usize, source: RuleSyntaxError },
    #[error("cross-reference failure: {}", summarize(.0))]
    CrossReference(Vec<Diagnostic>),
    #[error("rule stratification failed: {0}")]
    Stratification(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn summarize(diags: &[Diagnostic]) -> String {
    diags.iter().filter(|d| d.severity == Severity::Error).map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone)]
pub struct LoadedKb {
    pub kb: KnowledgeBase,
    /// Lenient-mode field warnings followed by validator warnings.
    pub warnings: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RuleRecord {
    name: String,
    kind: RuleKind,
    rule: String,
}

#[derive(Serialize)]
struct KbDocument<'a> {
    format_version: &'a str,
    name: &'a str,
    classes: &'a [ClassDef],
    properties: &'a [PropertyDef],
    compositions: &'a [CompositionAxiom],
    parameters: &'a [ParameterDef],
    rules: Vec<RuleRecord>,
    maneuvers: &'a [String],
    metadata: &'a [Note],
}

const TOP_LEVEL: &[&str] = &[
    "format_version",
    "name",
    "classes",
    "properties",
    "compositions",
    "parameters",
    "rules",
    "maneuvers",
    "metadata",
];
const CLASS_FIELDS: &[&str] = &["name", "parent", "layer", "kind", "abstract"];
const PROPERTY_FIELDS: &[&str] = &["name", "kind", "inverse", "domain", "range"];
const COMPOSITION_FIELDS: &[&str] =
    &["owner", "part", "mode", "cardinality", "lateral_order", "scope", "requires", "excludes"];
const PARAMETER_FIELDS: &[&str] = &["name", "unit", "links"];
const RULE_FIELDS: &[&str] = &["name", "kind", "rule"];
const NOTE_FIELDS: &[&str] = &["name", "text"];

pub fn load_kb_file(path: &Path, mode: LoadMode) -> Result<LoadedKb, FormatError> {
    let bytes = fs::read(path).map_err(|source| FormatError::Io { path: path.display().to_string(), source })?;
    load_kb(&bytes, mode)
}

pub fn load_kb(input: &[u8], mode: LoadMode) -> Result<LoadedKb, FormatError> {
    let root: Value = serde_json::from_slice(input).map_err(|e| syntax_error(input, &e))?;
    let Value::Object(mut root) = root else {
        return Err(FormatError::Schema {
            location: "document".into(),
            message: "top level must be a JSON object".into(),
        });
    };
    check_version(root.get("format_version"))?;

    let mut warnings = Vec::new();
    check_fields(&mut root, TOP_LEVEL, "document", mode, &mut warnings)?;

    let name = match root.remove("name") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s,
        Some(_) => return Err(schema("name", "must be a string")),
    };
    let classes: Vec<ClassDef> = section(&mut root, "classes", CLASS_FIELDS, mode, &mut warnings)?;
    let properties: Vec<PropertyDef> = section(&mut root, "properties", PROPERTY_FIELDS, mode, &mut warnings)?;
    let compositions: Vec<CompositionAxiom> =
        section(&mut root, "compositions", COMPOSITION_FIELDS, mode, &mut warnings)?;
    let parameters: Vec<ParameterDef> = section(&mut root, "parameters", PARAMETER_FIELDS, mode, &mut warnings)?;
    let rule_records: Vec<RuleRecord> = section(&mut root, "rules", RULE_FIELDS, mode, &mut warnings)?;
    let metadata: Vec<Note> = section(&mut root, "metadata", NOTE_FIELDS, mode, &mut warnings)?;
    let maneuvers: Vec<String> = match root.remove("maneuvers") {
        None | Some(Value::Null) => Vec::new(),
        Some(v) => serde_json::from_value(v)
            .map_err(|e| schema("maneuvers", &format!("must be an array of class names: {e}")))?,
    };

    let mut rules = Vec::with_capacity(rule_records.len());
    for (index, record) in rule_records.into_iter().enumerate() {
        let rule = parse_rule(&record.name, &record.rule).map_err(|source| FormatError::RuleSyntax {
            rule: record.name.clone(),
            index,
            source,
        })?;
        if rule.kind() != record.kind {
            return Err(schema(
                &format!("rules[{index}].kind"),
                &format!("rule {} is declared {:?} but its head makes it {:?}", record.name, record.kind, rule.kind()),
            ));
        }
        rules.push(rule);
    }

    let kb =
        KnowledgeBase { name, classes, properties, compositions, parameters, rules, maneuvers, metadata }.normalized();

    let report = validate_kb(&kb);
    if report.has_errors() {
        return Err(FormatError::CrossReference(report.diagnostics));
    }
    warnings.extend(report.warnings().map(|d| d.to_string()));

    let onto = Ontology::new(kb).map_err(|e| match e {
        crate::kb::KbError::Invalid(d) => FormatError::CrossReference(d),
        other => FormatError::Stratification(other.to_string()),
    })?;
    Reasoner::new(&onto).map_err(|e| FormatError::Stratification(e.to_string()))?;

    Ok(LoadedKb { kb: onto.kb().clone(), warnings })
}

/// Canonical serialization: equal knowledge bases produce identical bytes.
pub fn save_kb(kb: &KnowledgeBase) -> Vec<u8> {
    let kb = kb.clone().normalized();
    let doc = KbDocument {
        format_version: FORMAT_VERSION,
        name: &kb.name,
        classes: &kb.classes,
        properties: &kb.properties,
        compositions: &kb.compositions,
        parameters: &kb.parameters,
        rules: kb
            .rules
            .iter()
            .map(|r| RuleRecord { name: r.name.clone(), kind: r.kind(), rule: r.to_string() })
            .collect(),
        maneuvers: &kb.maneuvers,
        metadata: &kb.metadata,
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("knowledge base serializes");
    out.push(b'\n');
    out
}

fn schema(location: &str, message: &str) -> FormatError {
    FormatError::Schema { location: location.to_owned(), message: message.to_owned() }
}

fn syntax_error(input: &[u8], e: &serde_json::Error) -> FormatError {
    let (line, column) = (e.line(), e.column());
    let offset = byte_offset(input, line, column);
    FormatError::Syntax { line, column, offset, message: e.to_string() }
}

fn byte_offset(input: &[u8], line: usize, column: usize) -> usize {
    let mut current = 1;
    let mut start = 0;
    for (i, b) in input.iter().enumerate() {
        if current == line {
            break;
        }
        if *b == b'\n' {
            current += 1;
            start = i + 1;
        }
    }
    (start + column.saturating_sub(1)).min(input.len())
}

fn check_version(v: Option<&Value>) -> Result<(), FormatError> {
    let s = match v {
        Some(Value::String(s)) => s,
        Some(other) => return Err(FormatError::UnsupportedVersion(other.to_string())),
        None => return Err(schema("document", "missing format_version")),
    };
    let mut parts = s.split('.');
    let major = parts.next().and_then(|m| m.parse::<u64>().ok());
    let rest_ok = parts.all(|p| p.parse::<u64>().is_ok()) && s.split('.').count() <= 3;
    match major {
        Some(SUPPORTED_MAJOR) if rest_ok => Ok(()),
        _ => Err(FormatError::UnsupportedVersion(s.clone())),
    }
}

fn check_fields(
    record: &mut Map<String, Value>,
    known: &[&str],
    location: &str,
    mode: LoadMode,
    warnings: &mut Vec<String>,
) -> Result<(), FormatError> {
    let unknown: Vec<String> = record.keys().filter(|k| !known.contains(&k.as_str())).cloned().collect();
    for field in unknown {
        match mode {
            LoadMode::Strict => {
                return Err(schema(location, &format!("unknown field `{field}`")));
            }
            LoadMode::Lenient => {
                warnings.push(format!("{location}: ignoring unknown field `{field}`"));
                record.remove(&field);
            }
        }
    }
    Ok(())
}

fn section<T: DeserializeOwned>(
    root: &mut Map<String, Value>,
    name: &str,
    fields: &[&str],
    mode: LoadMode,
    warnings: &mut Vec<String>,
) -> Result<Vec<T>, FormatError> {
    let items = match root.remove(name) {
        None | Some(Value::Null) => return Ok(Vec::new()),
        Some(Value::Array(items)) => items,
        Some(_) => return Err(schema(name, "section must be an array")),
    };
    let mut out = Vec::with_capacity(items.len());
    for (index, item) in items.into_iter().enumerate() {
        let location = format!("{name}[{index}]");
        let Value::Object(mut record) = item else {
            return Err(schema(&location, "record must be an object"));
        };
        check_fields(&mut record, fields, &location, mode, warnings)?;
        let parsed = serde_json::from_value(Value::Object(record)).map_err(|e| schema(&location, &e.to_string()))?;
        out.push(parsed);
    }
    Ok(out)
}
