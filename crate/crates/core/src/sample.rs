//! The bundled German motorway knowledge base.

use crate::format::{load_kb, LoadMode};
use crate::kb::{KnowledgeBase, Ontology};

pub const SAMPLE_KB_JSON: &str = include_str!("../data/german_motorway.kb.json");
pub const DEFAULT_TEMPLATES: &str = include_str!("../data/templates/en.toml");

pub fn sample_kb() -> KnowledgeBase {
    load_kb(SAMPLE_KB_JSON.as_bytes(), LoadMode::Strict).expect("bundled knowledge base loads").kb
}

pub fn sample_ontology() -> Ontology {
    Ontology::new(sample_kb()).expect("bundled knowledge base validates")
}
