//! Enumeration of road layouts (cross-section elements plus active traffic
//! rules) from composition axioms, and lateral arrangement of their elements.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::kb::{ClassId, ClassKind, CompositionAxiom, CompositionMode, InstanceId, KbError, Layer, Ontology};
use crate::reasoner::{complete_inverses, FactStore};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LayoutError {
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error("`{0}` is not a road layout class")]
    NotALayout(String),
    #[error("axiom {owner} -> {part}: requirement `{class}` >= {min} can never hold")]
    Unsatisfiable { owner: String, part: String, class: String, min: u32 },
    #[error("layout class `{0}` admits no valid combination of parts")]
    Empty(String),
    #[error("layout class `{0}` declares no composition axioms")]
    NoAxioms(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutElement {
    pub instance: InstanceId,
    pub class: ClassId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveRule {
    pub instance: InstanceId,
    pub class: ClassId,
    /// Element the rule is bound to; `None` for layout-wide rules.
    pub scope: Option<InstanceId>,
}

#[derive(Debug, Clone)]
pub struct LayoutInstance {
    pub class: ClassId,
    pub root: InstanceId,
    /// Cross-section elements, left to right in driving direction.
    pub elements: Vec<LayoutElement>,
    pub rules: Vec<ActiveRule>,
    pub facts: FactStore,
    pub signature: String,
}

impl LayoutInstance {
    pub fn element_index(&self, instance: InstanceId) -> Option<usize> {
        self.elements.iter().position(|e| e.instance == instance)
    }
}

#[derive(Debug, Default)]
pub struct LayoutEnumeration {
    pub layouts: Vec<LayoutInstance>,
    pub warnings: Vec<String>,
}

/// Concrete subclasses of `road_layout`, in name order.
pub fn layout_classes(onto: &Ontology) -> Result<Vec<String>, KbError> {
    let root = onto.require_class("road_layout")?;
    let mut names: Vec<String> = onto
        .descendants(root)
        .iter()
        .filter(|&&c| !onto.class_def(c).is_abstract)
        .map(|&c| onto.class_name(c).to_owned())
        .collect();
    names.sort();
    Ok(names)
}

/// One layout per valid combination of part counts, sorted by signature.
/// Arrangement facts are not yet present; see [`arrange`].
pub fn enumerate_layouts(onto: &Ontology, classes: &[String]) -> Result<LayoutEnumeration, LayoutError> {
    let road_layout = onto.require_class("road_layout")?;
    let mut out = LayoutEnumeration::default();
    for name in classes {
        let class = onto.require_class(name)?;
        if !onto.is_a(class, road_layout) || onto.class_def(class).is_abstract {
            return Err(LayoutError::NotALayout(name.clone()));
        }
        enumerate_class(onto, class, &mut out)?;
    }
    out.layouts.sort_by(|a, b| a.signature.cmp(&b.signature));
    out.layouts.dedup_by(|a, b| a.signature == b.signature);
    Ok(out)
}

struct Part<'a> {
    axiom: &'a CompositionAxiom,
    class: ClassId,
    choices: Vec<u32>,
}

fn enumerate_class(onto: &Ontology, class: ClassId, out: &mut LayoutEnumeration) -> Result<(), LayoutError> {
    let owner = onto.class_name(class);
    let mut parts = Vec::new();
    for axiom in onto.kb().compositions_of(owner) {
        let part = onto.require_class(&axiom.part)?;
        if onto.class_def(part).layer == Some(Layer::TemporaryManipulation) {
            out.warnings.push(format!("{owner}: part `{}` is a temporary manipulation and is ignored", axiom.part));
            continue;
        }
        let counts = axiom.cardinality.min.max(1)..=axiom.cardinality.max;
        let choices: Vec<u32> = match axiom.mode {
            CompositionMode::Mandatory => counts.collect(),
            CompositionMode::Optional | CompositionMode::Enabled => std::iter::once(0).chain(counts).collect(),
        };
        parts.push(Part { axiom, class: part, choices });
    }
    if parts.is_empty() {
        return Err(LayoutError::NoAxioms(owner.to_owned()));
    }
    parts.sort_by(|a, b| (a.axiom.lateral_order, &a.axiom.part).cmp(&(b.axiom.lateral_order, &b.axiom.part)));

    let matching = |counts: &[u32], target: ClassId| -> u32 {
        parts.iter().zip(counts).filter(|(p, _)| onto.is_a(p.class, target)).map(|(_, &c)| c).sum()
    };

    let best: Vec<u32> = parts.iter().map(|p| *p.choices.iter().max().unwrap_or(&0)).collect();
    for p in parts.iter().filter(|p| p.axiom.mode == CompositionMode::Mandatory) {
        for r in &p.axiom.requires {
            if matching(&best, onto.require_class(&r.class)?) < r.min {
                return Err(LayoutError::Unsatisfiable {
                    owner: owner.to_owned(),
                    part: p.axiom.part.clone(),
                    class: r.class.clone(),
                    min: r.min,
                });
            }
        }
    }

    let before = out.layouts.len();
    let mut counts: Vec<u32> = parts.iter().map(|p| p.choices[0]).collect();
    let mut cursor = vec![0usize; parts.len()];
    loop {
        if combination_valid(onto, &parts, &counts, &matching)? {
            if let Some(layout) = build(onto, class, &parts, &counts)? {
                out.layouts.push(layout);
            }
        }
        // odometer over per-part choices
        let mut i = 0;
        loop {
            if i == parts.len() {
                if out.layouts.len() == before {
                    return Err(LayoutError::Empty(owner.to_owned()));
                }
                return Ok(());
            }
            cursor[i] += 1;
            if cursor[i] < parts[i].choices.len() {
                counts[i] = parts[i].choices[cursor[i]];
                break;
            }
            cursor[i] = 0;
            counts[i] = parts[i].choices[0];
            i += 1;
        }
    }
}

fn combination_valid(
    onto: &Ontology,
    parts: &[Part<'_>],
    counts: &[u32],
    matching: &dyn Fn(&[u32], ClassId) -> u32,
) -> Result<bool, LayoutError> {
    for (p, &c) in parts.iter().zip(counts) {
        if c == 0 {
            continue;
        }
        for r in &p.axiom.requires {
            if matching(counts, onto.require_class(&r.class)?) < r.min {
                return Ok(false);
            }
        }
        for e in &p.axiom.excludes {
            if matching(counts, onto.require_class(e)?) > 0 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn build(
    onto: &Ontology,
    class: ClassId,
    parts: &[Part<'_>],
    counts: &[u32],
) -> Result<Option<LayoutInstance>, LayoutError> {
    let consists_of = onto.require_property("consists_of")?;
    let enables = onto.require_property("enables")?;
    let applies_to = onto.require_property("applies_to")?;

    let mut facts = FactStore::new();
    let root = facts.fresh_instance();
    facts.assert_class(root, class);

    let is_rule = |p: &Part<'_>| onto.class_def(p.class).kind == ClassKind::TrafficRule;
    let mut elements = Vec::new();
    for (p, &c) in parts.iter().zip(counts) {
        if is_rule(p) {
            continue;
        }
        for _ in 0..c {
            let e = facts.fresh_instance();
            facts.assert_class(e, p.class);
            facts.assert_property(root, consists_of, e);
            elements.push(LayoutElement { instance: e, class: p.class });
        }
    }

    let mut rule_parts: Vec<(&Part<'_>, u32)> =
        parts.iter().zip(counts.iter().copied()).filter(|(p, c)| is_rule(p) && *c > 0).collect();
    rule_parts.sort_by(|a, b| a.0.axiom.part.cmp(&b.0.axiom.part));
    let mut rules = Vec::new();
    for (p, c) in rule_parts {
        let scopes: Vec<Option<InstanceId>> = match &p.axiom.scope {
            None => vec![None],
            Some(scope) => {
                let scope = onto.require_class(scope)?;
                let bound: Vec<_> =
                    elements.iter().filter(|e| onto.is_a(e.class, scope)).map(|e| Some(e.instance)).collect();
                if bound.is_empty() {
                    return Ok(None);
                }
                bound
            }
        };
        for scope in scopes {
            for _ in 0..c {
                let r = facts.fresh_instance();
                facts.assert_class(r, p.class);
                facts.assert_property(root, enables, r);
                if let Some(e) = scope {
                    facts.assert_property(r, applies_to, e);
                }
                rules.push(ActiveRule { instance: r, class: p.class, scope });
            }
        }
    }

    let signature = layout_signature(onto, class, &elements, &rules);
    Ok(Some(LayoutInstance { class, root, elements, rules, facts, signature }))
}

/// `{class}~{element runs}~{rule counts}`, e.g.
/// `rq31~lane.2-hard_shoulder.1~speed_limit_sign.1`.
pub fn layout_signature(onto: &Ontology, class: ClassId, elements: &[LayoutElement], rules: &[ActiveRule]) -> String {
    let elements: Vec<&str> = elements.iter().map(|e| onto.class_name(e.class)).collect();
    let rules: Vec<&str> = rules.iter().map(|r| onto.class_name(r.class)).collect();
    format_layout_signature(onto.class_name(class), &elements, &rules)
}

/// Signature from class names: elements left to right, rules in any order.
pub fn format_layout_signature(class: &str, elements: &[&str], rules: &[&str]) -> String {
    let mut runs: Vec<(&str, usize)> = Vec::new();
    for &e in elements {
        match runs.last_mut() {
            Some((c, n)) if *c == e => *n += 1,
            _ => runs.push((e, 1)),
        }
    }
    let runs: Vec<String> = runs.iter().map(|(c, n)| format!("{c}.{n}")).collect();
    let mut rule_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for &r in rules {
        *rule_counts.entry(r).or_default() += 1;
    }
    let rules: Vec<String> = rule_counts.iter().map(|(c, n)| format!("{c}.{n}")).collect();
    format!("{class}~{}~{}", runs.join("-"), rules.join("-"))
}

/// Adds `left_of` between laterally adjacent elements (and their inverses).
/// Returns the number of facts added.
pub fn arrange(layout: &mut LayoutInstance, onto: &Ontology) -> Result<usize, KbError> {
    let left_of = onto.require_property("left_of")?;
    let before = layout.facts.len();
    for pair in layout.elements.windows(2) {
        layout.facts.assert_property(pair[0].instance, left_of, pair[1].instance);
    }
    complete_inverses(&mut layout.facts, onto);
    Ok(layout.facts.len() - before)
}

/// Layout ids: `class#index` where the index counts layouts of that class in
/// canonical order.
pub fn layout_ids(onto: &Ontology, layouts: &[LayoutInstance]) -> Vec<String> {
    let mut seen: BTreeMap<ClassId, usize> = BTreeMap::new();
    layouts
        .iter()
        .map(|l| {
            let n = seen.entry(l.class).or_default();
            let id = format!("{}#{n}", onto.class_name(l.class));
            *n += 1;
            id
        })
        .collect()
}

/// Keeps layouts matched by any filter entry: a class name, a `class#index`
/// id, or an exact layout signature.
pub fn select_layouts(onto: &Ontology, layouts: Vec<LayoutInstance>, filter: &[String]) -> Vec<LayoutInstance> {
    if filter.is_empty() {
        return layouts;
    }
    let ids = layout_ids(onto, &layouts);
    layouts
        .into_iter()
        .zip(ids)
        .filter(|(l, id)| {
            filter.iter().any(|f| {
                if f.contains('~') {
                    *f == l.signature
                } else if f.contains('#') {
                    f == id
                } else {
                    f == onto.class_name(l.class)
                }
            })
        })
        .map(|(l, _)| l)
        .collect()
}
