//! Terminological model (classes, properties, composition axioms, parameters,
//! rules) and the scene-local assertional vocabulary built on top of it.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const MAX_IDENTIFIER_LEN: usize = 64;

/// Layer of the five-layer scene model.
#[derive(Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Layer {
    #[serde(rename = "L1_Road")]
    Road,
    #[serde(rename = "L2_TrafficInfrastructure")]
    TrafficInfrastructure,
    #[serde(rename = "L3_TemporaryManipulation")]
    TemporaryManipulation,
    #[serde(rename = "L4_Objects")]
    Objects,
    #[serde(rename = "L5_Environment")]
    Environment,
}

impl Layer {
    pub fn number(self) -> u8 {
        match self {
            Layer::Road => 1,
            Layer::TrafficInfrastructure => 2,
            Layer::TemporaryManipulation => 3,
            Layer::Objects => 4,
            Layer::Environment => 5,
        }
    }
}

#[derive(Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassKind {
    Element,
    TrafficRule,
    Participant,
    Maneuver,
    WeatherSetup,
    Position,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
pub struct ClassDef {
    pub name: String,
    pub parent: Option<String>,
    pub layer: Option<Layer>,
    pub kind: ClassKind,
    #[serde(rename = "abstract")]
    pub is_abstract: bool,
}

impl ClassDef {
    pub fn new(name: &str, parent: Option<&str>, layer: Option<Layer>, kind: ClassKind) -> Self {
        ClassDef { name: name.to_owned(), parent: parent.map(str::to_owned), layer, kind, is_abstract: false }
    }

    pub fn abstract_class(mut self) -> Self {
        self.is_abstract = true;
        self
    }
}

#[derive(Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PropertyKind {
    Structural,
    Arrangement,
    Behavioral,
    ParameterLink,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
pub struct PropertyDef {
    pub name: String,
    pub kind: PropertyKind,
    pub inverse: Option<String>,
    pub domain: String,
    pub range: String,
}

impl PropertyDef {
    pub fn new(name: &str, kind: PropertyKind, inverse: Option<&str>, domain: &str, range: &str) -> Self {
        PropertyDef {
            name: name.to_owned(),
            kind,
            inverse: inverse.map(str::to_owned),
            domain: domain.to_owned(),
            range: range.to_owned(),
        }
    }
}

#[derive(Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CompositionMode {
    Mandatory,
    Optional,
    Enabled,
}

/// Inclusive part count. An exact cardinality is `min == max` and is written
/// as a bare integer on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cardinality {
    pub min: u32,
    pub max: u32,
}

impl Cardinality {
    pub fn exact(n: u32) -> Self {
        Cardinality { min: n, max: n }
    }

    pub fn range(min: u32, max: u32) -> Self {
        Cardinality { min, max }
    }

    pub fn is_exact(&self) -> bool {
        self.min == self.max
    }
}

impl Serialize for Cardinality {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Range {
            min: u32,
            max: u32,
        }
        if self.is_exact() {
            serializer.serialize_u32(self.min)
        } else {
            Range { min: self.min, max: self.max }.serialize(serializer)
        }
    }
}

impl<'de> Deserialize<'de> for Cardinality {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Range {
            min: u32,
            max: u32,
        }
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Exact(u32),
            Range(Range),
        }
        match Repr::deserialize(deserializer) {
            Ok(Repr::Exact(n)) => Ok(Cardinality::exact(n)),
            Ok(Repr::Range(r)) => Ok(Cardinality::range(r.min, r.max)),
            Err(_) => {
                Err(serde::de::Error::custom("cardinality must be a non-negative integer or {\"min\": n, \"max\": m}"))
            }
        }
    }
}

/// `class` must be present among the sibling parts at least `min` times.
#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
#[serde(deny_unknown_fields)]
pub struct Requirement {
    pub class: String,
    pub min: u32,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
pub struct CompositionAxiom {
    pub owner: String,
    pub part: String,
    pub mode: CompositionMode,
    pub cardinality: Cardinality,
    /// Cross-section slot; elements are laid out left to right by ascending value.
    #[serde(default)]
    pub lateral_order: i32,
    /// For traffic-rule parts: sibling element class each rule instance binds to.
    /// `None` binds the rule to the whole layout.
    #[serde(default)]
    pub scope: Option<String>,
    #[serde(default)]
    pub requires: Vec<Requirement>,
    #[serde(default)]
    pub excludes: Vec<String>,
}

impl CompositionAxiom {
    pub fn new(owner: &str, part: &str, mode: CompositionMode, cardinality: Cardinality) -> Self {
        CompositionAxiom {
            owner: owner.to_owned(),
            part: part.to_owned(),
            mode,
            cardinality,
            lateral_order: 0,
            scope: None,
            requires: Vec::new(),
            excludes: Vec::new(),
        }
    }

    pub fn at(mut self, lateral_order: i32) -> Self {
        self.lateral_order = lateral_order;
        self
    }

    pub fn requiring(mut self, class: &str, min: u32) -> Self {
        self.requires.push(Requirement { class: class.to_owned(), min });
        self
    }

    pub fn excluding(mut self, class: &str) -> Self {
        self.excludes.push(class.to_owned());
        self
    }

    pub fn scoped_to(mut self, class: &str) -> Self {
        self.scope = Some(class.to_owned());
        self
    }
}

#[derive(Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LinkKind {
    Includes,
    Influences,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
#[serde(deny_unknown_fields)]
pub struct ParameterLink {
    pub class: String,
    pub kind: LinkKind,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
pub struct ParameterDef {
    pub name: String,
    pub unit: String,
    pub links: Vec<ParameterLink>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    /// A class name in argument position; matches any instance of the class.
    Const(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Term>,
}

#[derive(Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VerdictKind {
    Forbidden,
    InvalidComfortOnly,
}

impl VerdictKind {
    pub fn keyword(self) -> &'static str {
        match self {
            VerdictKind::Forbidden => "forbidden",
            VerdictKind::InvalidComfortOnly => "invalid_comfort_only",
        }
    }
}

#[derive(Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleKind {
    Inference,
    Constraint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleHead {
    Atom(Atom),
    Verdict(VerdictKind),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub name: String,
    pub body: Vec<Atom>,
    pub negated: Vec<Atom>,
    pub head: RuleHead,
}

impl Rule {
    pub fn kind(&self) -> RuleKind {
        match self.head {
            RuleHead::Atom(_) => RuleKind::Inference,
            RuleHead::Verdict(_) => RuleKind::Constraint,
        }
    }

    /// Variables in order of first appearance in the positive body.
    pub fn body_variables(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for atom in &self.body {
            for term in &atom.args {
                if let Term::Var(v) = term {
                    if !seen.contains(&v.as_str()) {
                        seen.push(v.as_str());
                    }
                }
            }
        }
        seen
    }
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct Note {
    pub name: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KnowledgeBase {
    pub name: String,
    pub classes: Vec<ClassDef>,
    pub properties: Vec<PropertyDef>,
    pub compositions: Vec<CompositionAxiom>,
    pub parameters: Vec<ParameterDef>,
    pub rules: Vec<Rule>,
    /// Ordered maneuver catalog; order is kept as authored.
    pub maneuvers: Vec<String>,
    pub metadata: Vec<Note>,
}

impl KnowledgeBase {
    pub fn class(&self, name: &str) -> Option<&ClassDef> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn property(&self, name: &str) -> Option<&PropertyDef> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn rule(&self, name: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.name == name)
    }

    pub fn compositions_of<'a>(&'a self, owner: &'a str) -> impl Iterator<Item = &'a CompositionAxiom> + 'a {
        self.compositions.iter().filter(move |c| c.owner == owner)
    }

    /// Sorts every set-like section into canonical order. The maneuver
    /// catalog is an ordered list and is left untouched.
    pub fn normalize(&mut self) {
        self.classes.sort_by(|a, b| a.name.cmp(&b.name));
        self.properties.sort_by(|a, b| a.name.cmp(&b.name));
        for axiom in &mut self.compositions {
            axiom.requires.sort();
            axiom.excludes.sort();
        }
        self.compositions.sort_by(|a, b| (&a.owner, &a.part).cmp(&(&b.owner, &b.part)));
        for p in &mut self.parameters {
            p.links.sort();
        }
        self.parameters.sort_by(|a, b| a.name.cmp(&b.name));
        self.rules.sort_by(|a, b| a.name.cmp(&b.name));
        self.metadata.sort_by(|a, b| a.name.cmp(&b.name));
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    /// Number of logical axioms: subclass edges, property domain/range and
    /// inverse declarations, composition axioms with their requires/excludes
    /// predicates, and parameter links.
    pub fn axiom_count(&self) -> usize {
        let subclass = self.classes.iter().filter(|c| c.parent.is_some()).count();
        let properties: usize = self.properties.iter().map(|p| 2 + usize::from(p.inverse.is_some())).sum();
        let compositions: usize = self.compositions.iter().map(|c| 1 + c.requires.len() + c.excludes.len()).sum();
        let links: usize = self.parameters.iter().map(|p| p.links.len()).sum();
        subclass + properties + compositions + links
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KbError {
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("unknown property `{0}`")]
    UnknownProperty(String),
    #[error("knowledge base is invalid: {}", first_error(.0))]
    Invalid(Vec<Diagnostic>),
}

fn first_error(diags: &[Diagnostic]) -> String {
    diags.iter().find(|d| d.severity == Severity::Error).map(|d| d.to_string()).unwrap_or_default()
}

/// Reflexive-transitive set of subclasses of `class`.
pub fn subclasses_of(kb: &KnowledgeBase, class: &str) -> Result<BTreeSet<String>, KbError> {
    if kb.class(class).is_none() {
        return Err(KbError::UnknownClass(class.to_owned()));
    }
    let mut children: HashMap<&str, Vec<&str>> = HashMap::new();
    for c in &kb.classes {
        if let Some(p) = &c.parent {
            children.entry(p.as_str()).or_default().push(c.name.as_str());
        }
    }
    let mut out = BTreeSet::new();
    let mut stack = vec![class];
    while let Some(c) = stack.pop() {
        if out.insert(c.to_owned()) {
            if let Some(kids) = children.get(c) {
                stack.extend(kids.iter().copied());
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Diagnostic {
    pub severity: Severity,
    pub location: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{sev}: {}: {}", self.location, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.diagnostics.is_empty()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Warning)
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }

    fn error(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.push(Severity::Error, location, message);
    }

    fn warning(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.push(Severity::Warning, location, message);
    }

    fn push(&mut self, severity: Severity, location: impl Into<String>, message: impl Into<String>) {
        let d = Diagnostic { severity, location: location.into(), message: message.into() };
        if !self.diagnostics.contains(&d) {
            self.diagnostics.push(d);
        }
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some('a'..='z'))
        && chars.all(|c| matches!(c, 'a'..='z' | '0'..='9' | '_'))
        && s.len() <= MAX_IDENTIFIER_LEN
}

/// Checks every structural invariant of the knowledge base. Diagnostics are
/// data: the function never fails and is pure.
pub fn validate_kb(kb: &KnowledgeBase) -> ValidationReport {
    let mut report = ValidationReport::default();
    check_identifiers(kb, &mut report);
    check_classes(kb, &mut report);
    check_properties(kb, &mut report);
    check_compositions(kb, &mut report);
    check_parameters(kb, &mut report);
    check_rules(kb, &mut report);
    check_maneuvers(kb, &mut report);
    report
}

fn check_identifiers(kb: &KnowledgeBase, report: &mut ValidationReport) {
    let named = kb
        .classes
        .iter()
        .map(|c| ("class", c.name.as_str()))
        .chain(kb.properties.iter().map(|p| ("property", p.name.as_str())))
        .chain(kb.parameters.iter().map(|p| ("parameter", p.name.as_str())))
        .chain(kb.rules.iter().map(|r| ("rule", r.name.as_str())))
        .chain(kb.metadata.iter().map(|n| ("metadata", n.name.as_str())));
    for (what, name) in named {
        if !is_identifier(name) {
            report.error(
                format!("{what} {name}"),
                format!("`{name}` is not a snake_case identifier of at most {MAX_IDENTIFIER_LEN} characters"),
            );
        }
    }
    if !kb.name.is_empty() && !is_identifier(&kb.name) {
        report.error("knowledge base", format!("name `{}` is not a snake_case identifier", kb.name));
    }
    for (section, names) in [
        ("class", kb.classes.iter().map(|c| &c.name).collect::<Vec<_>>()),
        ("property", kb.properties.iter().map(|p| &p.name).collect()),
        ("parameter", kb.parameters.iter().map(|p| &p.name).collect()),
        ("rule", kb.rules.iter().map(|r| &r.name).collect()),
        ("metadata", kb.metadata.iter().map(|n| &n.name).collect()),
    ] {
        let mut seen = HashSet::new();
        for n in names {
            if !seen.insert(n) {
                report.error(format!("{section} {n}"), format!("duplicate {section} name `{n}`"));
            }
        }
    }
    let classes: HashSet<&str> = kb.classes.iter().map(|c| c.name.as_str()).collect();
    for p in &kb.properties {
        if classes.contains(p.name.as_str()) {
            report.error(format!("property {}", p.name), format!("`{}` names both a class and a property", p.name));
        }
    }
}

fn check_classes(kb: &KnowledgeBase, report: &mut ValidationReport) {
    let by_name: HashMap<&str, &ClassDef> = kb.classes.iter().map(|c| (c.name.as_str(), c)).collect();
    for c in &kb.classes {
        let loc = format!("class {}", c.name);
        if let Some(p) = &c.parent {
            if !by_name.contains_key(p.as_str()) {
                report.error(&loc, format!("parent `{p}` is not a declared class"));
            }
        }
        if !c.is_abstract && c.layer.is_none() {
            report.error(&loc, "non-abstract class has no layer tag");
        }
        if c.layer == Some(Layer::TemporaryManipulation) && !c.is_abstract {
            report.warning(&loc, "layer 3 classes are accepted but ignored by the generator");
        }
    }
    // Walk each parent chain; revisiting a class on the same chain is a cycle.
    let mut reported = HashSet::new();
    for c in &kb.classes {
        let mut chain: Vec<&str> = vec![c.name.as_str()];
        let mut current = c;
        while let Some(p) = current.parent.as_deref() {
            if let Some(pos) = chain.iter().position(|n| *n == p) {
                let mut members: Vec<&str> = chain[pos..].to_vec();
                members.sort_unstable();
                if reported.insert(members.clone()) {
                    report.error(format!("class {p}"), format!("cycle in class hierarchy at {p}"));
                }
                break;
            }
            match by_name.get(p) {
                Some(next) => {
                    chain.push(p);
                    current = next;
                }
                None => break,
            }
        }
    }
}

fn check_properties(kb: &KnowledgeBase, report: &mut ValidationReport) {
    let by_name: HashMap<&str, &PropertyDef> = kb.properties.iter().map(|p| (p.name.as_str(), p)).collect();
    for p in &kb.properties {
        let loc = format!("property {}", p.name);
        for (role, class) in [("domain", &p.domain), ("range", &p.range)] {
            if kb.class(class).is_none() {
                report.error(&loc, format!("{role} `{class}` is not a declared class"));
            }
        }
        match &p.inverse {
            None if p.kind == PropertyKind::Arrangement => {
                report.error(&loc, format!("arrangement property {} declares no inverse", p.name));
            }
            None => {}
            Some(q) => match by_name.get(q.as_str()) {
                None => report.error(&loc, format!("inverse `{q}` of {} is not a declared property", p.name)),
                Some(inv) => {
                    if inv.inverse.as_deref() != Some(p.name.as_str()) {
                        report.error(
                            &loc,
                            format!(
                                "inverse mismatch: {} declares inverse {q} but {q} declares inverse {}",
                                p.name,
                                inv.inverse.as_deref().unwrap_or("nothing")
                            ),
                        );
                    } else if p.kind == PropertyKind::Arrangement && (p.domain != inv.range || p.range != inv.domain) {
                        report.error(&loc, format!("inverse {q} must swap domain and range of {}", p.name));
                    }
                }
            },
        }
    }
}

fn check_compositions(kb: &KnowledgeBase, report: &mut ValidationReport) {
    let mut seen = HashSet::new();
    for a in &kb.compositions {
        let loc = format!("composition {}/{}", a.owner, a.part);
        if !seen.insert((&a.owner, &a.part)) {
            report.error(&loc, "duplicate composition axiom");
        }
        let owner = kb.class(&a.owner);
        if owner.is_none() {
            report.error(&loc, format!("owner `{}` is not a declared class", a.owner));
        }
        match kb.class(&a.part) {
            None => report.error(&loc, format!("part `{}` is not a declared class", a.part)),
            Some(part) if part.is_abstract => {
                report.error(&loc, format!("part `{}` is abstract and cannot be instantiated", a.part))
            }
            Some(_) => {}
        }
        if a.cardinality.min > a.cardinality.max {
            report.error(&loc, "cardinality minimum exceeds maximum");
        }
        if a.mode == CompositionMode::Mandatory && a.cardinality.min == 0 {
            report.error(&loc, "mandatory part with zero minimum cardinality");
        }
        if a.cardinality.max == 0 {
            report.error(&loc, "cardinality maximum is zero");
        }
        let siblings: Vec<&str> = kb.compositions_of(&a.owner).map(|s| s.part.as_str()).collect();
        let refers_to_sibling =
            |class: &str| kb.class(class).is_some() && siblings.iter().any(|s| is_subclass(kb, s, class));
        for r in &a.requires {
            if !refers_to_sibling(&r.class) {
                report.error(&loc, format!("requires `{}` which is not a part of {}", r.class, a.owner));
            }
        }
        for e in &a.excludes {
            if !refers_to_sibling(e) {
                report.error(&loc, format!("excludes `{e}` which is not a part of {}", a.owner));
            }
        }
        if let Some(scope) = &a.scope {
            if !refers_to_sibling(scope) {
                report.error(&loc, format!("scope `{scope}` is not a part of {}", a.owner));
            }
            if kb.class(&a.part).map(|c| c.kind) != Some(ClassKind::TrafficRule) {
                report.error(&loc, "only traffic-rule parts may declare a scope");
            }
        }
    }
}

fn check_parameters(kb: &KnowledgeBase, report: &mut ValidationReport) {
    for p in &kb.parameters {
        for link in &p.links {
            if kb.class(&link.class).is_none() {
                report.error(format!("parameter {}", p.name), format!("linked class `{}` is not declared", link.class));
            }
        }
    }
}

fn check_rules(kb: &KnowledgeBase, report: &mut ValidationReport) {
    for rule in &kb.rules {
        let loc = format!("rule {}", rule.name);
        if rule.body.is_empty() {
            report.error(&loc, "rule has no positive body atom");
        }
        let head_atom = match &rule.head {
            RuleHead::Atom(a) => Some(a),
            RuleHead::Verdict(_) => None,
        };
        for atom in rule.body.iter().chain(&rule.negated).chain(head_atom) {
            check_atom(kb, atom, &loc, report);
        }
        let bound: HashSet<&str> = rule.body_variables().into_iter().collect();
        for atom in rule.negated.iter().chain(head_atom) {
            for term in &atom.args {
                if let Term::Var(v) = term {
                    if !bound.contains(v.as_str()) {
                        report.error(&loc, format!("variable ?{v} is not range-restricted by a positive body atom"));
                    }
                }
            }
        }
    }
}

fn check_atom(kb: &KnowledgeBase, atom: &Atom, loc: &str, report: &mut ValidationReport) {
    let arity = if kb.class(&atom.predicate).is_some() {
        1
    } else if kb.property(&atom.predicate).is_some() {
        2
    } else {
        report.error(loc, format!("predicate `{}` is neither a class nor a property", atom.predicate));
        return;
    };
    if atom.args.len() != arity {
        report.error(loc, format!("`{}` takes {arity} argument(s), found {}", atom.predicate, atom.args.len()));
    }
    for term in &atom.args {
        if let Term::Const(c) = term {
            if kb.class(c).is_none() {
                report.error(loc, format!("constant `{c}` is not a declared class"));
            }
        }
    }
}

fn check_maneuvers(kb: &KnowledgeBase, report: &mut ValidationReport) {
    let mut seen = HashSet::new();
    for m in &kb.maneuvers {
        let loc = format!("maneuver {m}");
        if !seen.insert(m) {
            report.error(&loc, "listed twice in the maneuver catalog");
        }
        match kb.class(m) {
            None => report.error(&loc, "maneuver is not a declared class"),
            Some(c) => {
                if c.kind != ClassKind::Maneuver {
                    report.error(&loc, "maneuver catalog entry is not of kind Maneuver");
                }
                if c.is_abstract {
                    report.error(&loc, "maneuver catalog entry is abstract");
                }
                if kb.classes.iter().any(|o| o.parent.as_deref() == Some(m)) {
                    report.error(&loc, "maneuver catalog entry is not a leaf class");
                }
            }
        }
    }
}

/// `sub` equals `sup` or descends from it. Tolerates cycles.
pub fn is_subclass(kb: &KnowledgeBase, sub: &str, sup: &str) -> bool {
    let mut current = Some(sub);
    let mut steps = 0;
    while let Some(c) = current {
        if c == sup {
            return true;
        }
        steps += 1;
        if steps > kb.classes.len() {
            return false;
        }
        current = kb.class(c).and_then(|d| d.parent.as_deref());
    }
    false
}

macro_rules! id_type {
    ($name:ident) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }
    };
}

id_type!(ClassId);
id_type!(PropertyId);
id_type!(InstanceId);

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "i{}", self.0)
    }
}

/// An assertional-box fact about scene-local instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Fact {
    Class { instance: InstanceId, class: ClassId },
    Property { subject: InstanceId, property: PropertyId, object: InstanceId },
}

/// Validated knowledge base with name lookups and hierarchy indexes.
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct Ontology {
    kb: KnowledgeBase,
    class_ids: HashMap<String, ClassId>,
    property_ids: HashMap<String, PropertyId>,
    parents: Vec<Option<ClassId>>,
    descendants: Vec<Vec<ClassId>>,
    inverses: Vec<Option<PropertyId>>,
    warnings: Vec<Diagnostic>,
}

impl Ontology {
    pub fn new(kb: KnowledgeBase) -> Result<Self, KbError> {
        let report = validate_kb(&kb);
        if report.has_errors() {
            return Err(KbError::Invalid(report.diagnostics));
        }
        let class_ids: HashMap<String, ClassId> =
            kb.classes.iter().enumerate().map(|(i, c)| (c.name.clone(), ClassId(i as u32))).collect();
        let property_ids: HashMap<String, PropertyId> =
            kb.properties.iter().enumerate().map(|(i, p)| (p.name.clone(), PropertyId(i as u32))).collect();
        let parents: Vec<Option<ClassId>> =
            kb.classes.iter().map(|c| c.parent.as_ref().map(|p| class_ids[p])).collect();
        let mut descendants = vec![Vec::new(); kb.classes.len()];
        for (i, _) in kb.classes.iter().enumerate() {
            let mut current = Some(ClassId(i as u32));
            while let Some(c) = current {
                descendants[c.index()].push(ClassId(i as u32));
                current = parents[c.index()];
            }
        }
        for d in &mut descendants {
            d.sort_unstable();
        }
        let inverses = kb.properties.iter().map(|p| p.inverse.as_ref().map(|q| property_ids[q])).collect();
        Ok(Ontology { kb, class_ids, property_ids, parents, descendants, inverses, warnings: report.diagnostics })
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn warnings(&self) -> &[Diagnostic] {
        &self.warnings
    }

    pub fn class_count(&self) -> usize {
        self.kb.classes.len()
    }

    pub fn property_count(&self) -> usize {
        self.kb.properties.len()
    }

    pub fn class_id(&self, name: &str) -> Option<ClassId> {
        self.class_ids.get(name).copied()
    }

    pub fn property_id(&self, name: &str) -> Option<PropertyId> {
        self.property_ids.get(name).copied()
    }

    pub fn require_class(&self, name: &str) -> Result<ClassId, KbError> {
        self.class_id(name).ok_or_else(|| KbError::UnknownClass(name.to_owned()))
    }

    pub fn require_property(&self, name: &str) -> Result<PropertyId, KbError> {
        self.property_id(name).ok_or_else(|| KbError::UnknownProperty(name.to_owned()))
    }

    pub fn class_def(&self, id: ClassId) -> &ClassDef {
        &self.kb.classes[id.index()]
    }

    pub fn property_def(&self, id: PropertyId) -> &PropertyDef {
        &self.kb.properties[id.index()]
    }

    pub fn class_name(&self, id: ClassId) -> &str {
        &self.kb.classes[id.index()].name
    }

    pub fn property_name(&self, id: PropertyId) -> &str {
        &self.kb.properties[id.index()].name
    }

    pub fn parent(&self, id: ClassId) -> Option<ClassId> {
        self.parents[id.index()]
    }

    /// Reflexive-transitive subclasses, sorted by id.
    pub fn descendants(&self, id: ClassId) -> &[ClassId] {
        &self.descendants[id.index()]
    }

    pub fn is_a(&self, sub: ClassId, sup: ClassId) -> bool {
        let mut current = Some(sub);
        while let Some(c) = current {
            if c == sup {
                return true;
            }
            current = self.parents[c.index()];
        }
        false
    }

    pub fn inverse(&self, id: PropertyId) -> Option<PropertyId> {
        self.inverses[id.index()]
    }

    pub fn maneuver_ids(&self) -> Vec<ClassId> {
        self.kb.maneuvers.iter().map(|m| self.class_ids[m]).collect()
    }

    /// Non-abstract classes of `kind`, in name order.
    pub fn concrete_classes_of_kind(&self, kind: ClassKind) -> Vec<&str> {
        let mut names: Vec<&str> =
            self.kb.classes.iter().filter(|c| c.kind == kind && !c.is_abstract).map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        names
    }

    pub fn fact_display(&self, fact: &Fact) -> String {
        match *fact {
            Fact::Class { instance, class } => format!("{}({instance})", self.class_name(class)),
            Fact::Property { subject, property, object } => {
                format!("{}({subject}, {object})", self.property_name(property))
            }
        }
    }
}
