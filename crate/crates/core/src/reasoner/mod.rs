//! Forward-chaining evaluation of inference rules over a scene-local
//! [`FactStore`], with stratified negation-as-failure (closed world per
//! scene) and constraint checking.
//!
//! Rules are compiled once per knowledge base. Class-name constants in
//! argument position are rewritten: in positive atoms and heads they become a
//! fresh variable plus a class atom; in negated atoms they are membership
//! tests. Every inverse property pair contributes two synthetic rules so the
//! fixpoint is always closed under inverses.

mod store;

use std::collections::{BTreeMap, HashMap, HashSet};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use thiserror::Error;

use crate::kb::{ClassId, Fact, InstanceId, Ontology, PropertyId, RuleHead, Term, VerdictKind};

pub use store::FactStore;

/// A rule that produced at least one verdict, with the bindings of its named
/// variables.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Verdict {
    pub rule: String,
    pub kind: VerdictKind,
    pub bindings: BTreeMap<String, InstanceId>,
}

/// One newly derived fact together with the rule and bindings that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Derivation {
    pub rule: String,
    pub bindings: Vec<(String, InstanceId)>,
    pub fact: Fact,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReasonerError {
    #[error("negation cycle through rules {}", .rules.join(", "))]
    NegationCycle { rules: Vec<String> },
    #[error("rule {rule}: {message}")]
    Compile { rule: String, message: String },
}

/// Dependency-graph node: a class or a property.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Predicate {
    Class(ClassId),
    Property(PropertyId),
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Var(usize),
    IsA(ClassId),
}

#[derive(Debug, Clone)]
enum BodyAtom {
    Class { class: ClassId, var: usize },
    Property { property: PropertyId, subject: usize, object: usize },
}

#[derive(Debug, Clone)]
enum NegAtom {
    Class { class: ClassId, slot: Slot },
    Property { property: PropertyId, subject: Slot, object: Slot },
}

#[derive(Debug, Clone)]
enum Head {
    Class { class: ClassId, var: usize },
    Property { property: PropertyId, subject: usize, object: usize },
    Verdict(VerdictKind),
}

#[derive(Debug, Clone)]
struct CompiledRule {
    name: String,
    body: Vec<BodyAtom>,
    negated: Vec<NegAtom>,
    head: Head,
    var_names: Vec<String>,
    /// Variables `0..named` were written by the author; the rest are synthetic.
    named: usize,
    negative_deps: Vec<Predicate>,
}

pub struct Reasoner {
    rules: Vec<CompiledRule>,
    constraints: Vec<CompiledRule>,
    strata: Vec<Vec<usize>>,
    class_count: usize,
    is_a: Vec<bool>,
    descendants: Vec<Vec<ClassId>>,
    edges: HashMap<Predicate, Vec<Predicate>>,
}

impl Reasoner {
    pub fn new(onto: &Ontology) -> Result<Self, ReasonerError> {
        let class_count = onto.class_count();
        let mut is_a = vec![false; class_count * class_count];
        let mut descendants = Vec::with_capacity(class_count);
        for c in 0..class_count {
            let cid = ClassId(c as u32);
            for &d in onto.descendants(cid) {
                is_a[d.index() * class_count + c] = true;
            }
            descendants.push(onto.descendants(cid).to_vec());
        }

        let mut rules = Vec::new();
        let mut constraints = Vec::new();
        for rule in &onto.kb().rules {
            let compiled = compile(onto, rule)?;
            match compiled.head {
                Head::Verdict(_) => constraints.push(compiled),
                _ => rules.push(compiled),
            }
        }
        for i in 0..onto.property_count() {
            let p = PropertyId(i as u32);
            if let Some(q) = onto.inverse(p) {
                rules.push(CompiledRule {
                    name: format!("inverse_of_{}", onto.property_name(p)),
                    body: vec![BodyAtom::Property { property: p, subject: 0, object: 1 }],
                    negated: Vec::new(),
                    head: Head::Property { property: q, subject: 1, object: 0 },
                    var_names: vec!["x".into(), "y".into()],
                    named: 2,
                    negative_deps: Vec::new(),
                });
            }
        }

        let mut reasoner =
            Reasoner { rules, constraints, strata: Vec::new(), class_count, is_a, descendants, edges: HashMap::new() };
        reasoner.stratify()?;
        Ok(reasoner)
    }

    fn is_a(&self, sub: ClassId, sup: ClassId) -> bool {
        self.is_a[sub.index() * self.class_count + sup.index()]
    }

    fn is_instance(&self, store: &FactStore, x: InstanceId, class: ClassId) -> bool {
        store.classes_of(x).iter().any(|&c| self.is_a(c, class))
    }

    fn atom_sources(&self, atom: &BodyAtom) -> Vec<Predicate> {
        match *atom {
            BodyAtom::Class { class, .. } => {
                self.descendants[class.index()].iter().map(|&d| Predicate::Class(d)).collect()
            }
            BodyAtom::Property { property, .. } => vec![Predicate::Property(property)],
        }
    }

    fn head_predicate(rule: &CompiledRule) -> Option<Predicate> {
        match rule.head {
            Head::Class { class, .. } => Some(Predicate::Class(class)),
            Head::Property { property, .. } => Some(Predicate::Property(property)),
            Head::Verdict(_) => None,
        }
    }

    fn stratify(&mut self) -> Result<(), ReasonerError> {
        // (from, to, negative, rule index)
        let mut edges: Vec<(Predicate, Predicate, bool, usize)> = Vec::new();
        for (ri, rule) in self.rules.iter().enumerate() {
            let head = Self::head_predicate(rule).expect("inference rule has a head");
            for atom in &rule.body {
                for src in self.atom_sources(atom) {
                    edges.push((src, head, false, ri));
                }
            }
            for &src in &rule.negative_deps {
                edges.push((src, head, true, ri));
            }
        }
        let mut nodes: Vec<Predicate> = edges.iter().flat_map(|e| [e.0, e.1]).collect();
        nodes.sort_unstable();
        nodes.dedup();
        let mut level: HashMap<Predicate, usize> = nodes.iter().map(|&n| (n, 0)).collect();
        let limit = nodes.len() + 1;
        let mut changed = true;
        let mut cyclic = false;
        while changed && !cyclic {
            changed = false;
            for &(from, to, negative, _) in &edges {
                let need = level[&from] + usize::from(negative);
                if level[&to] < need {
                    level.insert(to, need);
                    changed = true;
                    if need > limit {
                        cyclic = true;
                    }
                }
            }
        }
        if cyclic {
            return Err(ReasonerError::NegationCycle { rules: self.negation_cycle_rules(&nodes, &edges) });
        }

        let mut by_level: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (ri, rule) in self.rules.iter().enumerate() {
            let head = Self::head_predicate(rule).expect("inference rule has a head");
            by_level.entry(level[&head]).or_default().push(ri);
        }
        self.strata = by_level.into_values().collect();
        for (from, to, _, _) in edges {
            self.edges.entry(from).or_default().push(to);
        }
        Ok(())
    }

    fn negation_cycle_rules(&self, nodes: &[Predicate], edges: &[(Predicate, Predicate, bool, usize)]) -> Vec<String> {
        let mut graph = DiGraph::<Predicate, ()>::new();
        let index: HashMap<Predicate, _> = nodes.iter().map(|&n| (n, graph.add_node(n))).collect();
        for &(from, to, _, _) in edges {
            graph.add_edge(index[&from], index[&to], ());
        }
        let mut names = Vec::new();
        for scc in tarjan_scc(&graph) {
            let members: HashSet<Predicate> = scc.iter().map(|&i| graph[i]).collect();
            let inside = |e: &&(Predicate, Predicate, bool, usize)| members.contains(&e.0) && members.contains(&e.1);
            if edges.iter().filter(inside).any(|e| e.2) {
                for e in edges.iter().filter(inside) {
                    names.push(self.rules[e.3].name.clone());
                }
            }
        }
        names.sort();
        names.dedup();
        names
    }

    /// Number of strata holding inference rules.
    pub fn stratum_count(&self) -> usize {
        self.strata.len()
    }

    /// Whether adding facts of `predicates` to a store already at fixpoint can
    /// be handled incrementally: true when no negated atom of an inference
    /// rule depends on them.
    pub fn is_monotone_extension(&self, predicates: &[Predicate]) -> bool {
        let mut reach: HashSet<Predicate> = predicates.iter().copied().collect();
        let mut stack: Vec<Predicate> = predicates.to_vec();
        while let Some(p) = stack.pop() {
            for &next in self.edges.get(&p).into_iter().flatten() {
                if reach.insert(next) {
                    stack.push(next);
                }
            }
        }
        !self.rules.iter().any(|r| r.negative_deps.iter().any(|d| reach.contains(d)))
    }

    /// Closes `store` under all inference rules; returns the number of facts added.
    pub fn infer_to_fixpoint(&self, store: &mut FactStore) -> usize {
        self.evaluate(store, 0, None)
    }

    /// Like [`Self::infer_to_fixpoint`], recording one [`Derivation`] per new fact.
    pub fn infer_traced(&self, store: &mut FactStore, trace: &mut Vec<Derivation>) -> usize {
        self.evaluate(store, 0, Some(trace))
    }

    /// Incremental closure of a store that was at fixpoint at `generation` and
    /// has since received new facts. Only sound when the new facts form a
    /// monotone extension (see [`Self::is_monotone_extension`]).
    pub fn infer_incremental(
        &self,
        store: &mut FactStore,
        generation: usize,
        trace: Option<&mut Vec<Derivation>>,
    ) -> usize {
        self.evaluate(store, generation, trace)
    }

    fn evaluate(&self, store: &mut FactStore, start: usize, mut trace: Option<&mut Vec<Derivation>>) -> usize {
        let before = store.len();
        let tracing = trace.is_some();
        for stratum in &self.strata {
            let mut delta_start = start;
            loop {
                let delta_end = store.len();
                if delta_start >= delta_end {
                    break;
                }
                let mut derived: Vec<(Fact, usize, Vec<Option<InstanceId>>)> = Vec::new();
                {
                    let delta = &store.facts()[delta_start..delta_end];
                    for &ri in stratum {
                        let rule = &self.rules[ri];
                        self.fire_delta(rule, store, delta, &mut |b| {
                            let fact = instantiate(&rule.head, b);
                            if !store.contains(&fact) {
                                let bindings = if tracing { b.to_vec() } else { Vec::new() };
                                derived.push((fact, ri, bindings));
                            }
                        });
                    }
                }
                delta_start = delta_end;
                for (fact, ri, bindings) in derived {
                    if store.insert(fact) {
                        if let Some(t) = trace.as_deref_mut() {
                            let rule = &self.rules[ri];
                            t.push(Derivation {
                                rule: rule.name.clone(),
                                bindings: named_bindings(rule, &bindings),
                                fact,
                            });
                        }
                    }
                }
            }
        }
        store.len() - before
    }

    /// Evaluates every constraint rule against `store`; one verdict per
    /// distinct binding of the rule's named variables.
    pub fn check_constraints(&self, store: &FactStore) -> Vec<Verdict> {
        let mut verdicts = Vec::new();
        for rule in &self.constraints {
            let Head::Verdict(kind) = rule.head else { unreachable!() };
            let mut seen: HashSet<Vec<Option<InstanceId>>> = HashSet::new();
            let mut bindings = vec![None; rule.var_names.len()];
            let all = (1u64 << rule.body.len()) - 1;
            self.join(rule, store, all, &mut bindings, &mut |b| {
                let key = b[..rule.named].to_vec();
                if seen.insert(key) {
                    verdicts.push(Verdict {
                        rule: rule.name.clone(),
                        kind,
                        bindings: named_bindings(rule, b).into_iter().collect(),
                    });
                }
            });
        }
        verdicts.sort();
        verdicts
    }

    fn fire_delta(
        &self,
        rule: &CompiledRule,
        store: &FactStore,
        delta: &[Fact],
        emit: &mut dyn FnMut(&[Option<InstanceId>]),
    ) {
        let all = (1u64 << rule.body.len()) - 1;
        let mut bindings = vec![None; rule.var_names.len()];
        for (i, atom) in rule.body.iter().enumerate() {
            for fact in delta {
                if self.bind_fact(atom, fact, &mut bindings) {
                    self.join(rule, store, all & !(1 << i), &mut bindings, emit);
                }
                bindings.iter_mut().for_each(|b| *b = None);
            }
        }
    }

    fn bind_fact(&self, atom: &BodyAtom, fact: &Fact, bindings: &mut [Option<InstanceId>]) -> bool {
        match (atom, fact) {
            (BodyAtom::Class { class, var }, Fact::Class { instance, class: c }) => {
                self.is_a(*c, *class) && bind(bindings, *var, *instance)
            }
            (
                BodyAtom::Property { property, subject, object },
                Fact::Property { subject: s, property: p, object: o },
            ) => property == p && bind(bindings, *subject, *s) && bind(bindings, *object, *o),
            _ => false,
        }
    }

    /// Backtracking join over the body atoms in `remaining` (bit set).
    fn join(
        &self,
        rule: &CompiledRule,
        store: &FactStore,
        remaining: u64,
        bindings: &mut Vec<Option<InstanceId>>,
        emit: &mut dyn FnMut(&[Option<InstanceId>]),
    ) {
        if remaining == 0 {
            if rule.negated.iter().all(|n| self.negation_holds(n, store, bindings)) {
                emit(bindings);
            }
            return;
        }
        let next = pick_atom(&rule.body, remaining, bindings);
        let rest = remaining & !(1 << next);
        match rule.body[next] {
            BodyAtom::Class { class, var } => match bindings[var] {
                Some(x) => {
                    if self.is_instance(store, x, class) {
                        self.join(rule, store, rest, bindings, emit);
                    }
                }
                None => {
                    for &d in &self.descendants[class.index()] {
                        for &x in store.instances_of(d) {
                            bindings[var] = Some(x);
                            self.join(rule, store, rest, bindings, emit);
                        }
                    }
                    bindings[var] = None;
                }
            },
            BodyAtom::Property { property, subject, object } => match (bindings[subject], bindings[object]) {
                (Some(s), Some(o)) => {
                    if store.contains(&Fact::Property { subject: s, property, object: o }) {
                        self.join(rule, store, rest, bindings, emit);
                    }
                }
                (Some(s), None) => {
                    for o in store.objects(s, property) {
                        bindings[object] = Some(o);
                        self.join(rule, store, rest, bindings, emit);
                    }
                    bindings[object] = None;
                }
                (None, Some(o)) => {
                    for s in store.subjects(property, o) {
                        bindings[subject] = Some(s);
                        self.join(rule, store, rest, bindings, emit);
                    }
                    bindings[subject] = None;
                }
                (None, None) => {
                    for (s, o) in store.with_property(property) {
                        if subject == object && s != o {
                            continue;
                        }
                        bindings[subject] = Some(s);
                        bindings[object] = Some(o);
                        self.join(rule, store, rest, bindings, emit);
                    }
                    bindings[subject] = None;
                    bindings[object] = None;
                }
            },
        }
    }

    fn slot_matches(&self, store: &FactStore, slot: Slot, x: InstanceId, bindings: &[Option<InstanceId>]) -> bool {
        match slot {
            Slot::Var(v) => bindings[v] == Some(x),
            Slot::IsA(c) => self.is_instance(store, x, c),
        }
    }

    fn negation_holds(&self, atom: &NegAtom, store: &FactStore, bindings: &[Option<InstanceId>]) -> bool {
        match *atom {
            NegAtom::Class { class, slot: Slot::Var(v) } => {
                let x = bindings[v].expect("negated variables are range-restricted");
                !self.is_instance(store, x, class)
            }
            NegAtom::Class { class, slot: Slot::IsA(k) } => !self.descendants[k.index()]
                .iter()
                .flat_map(|&d| store.instances_of(d))
                .any(|&x| self.is_instance(store, x, class)),
            NegAtom::Property { property, subject, object } => match (subject, object) {
                (Slot::Var(s), Slot::Var(o)) => !store.contains(&Fact::Property {
                    subject: bindings[s].expect("range-restricted"),
                    property,
                    object: bindings[o].expect("range-restricted"),
                }),
                (Slot::Var(s), other) => !store
                    .objects(bindings[s].expect("range-restricted"), property)
                    .any(|o| self.slot_matches(store, other, o, bindings)),
                (other, Slot::Var(o)) => !store
                    .subjects(property, bindings[o].expect("range-restricted"))
                    .any(|s| self.slot_matches(store, other, s, bindings)),
                (s, o) => !store
                    .with_property(property)
                    .any(|(x, y)| self.slot_matches(store, s, x, bindings) && self.slot_matches(store, o, y, bindings)),
            },
        }
    }
}

/// Adds the inverse of every property fact whose property declares one.
/// Returns the number of facts added; a second call adds none.
pub fn complete_inverses(store: &mut FactStore, onto: &Ontology) -> usize {
    let mut added = 0;
    let mut i = 0;
    while i < store.len() {
        if let Fact::Property { subject, property, object } = store.facts()[i] {
            if let Some(q) = onto.inverse(property) {
                if store.assert_property(object, q, subject) {
                    added += 1;
                }
            }
        }
        i += 1;
    }
    added
}

fn bind(bindings: &mut [Option<InstanceId>], var: usize, value: InstanceId) -> bool {
    match bindings[var] {
        Some(existing) => existing == value,
        None => {
            bindings[var] = Some(value);
            true
        }
    }
}

fn pick_atom(body: &[BodyAtom], remaining: u64, bindings: &[Option<InstanceId>]) -> usize {
    let mut best = usize::MAX;
    let mut best_score = -1i32;
    for (i, atom) in body.iter().enumerate() {
        if remaining & (1 << i) == 0 {
            continue;
        }
        let score = match *atom {
            BodyAtom::Class { var, .. } => {
                if bindings[var].is_some() {
                    4
                } else {
                    0
                }
            }
            BodyAtom::Property { subject, object, .. } => {
                let s = bindings[subject].is_some();
                let o = bindings[object].is_some();
                match (s, o) {
                    (true, true) => 4,
                    (true, false) | (false, true) => 2,
                    (false, false) => 1,
                }
            }
        };
        if score > best_score {
            best_score = score;
            best = i;
        }
    }
    best
}

fn instantiate(head: &Head, b: &[Option<InstanceId>]) -> Fact {
    match *head {
        Head::Class { class, var } => Fact::Class { instance: b[var].expect("bound"), class },
        Head::Property { property, subject, object } => {
            Fact::Property { subject: b[subject].expect("bound"), property, object: b[object].expect("bound") }
        }
        Head::Verdict(_) => unreachable!("constraints have no head fact"),
    }
}

fn named_bindings(rule: &CompiledRule, b: &[Option<InstanceId>]) -> Vec<(String, InstanceId)> {
    (0..rule.named.min(b.len())).filter_map(|v| b[v].map(|x| (rule.var_names[v].clone(), x))).collect()
}

fn compile(onto: &Ontology, rule: &crate::kb::Rule) -> Result<CompiledRule, ReasonerError> {
    let err = |message: String| ReasonerError::Compile { rule: rule.name.clone(), message };
    let mut var_names: Vec<String> = rule.body_variables().into_iter().map(str::to_owned).collect();
    let named = var_names.len();
    let var_index = |name: &str, names: &[String]| names.iter().position(|n| n == name);

    let class_of = |name: &str| onto.class_id(name).ok_or_else(|| err(format!("unknown class `{name}`")));

    let mut body = Vec::new();
    let mut extra = Vec::new();
    let fresh = |class: ClassId, var_names: &mut Vec<String>, extra: &mut Vec<BodyAtom>| {
        let v = var_names.len();
        var_names.push(format!("_{}", v));
        extra.push(BodyAtom::Class { class, var: v });
        v
    };
    let mut positive_slot =
        |term: &Term, var_names: &mut Vec<String>, extra: &mut Vec<BodyAtom>| -> Result<usize, ReasonerError> {
            match term {
                Term::Var(v) => var_index(v, var_names).ok_or_else(|| err(format!("unbound variable ?{v}"))),
                Term::Const(c) => Ok(fresh(class_of(c)?, var_names, extra)),
            }
        };

    for atom in &rule.body {
        body.push(compile_positive(onto, atom, &mut var_names, &mut extra, &mut positive_slot, &err)?);
    }
    let head = match &rule.head {
        RuleHead::Verdict(kind) => Head::Verdict(*kind),
        RuleHead::Atom(atom) => {
            match compile_positive(onto, atom, &mut var_names, &mut extra, &mut positive_slot, &err)? {
                BodyAtom::Class { class, var } => Head::Class { class, var },
                BodyAtom::Property { property, subject, object } => Head::Property { property, subject, object },
            }
        }
    };
    body.extend(extra);
    if body.len() > 63 {
        return Err(err("more than 63 body atoms after rewriting".into()));
    }

    let mut negated = Vec::new();
    let mut negative_deps = Vec::new();
    for atom in &rule.negated {
        let slot = |t: &Term| -> Result<Slot, ReasonerError> {
            match t {
                Term::Var(v) => var_index(v, &var_names)
                    .map(Slot::Var)
                    .ok_or_else(|| err(format!("variable ?{v} is not range-restricted"))),
                Term::Const(c) => Ok(Slot::IsA(class_of(c)?)),
            }
        };
        let slots: Vec<Slot> = atom.args.iter().map(slot).collect::<Result<_, _>>()?;
        for s in &slots {
            if let Slot::IsA(k) = s {
                negative_deps.extend(onto.descendants(*k).iter().map(|&d| Predicate::Class(d)));
            }
        }
        if let Some(class) = onto.class_id(&atom.predicate) {
            let [slot] = slots[..] else { return Err(err(format!("`{}` takes one argument", atom.predicate))) };
            negative_deps.extend(onto.descendants(class).iter().map(|&d| Predicate::Class(d)));
            negated.push(NegAtom::Class { class, slot });
        } else if let Some(property) = onto.property_id(&atom.predicate) {
            let [subject, object] = slots[..] else {
                return Err(err(format!("`{}` takes two arguments", atom.predicate)));
            };
            negative_deps.push(Predicate::Property(property));
            // Subject/object classes are membership tests on the same facts.
            negated.push(NegAtom::Property { property, subject, object });
        } else {
            return Err(err(format!("unknown predicate `{}`", atom.predicate)));
        }
    }
    negative_deps.sort_unstable();
    negative_deps.dedup();

    Ok(CompiledRule { name: rule.name.clone(), body, negated, head, var_names, named, negative_deps })
}

type SlotFn<'a> = dyn FnMut(&Term, &mut Vec<String>, &mut Vec<BodyAtom>) -> Result<usize, ReasonerError> + 'a;

fn compile_positive(
    onto: &Ontology,
    atom: &crate::kb::Atom,
    var_names: &mut Vec<String>,
    extra: &mut Vec<BodyAtom>,
    slot: &mut SlotFn<'_>,
    err: &dyn Fn(String) -> ReasonerError,
) -> Result<BodyAtom, ReasonerError> {
    if let Some(class) = onto.class_id(&atom.predicate) {
        let [term] = &atom.args[..] else {
            return Err(err(format!("`{}` takes one argument", atom.predicate)));
        };
        Ok(BodyAtom::Class { class, var: slot(term, var_names, extra)? })
    } else if let Some(property) = onto.property_id(&atom.predicate) {
        let [s, o] = &atom.args[..] else {
            return Err(err(format!("`{}` takes two arguments", atom.predicate)));
        };
        let subject = slot(s, var_names, extra)?;
        let object = slot(o, var_names, extra)?;
        Ok(BodyAtom::Property { property, subject, object })
    } else {
        Err(err(format!("unknown predicate `{}`", atom.predicate)))
    }
}
