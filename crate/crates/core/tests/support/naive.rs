//! Brute-force scene generator working on class and property names only.
//! Shares nothing with the library beyond the knowledge-base data types.

use std::collections::{BTreeMap, BTreeSet};

use sceneforge_core::kb::{Atom, ClassKind, CompositionMode, KnowledgeBase, Layer, Rule, RuleHead, Term, VerdictKind};

type Args = Vec<String>;

#[derive(Clone, Default)]
pub struct World {
    facts: BTreeMap<String, BTreeSet<Args>>,
}

impl World {
    pub fn add(&mut self, predicate: &str, args: &[&str]) -> bool {
        self.facts.entry(predicate.to_owned()).or_default().insert(args.iter().map(|s| s.to_string()).collect())
    }

    pub fn has(&self, predicate: &str, args: &[&str]) -> bool {
        self.facts
            .get(predicate)
            .is_some_and(|s| s.iter().any(|a| a.len() == args.len() && a.iter().zip(args).all(|(x, y)| x == y)))
    }

    pub fn extension(&self, predicate: &str) -> BTreeSet<Args> {
        self.facts.get(predicate).cloned().unwrap_or_default()
    }

    fn all(&self, predicate: &str) -> Vec<Args> {
        self.facts.get(predicate).map(|s| s.iter().cloned().collect()).unwrap_or_default()
    }

    fn instances_of(&self, class: &str) -> Vec<String> {
        self.all(class).into_iter().map(|mut a| a.remove(0)).collect()
    }

    pub fn len(&self) -> usize {
        self.facts.values().map(BTreeSet::len).sum()
    }
}

pub struct NaiveKb<'a> {
    pub kb: &'a KnowledgeBase,
    parents: BTreeMap<&'a str, &'a str>,
    inverses: BTreeMap<&'a str, &'a str>,
}

type Bindings = BTreeMap<String, String>;

impl<'a> NaiveKb<'a> {
    pub fn new(kb: &'a KnowledgeBase) -> Self {
        let parents = kb.classes.iter().filter_map(|c| Some((c.name.as_str(), c.parent.as_deref()?))).collect();
        let inverses = kb.properties.iter().filter_map(|p| Some((p.name.as_str(), p.inverse.as_deref()?))).collect();
        NaiveKb { kb, parents, inverses }
    }

    pub fn is_sub(&self, sub: &str, sup: &str) -> bool {
        let mut c = Some(sub);
        while let Some(x) = c {
            if x == sup {
                return true;
            }
            c = self.parents.get(x).copied();
        }
        false
    }

    fn kind(&self, class: &str) -> Option<ClassKind> {
        self.kb.class(class).map(|c| c.kind)
    }

    /// Superclass membership and inverse properties, to a fixpoint.
    fn saturate_schema(&self, w: &mut World) -> bool {
        let mut changed = false;
        loop {
            let mut new: Vec<(String, Args)> = Vec::new();
            for (p, set) in &w.facts {
                for args in set {
                    if args.len() == 1 {
                        if let Some(parent) = self.parents.get(p.as_str()) {
                            new.push((parent.to_string(), args.clone()));
                        }
                    } else if let Some(inv) = self.inverses.get(p.as_str()) {
                        new.push((inv.to_string(), vec![args[1].clone(), args[0].clone()]));
                    }
                }
            }
            let mut any = false;
            for (p, a) in new {
                any |= w.facts.entry(p).or_default().insert(a);
            }
            if !any {
                return changed;
            }
            changed = true;
        }
    }

    fn unify(&self, w: &World, atom: &Atom, args: &Args, b: &mut Bindings) -> bool {
        for (t, x) in atom.args.iter().zip(args) {
            match t {
                Term::Var(v) => match b.get(v) {
                    Some(y) if y != x => return false,
                    Some(_) => {}
                    None => {
                        b.insert(v.clone(), x.clone());
                    }
                },
                Term::Const(c) => {
                    if !w.has(c, &[x]) {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn matches(&self, w: &World, body: &[Atom], b: Bindings, out: &mut Vec<Bindings>) {
        let Some((first, rest)) = body.split_first() else {
            out.push(b);
            return;
        };
        for args in w.all(&first.predicate) {
            if args.len() != first.args.len() {
                continue;
            }
            let mut nb = b.clone();
            if self.unify(w, first, &args, &mut nb) {
                self.matches(w, rest, nb, out);
            }
        }
    }

    fn holds(&self, w: &World, atom: &Atom, b: &Bindings) -> bool {
        let mut out = Vec::new();
        self.matches(w, std::slice::from_ref(atom), b.clone(), &mut out);
        !out.is_empty()
    }

    /// Bindings satisfying the positive body and none of the negated atoms.
    pub fn solutions(&self, w: &World, rule: &Rule) -> Vec<Bindings> {
        let mut out = Vec::new();
        self.matches(w, &rule.body, Bindings::new(), &mut out);
        out.retain(|b| !rule.negated.iter().any(|n| self.holds(w, n, b)));
        out
    }

    fn head_facts(&self, w: &World, head: &Atom, b: &Bindings) -> Vec<(String, Args)> {
        let mut partial: Vec<Args> = vec![Vec::new()];
        for t in &head.args {
            let choices = match t {
                Term::Var(v) => vec![b[v].clone()],
                Term::Const(c) => w.instances_of(c),
            };
            partial = partial
                .into_iter()
                .flat_map(|p| {
                    choices.iter().map(move |c| {
                        let mut p = p.clone();
                        p.push(c.clone());
                        p
                    })
                })
                .collect();
        }
        partial.into_iter().map(|a| (head.predicate.clone(), a)).collect()
    }

    fn run(&self, w: &mut World, rules: &[&Rule]) {
        loop {
            let mut changed = self.saturate_schema(w);
            let mut new = Vec::new();
            for r in rules {
                let RuleHead::Atom(head) = &r.head else { continue };
                for b in self.solutions(w, r) {
                    new.extend(self.head_facts(w, head, &b));
                }
            }
            for (p, a) in new {
                changed |= w.facts.entry(p).or_default().insert(a);
            }
            if !changed {
                return;
            }
        }
    }

    /// Rules without negation first, then all rules. Panics if the second
    /// phase changes a predicate that appears negated, which would mean two
    /// phases are not enough for this knowledge base.
    pub fn close(&self, w: &mut World) {
        let inference: Vec<&Rule> = self.kb.rules.iter().filter(|r| matches!(r.head, RuleHead::Atom(_))).collect();
        let positive: Vec<&Rule> = inference.iter().copied().filter(|r| r.negated.is_empty()).collect();
        self.run(w, &positive);
        let negated: BTreeSet<&str> =
            inference.iter().flat_map(|r| r.negated.iter().map(|a| a.predicate.as_str())).collect();
        let before: Vec<BTreeSet<Args>> = negated.iter().map(|p| w.extension(p)).collect();
        self.run(w, &inference);
        let after: Vec<BTreeSet<Args>> = negated.iter().map(|p| w.extension(p)).collect();
        assert_eq!(before, after, "negated predicates changed after the negation-free phase");
    }

    pub fn verdicts(&self, w: &World) -> Vec<(String, VerdictKind)> {
        self.kb
            .rules
            .iter()
            .filter_map(|r| match r.head {
                RuleHead::Verdict(k) if !self.solutions(w, r).is_empty() => Some((r.name.clone(), k)),
                _ => None,
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct NaiveLayout {
    pub class: String,
    pub elements: Vec<String>,
    /// `(rule class, element index it applies to)`.
    pub rules: Vec<(String, Option<usize>)>,
    pub signature: String,
}

fn layout_signature(class: &str, elements: &[String], rules: &[(String, Option<usize>)]) -> String {
    let mut runs: Vec<String> = Vec::new();
    let mut i = 0;
    while i < elements.len() {
        let mut j = i;
        while j < elements.len() && elements[j] == elements[i] {
            j += 1;
        }
        runs.push(format!("{}.{}", elements[i], j - i));
        i = j;
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (r, _) in rules {
        *counts.entry(r).or_default() += 1;
    }
    let rules: Vec<String> = counts.iter().map(|(r, n)| format!("{r}.{n}")).collect();
    format!("{class}~{}~{}", runs.join("-"), rules.join("-"))
}

/// Every count vector over the layout's axioms, filtered by the composition
/// semantics, deduplicated by signature.
pub fn layouts(nk: &NaiveKb<'_>, class: &str) -> Vec<NaiveLayout> {
    let axioms: Vec<_> = nk
        .kb
        .compositions
        .iter()
        .filter(|a| a.owner == class)
        .filter(|a| nk.kb.class(&a.part).is_some_and(|c| c.layer != Some(Layer::TemporaryManipulation)))
        .collect();
    let mut out: BTreeMap<String, NaiveLayout> = BTreeMap::new();
    let mut counts = vec![0u32; axioms.len()];
    loop {
        let ok = axioms.iter().zip(&counts).all(|(a, &n)| {
            let c = a.cardinality;
            let in_range = n >= c.min.max(1) && n <= c.max;
            let allowed = match a.mode {
                CompositionMode::Mandatory => n >= c.min && n <= c.max,
                CompositionMode::Optional | CompositionMode::Enabled => n == 0 || in_range,
            };
            let total = |target: &str| -> u32 {
                axioms.iter().zip(&counts).filter(|(b, _)| nk.is_sub(&b.part, target)).map(|(_, &m)| m).sum()
            };
            allowed
                && (n == 0
                    || (a.requires.iter().all(|r| total(&r.class) >= r.min)
                        && a.excludes.iter().all(|e| total(e) == 0)))
        });
        if ok {
            let mut elements: Vec<(i32, &str, u32)> = axioms
                .iter()
                .zip(&counts)
                .filter(|(a, _)| nk.kind(&a.part) == Some(ClassKind::Element))
                .map(|(a, &n)| (a.lateral_order, a.part.as_str(), n))
                .collect();
            elements.sort();
            let elements: Vec<String> =
                elements.iter().flat_map(|&(_, p, n)| std::iter::repeat_n(p.to_owned(), n as usize)).collect();
            let mut rules = Vec::new();
            let mut skip = false;
            for (a, &n) in axioms.iter().zip(&counts) {
                if nk.kind(&a.part) != Some(ClassKind::TrafficRule) || n == 0 {
                    continue;
                }
                match &a.scope {
                    None => rules.extend((0..n).map(|_| (a.part.clone(), None))),
                    Some(s) => {
                        let targets: Vec<usize> = (0..elements.len()).filter(|&i| nk.is_sub(&elements[i], s)).collect();
                        if targets.is_empty() {
                            skip = true;
                        }
                        rules.extend(targets.into_iter().map(|i| (a.part.clone(), Some(i))));
                    }
                }
            }
            if !skip {
                let signature = layout_signature(class, &elements, &rules);
                out.insert(signature.clone(), NaiveLayout { class: class.to_owned(), elements, rules, signature });
            }
        }
        let mut i = 0;
        loop {
            if i == axioms.len() {
                return out.into_values().collect();
            }
            counts[i] += 1;
            if counts[i] <= axioms[i].cardinality.max {
                break;
            }
            counts[i] = 0;
            i += 1;
        }
    }
}

/// Scene signatures without the weather part: `(layout signature, entries)`.
#[derive(Default, Debug)]
pub struct NaiveScenes {
    pub comfort: BTreeSet<(String, String)>,
    pub critical: BTreeSet<(String, String)>,
    /// Critical-mode scenes with their verdict rule names.
    pub annotated: BTreeMap<(String, String), Vec<String>>,
}

impl NaiveScenes {
    pub fn with_weather(set: &BTreeSet<(String, String)>, weather: &[&str]) -> BTreeSet<String> {
        set.iter().flat_map(|(l, e)| weather.iter().map(move |w| format!("{l}~{w}~{e}"))).collect()
    }
}

fn pos(e: usize, i: u32) -> String {
    format!("p{e}_{i}")
}

pub fn generate(nk: &NaiveKb<'_>, layout: &NaiveLayout, per_lane: u32, participants: &[(&str, u32)]) -> NaiveScenes {
    let kb = nk.kb;
    let offering = &kb.property("offers_position").expect("offers_position").domain;
    let mut base = World::default();
    base.add(&layout.class, &["root"]);
    let el = |k: usize| format!("e{k}");
    for (k, c) in layout.elements.iter().enumerate() {
        base.add(c, &[&el(k)]);
        base.add("consists_of", &["root", &el(k)]);
        if k + 1 < layout.elements.len() {
            base.add("left_of", &[&el(k), &el(k + 1)]);
        }
    }
    for (j, (c, scope)) in layout.rules.iter().enumerate() {
        let r = format!("r{j}");
        base.add(c, &[&r]);
        base.add("enables", &["root", &r]);
        if let Some(k) = scope {
            base.add("applies_to", &[&r, &el(*k)]);
        }
    }
    let lanes: Vec<usize> = (0..layout.elements.len()).filter(|&k| nk.is_sub(&layout.elements[k], offering)).collect();
    let mut slots = Vec::new();
    for &k in &lanes {
        for i in 0..per_lane {
            base.add("position", &[&pos(k, i)]);
            base.add("offers_position", &[&el(k), &pos(k, i)]);
            if i > 0 {
                base.add("in_front_of", &[&pos(k, i - 1), &pos(k, i)]);
            }
            if lanes.contains(&(k + 1)) {
                base.add("left_of", &[&pos(k, i), &pos(k + 1, i)]);
            }
            slots.push((k, i));
        }
    }
    for m in &kb.maneuvers {
        base.add(m, &[&format!("m_{m}")]);
    }

    // Every injective assignment of labelled participants, deduplicated.
    let labelled: Vec<&str> = participants.iter().flat_map(|&(c, n)| std::iter::repeat_n(c, n as usize)).collect();
    let mut placements: BTreeSet<Vec<(String, usize, u32)>> = BTreeSet::new();
    let mut pick = vec![usize::MAX; labelled.len()];
    fn injective(depth: usize, n: usize, pick: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if depth == pick.len() {
            f(pick);
            return;
        }
        for s in 0..n {
            if !pick[..depth].contains(&s) {
                pick[depth] = s;
                injective(depth + 1, n, pick, f);
            }
        }
    }
    injective(0, slots.len(), &mut pick, &mut |p| {
        let mut key: Vec<(String, usize, u32)> =
            p.iter().zip(&labelled).map(|(&s, c)| (c.to_string(), slots[s].0, slots[s].1)).collect();
        key.sort();
        placements.insert(key);
    });

    let mut out = NaiveScenes::default();
    for placement in placements {
        let mut w = base.clone();
        let vehicles: Vec<String> = (0..placement.len()).map(|j| format!("v{j}")).collect();
        for ((c, e, i), v) in placement.iter().zip(&vehicles) {
            w.add(c, &[v]);
            w.add("on", &[v, &pos(*e, *i)]);
        }
        nk.close(&mut w);
        let sets: Vec<Vec<String>> = vehicles
            .iter()
            .map(|v| kb.maneuvers.iter().filter(|m| w.has("can_perform", &[v, &format!("m_{m}")])).cloned().collect())
            .collect();
        assert!(sets.iter().all(|s| !s.is_empty()), "participant without maneuver in {}", layout.signature);
        let mut choice = vec![0usize; sets.len()];
        loop {
            let mut scene = w.clone();
            let mut entries: Vec<(&str, usize, u32, &str)> = Vec::new();
            for (j, v) in vehicles.iter().enumerate() {
                let m = &sets[j][choice[j]];
                scene.add("performs", &[v, &format!("m_{m}")]);
                let (c, e, i) = &placement[j];
                entries.push((c, *e, *i, m));
            }
            nk.close(&mut scene);
            let verdicts = nk.verdicts(&scene);
            entries.sort();
            let entries: Vec<String> = entries.iter().map(|(c, e, i, m)| format!("{c}@{e}.{i}={m}")).collect();
            let key = (layout.signature.clone(), entries.join("-"));
            if verdicts.is_empty() {
                out.comfort.insert(key.clone());
            }
            if !verdicts.iter().any(|(_, k)| *k == VerdictKind::Forbidden) {
                out.critical.insert(key.clone());
                if !verdicts.is_empty() {
                    out.annotated.insert(key, verdicts.iter().map(|(r, _)| r.clone()).collect());
                }
            }
            let Some(i) = (0..sets.len()).find(|&i| choice[i] + 1 < sets[i].len()) else { break };
            choice[i] += 1;
            choice[..i].fill(0);
        }
    }
    out
}
