//! Positions, participant placements, maneuver assignment and filtering.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::kb::{ClassId, ClassKind, InstanceId, KbError, Ontology, VerdictKind};
use crate::layout::LayoutInstance;
use crate::reasoner::{complete_inverses, Derivation, FactStore, Predicate, Reasoner, Verdict};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SceneError {
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error("layout {0} has no element that offers positions")]
    EmptyGrid(String),
    #[error("positions per lane must be at least 1")]
    NoPositions,
    #[error("{participants} participants do not fit on {positions} positions")]
    Capacity { participants: usize, positions: usize },
    #[error("`{0}` is not a concrete participant class")]
    NotAParticipant(String),
    #[error("`{0}` is not a concrete weather setup")]
    NotAWeather(String),
    #[error("no maneuver is derivable for {class} on position {element}.{index} in layout {layout}")]
    NoManeuver { layout: String, class: String, element: usize, index: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Comfort,
    Critical,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Comfort => "comfort",
            Mode::Critical => "critical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridPosition {
    pub instance: InstanceId,
    /// Index of the offering element in the layout's element list.
    pub element: usize,
    /// Longitudinal index, 0 is the front.
    pub index: u32,
}

#[derive(Debug, Clone)]
pub struct PositionGrid {
    /// Ordered by (element, index).
    pub positions: Vec<GridPosition>,
    /// Layout facts plus positions and their arrangement.
    pub facts: FactStore,
}

impl PositionGrid {
    pub fn position_of(&self, instance: InstanceId) -> Option<&GridPosition> {
        self.positions.iter().find(|p| p.instance == instance)
    }
}

/// Distributes `per_lane` positions on every element that can offer them.
pub fn build_grid(layout: &LayoutInstance, per_lane: u32, onto: &Ontology) -> Result<PositionGrid, SceneError> {
    if per_lane == 0 {
        return Err(SceneError::NoPositions);
    }
    let offers = onto.require_property("offers_position")?;
    let position = onto.require_class("position")?;
    let in_front_of = onto.require_property("in_front_of")?;
    let left_of = onto.require_property("left_of")?;
    let offering = onto.require_class(&onto.property_def(offers).domain)?;

    let mut facts = layout.facts.clone();
    let mut positions = Vec::new();
    let mut by_element: Vec<Option<Vec<InstanceId>>> = Vec::with_capacity(layout.elements.len());
    for (ei, e) in layout.elements.iter().enumerate() {
        if !onto.is_a(e.class, offering) {
            by_element.push(None);
            continue;
        }
        let ids: Vec<InstanceId> = (0..per_lane)
            .map(|index| {
                let p = facts.fresh_instance();
                facts.assert_class(p, position);
                facts.assert_property(e.instance, offers, p);
                positions.push(GridPosition { instance: p, element: ei, index });
                p
            })
            .collect();
        for w in ids.windows(2) {
            facts.assert_property(w[0], in_front_of, w[1]);
        }
        by_element.push(Some(ids));
    }
    if positions.is_empty() {
        return Err(SceneError::EmptyGrid(layout.signature.clone()));
    }
    for w in by_element.windows(2) {
        if let (Some(a), Some(b)) = (&w[0], &w[1]) {
            for (&x, &y) in a.iter().zip(b) {
                facts.assert_property(x, left_of, y);
            }
        }
    }
    complete_inverses(&mut facts, onto);
    Ok(PositionGrid { positions, facts })
}

/// Participants and the grid slots they occupy, in canonical order:
/// by class name, then by position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    pub participants: Vec<(ClassId, usize)>,
}

/// Resolves `class -> count` into class ids in name order.
pub fn resolve_participants(onto: &Ontology, spec: &BTreeMap<String, u32>) -> Result<Vec<(ClassId, u32)>, SceneError> {
    let mut out = Vec::new();
    for (name, &n) in spec {
        let c = onto.class_id(name).ok_or_else(|| SceneError::NotAParticipant(name.clone()))?;
        let def = onto.class_def(c);
        if def.kind != ClassKind::Participant || def.is_abstract {
            return Err(SceneError::NotAParticipant(name.clone()));
        }
        if n > 0 {
            out.push((c, n));
        }
    }
    Ok(out)
}

/// Weather setups by name (all concrete ones when `filter` is empty).
pub fn resolve_weather(onto: &Ontology, filter: &[String]) -> Result<Vec<ClassId>, SceneError> {
    let all = onto.concrete_classes_of_kind(ClassKind::WeatherSetup);
    let names: Vec<&str> = if filter.is_empty() {
        all
    } else {
        let mut v = Vec::new();
        for f in filter {
            if !all.contains(&f.as_str()) {
                return Err(SceneError::NotAWeather(f.clone()));
            }
            v.push(f.as_str());
        }
        v.sort_unstable();
        v.dedup();
        v
    };
    Ok(names.into_iter().map(|n| onto.class_id(n).expect("listed class")).collect())
}

/// Every distinct way to put the participant multiset on the grid, treating
/// participants of one class as interchangeable. Sorted by placement signature.
pub fn enumerate_placements(
    onto: &Ontology,
    grid: &PositionGrid,
    participants: &[(ClassId, u32)],
) -> Result<Vec<Placement>, SceneError> {
    let total: usize = participants.iter().map(|&(_, n)| n as usize).sum();
    let n = grid.positions.len();
    if total > n {
        return Err(SceneError::Capacity { participants: total, positions: n });
    }
    let mut out = Vec::new();
    let mut used = vec![false; n];
    let mut current = Vec::with_capacity(total);
    place(participants, 0, 0, 0, &mut used, &mut current, &mut out);
    let mut keyed: Vec<(String, Placement)> =
        out.into_iter().map(|p| (placement_signature(onto, grid, &p), p)).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(keyed.into_iter().map(|(_, p)| p).collect())
}

fn place(
    classes: &[(ClassId, u32)],
    class_idx: usize,
    placed: u32,
    start: usize,
    used: &mut [bool],
    current: &mut Vec<(ClassId, usize)>,
    out: &mut Vec<Placement>,
) {
    let Some(&(class, count)) = classes.get(class_idx) else {
        out.push(Placement { participants: current.clone() });
        return;
    };
    if placed == count {
        place(classes, class_idx + 1, 0, 0, used, current, out);
        return;
    }
    for slot in start..used.len() {
        if used[slot] {
            continue;
        }
        used[slot] = true;
        current.push((class, slot));
        place(classes, class_idx, placed + 1, slot + 1, used, current, out);
        current.pop();
        used[slot] = false;
    }
}

/// `class@element.index` entries joined by `-`.
pub fn placement_signature(onto: &Ontology, grid: &PositionGrid, p: &Placement) -> String {
    let mut entries: Vec<String> = p
        .participants
        .iter()
        .map(|&(c, slot)| {
            let g = grid.positions[slot];
            format!("{}@{}.{}", onto.class_name(c), g.element, g.index)
        })
        .collect();
    entries.sort();
    entries.join("-")
}

/// n! / (n-k)!: placements when every participant is distinguishable.
pub fn raw_placement_count(positions: u64, participants: u64) -> u128 {
    (0..participants).map(|i| (positions - i) as u128).product()
}

/// n! / ((n-k)! * prod(k_i!)).
pub fn multinomial_placement_count(positions: u64, counts: &[u64]) -> u128 {
    let k: u64 = counts.iter().sum();
    let denominator: u128 = counts.iter().map(|&c| (1..=c as u128).product::<u128>()).product();
    raw_placement_count(positions, k) / denominator
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneParticipant {
    pub class: ClassId,
    pub element: usize,
    pub index: u32,
    pub maneuver: ClassId,
}

#[derive(Debug, Clone)]
pub struct Scene {
    /// Index into the run's layout list.
    pub layout: usize,
    /// Canonical order: class name, element, index.
    pub participants: Vec<SceneParticipant>,
    pub weather: ClassId,
    /// Comfort-only verdicts kept in critical mode.
    pub annotations: Vec<Verdict>,
    pub signature: String,
}

pub fn scene_signature(
    onto: &Ontology,
    layout_signature: &str,
    weather: ClassId,
    participants: &[SceneParticipant],
) -> String {
    let entries: Vec<(&str, usize, u32, &str)> = participants
        .iter()
        .map(|p| (onto.class_name(p.class), p.element, p.index, onto.class_name(p.maneuver)))
        .collect();
    format_scene_signature(layout_signature, onto.class_name(weather), entries)
}

/// `{layout}~{weather}~{class@element.index=maneuver, ...}` with entries
/// sorted by (class, element, index, maneuver) and joined by `-`.
pub fn format_scene_signature(
    layout_signature: &str,
    weather: &str,
    mut entries: Vec<(&str, usize, u32, &str)>,
) -> String {
    entries.sort();
    let entries: Vec<String> = entries.iter().map(|(c, e, i, m)| format!("{c}@{e}.{i}={m}")).collect();
    format!("{layout_signature}~{weather}~{}", entries.join("-"))
}

/// Shared, read-only settings for generating scenes of one run.
pub struct SceneGenerator<'a> {
    pub onto: &'a Ontology,
    pub reasoner: &'a Reasoner,
    pub mode: Mode,
    pub weather: Vec<ClassId>,
    on: crate::kb::PropertyId,
    can_perform: crate::kb::PropertyId,
    performs: crate::kb::PropertyId,
    maneuvers: Vec<ClassId>,
    incremental: bool,
}

/// Outcome for one placement.
#[derive(Debug, Default, Clone)]
pub struct PlacementOutcome {
    pub scenes: Vec<Scene>,
    /// Maneuver combinations checked (before weather crossing).
    pub candidates: usize,
    /// Combinations removed by constraint verdicts.
    pub eliminated: usize,
    /// Combinations with at least one forbidden verdict.
    pub forbidden: usize,
    /// Combinations whose only verdicts are comfort-only ones.
    pub comfort_only: usize,
    /// Per constraint rule: combinations in which it fired and that were removed.
    pub eliminated_by_rule: BTreeMap<String, usize>,
}

/// Fact store for one placement, before inference, with the participant
/// instances in placement order.
pub struct SceneFacts {
    pub store: FactStore,
    pub participants: Vec<InstanceId>,
}

impl<'a> SceneGenerator<'a> {
    pub fn new(
        onto: &'a Ontology,
        reasoner: &'a Reasoner,
        mode: Mode,
        weather: Vec<ClassId>,
    ) -> Result<Self, SceneError> {
        let performs = onto.require_property("performs")?;
        Ok(SceneGenerator {
            onto,
            reasoner,
            mode,
            weather,
            on: onto.require_property("on")?,
            can_perform: onto.require_property("can_perform")?,
            performs,
            maneuvers: onto.maneuver_ids(),
            incremental: reasoner.is_monotone_extension(&[Predicate::Property(performs)]),
        })
    }

    /// Base facts: layout, grid, participants with `on`, one instance per
    /// catalog maneuver.
    pub fn scene_facts(&self, grid: &PositionGrid, placement: &Placement) -> SceneFacts {
        let mut store = grid.facts.clone();
        let mut participants = Vec::with_capacity(placement.participants.len());
        for &(class, slot) in &placement.participants {
            let v = store.fresh_instance();
            store.assert_class(v, class);
            store.assert_property(v, self.on, grid.positions[slot].instance);
            participants.push(v);
        }
        for &m in &self.maneuvers {
            let x = store.fresh_instance();
            store.assert_class(x, m);
        }
        SceneFacts { store, participants }
    }

    /// Maneuver classes derivable for each participant, in catalog order.
    pub fn maneuver_sets(&self, store: &FactStore, participants: &[InstanceId]) -> Vec<Vec<ClassId>> {
        participants
            .iter()
            .map(|&v| {
                let mut set: Vec<ClassId> = Vec::new();
                for m in store.objects(v, self.can_perform) {
                    for &c in store.classes_of(m) {
                        if self.maneuvers.contains(&c) && !set.contains(&c) {
                            set.push(c);
                        }
                    }
                }
                set.sort_by_key(|c| self.maneuvers.iter().position(|m| m == c));
                set
            })
            .collect()
    }

    fn maneuver_instance(&self, store: &FactStore, class: ClassId) -> InstanceId {
        store.instances_of(class)[0]
    }

    /// Adds `performs` facts for one assignment and closes the store again.
    pub fn assign(
        &self,
        base: &FactStore,
        closed: &FactStore,
        participants: &[InstanceId],
        assignment: &[ClassId],
        trace: Option<&mut Vec<Derivation>>,
    ) -> FactStore {
        let (mut store, generation) =
            if self.incremental { (closed.clone(), closed.generation()) } else { (base.clone(), 0) };
        for (&v, &m) in participants.iter().zip(assignment) {
            let mi = self.maneuver_instance(closed, m);
            store.assert_property(v, self.performs, mi);
        }
        self.reasoner.infer_incremental(&mut store, generation, trace);
        store
    }

    pub fn generate(
        &self,
        layout_index: usize,
        layout: &LayoutInstance,
        grid: &PositionGrid,
        placement: &Placement,
    ) -> Result<PlacementOutcome, SceneError> {
        let SceneFacts { store: base, participants } = self.scene_facts(grid, placement);
        let mut closed = base.clone();
        self.reasoner.infer_to_fixpoint(&mut closed);
        let sets = self.maneuver_sets(&closed, &participants);
        for (set, &(class, slot)) in sets.iter().zip(&placement.participants) {
            if set.is_empty() {
                let g = grid.positions[slot];
                return Err(SceneError::NoManeuver {
                    layout: layout.signature.clone(),
                    class: self.onto.class_name(class).to_owned(),
                    element: g.element,
                    index: g.index,
                });
            }
        }

        let mut outcome = PlacementOutcome::default();
        let mut choice = vec![0usize; sets.len()];
        loop {
            let assignment: Vec<ClassId> = choice.iter().zip(&sets).map(|(&i, s)| s[i]).collect();
            let store = self.assign(&base, &closed, &participants, &assignment, None);
            let verdicts = self.reasoner.check_constraints(&store);
            outcome.candidates += 1;
            let forbidden = verdicts.iter().any(|v| v.kind == VerdictKind::Forbidden);
            let comfort_only = verdicts.iter().any(|v| v.kind == VerdictKind::InvalidComfortOnly);
            if forbidden {
                outcome.forbidden += 1;
            } else if comfort_only {
                outcome.comfort_only += 1;
            }
            if forbidden || (comfort_only && self.mode == Mode::Comfort) {
                outcome.eliminated += 1;
                let mut rules: Vec<&str> = verdicts.iter().map(|v| v.rule.as_str()).collect();
                rules.dedup();
                for r in rules {
                    *outcome.eliminated_by_rule.entry(r.to_owned()).or_default() += 1;
                }
            } else {
                let scene_participants: Vec<SceneParticipant> = placement
                    .participants
                    .iter()
                    .zip(&assignment)
                    .map(|(&(class, slot), &maneuver)| {
                        let g = grid.positions[slot];
                        SceneParticipant { class, element: g.element, index: g.index, maneuver }
                    })
                    .collect();
                for &w in &self.weather {
                    outcome.scenes.push(Scene {
                        layout: layout_index,
                        signature: scene_signature(self.onto, &layout.signature, w, &scene_participants),
                        participants: scene_participants.clone(),
                        weather: w,
                        annotations: verdicts.clone(),
                    });
                }
            }

            let mut i = 0;
            loop {
                if i == sets.len() {
                    return Ok(outcome);
                }
                choice[i] += 1;
                if choice[i] < sets[i].len() {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
        }
    }
}
