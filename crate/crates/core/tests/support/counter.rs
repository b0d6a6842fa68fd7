//! Scene counting for the bundled motorway knowledge base, with its
//! maneuver and constraint rules written out directly over grid geometry.

/// Traffic rules of a layout that influence scene validity.
#[derive(Clone, Copy, Debug)]
pub struct RuleFlags {
    pub no_passing_sign: bool,
    pub no_passing_for_trucks: bool,
}

pub const NO_RULES: RuleFlags = RuleFlags { no_passing_sign: false, no_passing_for_trucks: false };

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub candidates: u64,
    pub comfort: u64,
    pub critical: u64,
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.candidates += o.candidates;
        self.comfort += o.comfort;
        self.critical += o.critical;
    }
}

impl std::ops::Mul<u64> for Counts {
    type Output = Counts;
    fn mul(self, k: u64) -> Counts {
        Counts { candidates: self.candidates * k, comfort: self.comfort * k, critical: self.critical * k }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum M {
    Follow,
    Approach,
    LaneChangeLeft,
    LaneChangeRight,
    FallBack,
    StartFromStand,
}

/// Counts maneuver combinations over all placements of the participant
/// classes `kinds`, given as `(is_truck, count)`, on `lanes` lanes with
/// `per_lane` positions each. Lane 0 is leftmost, index 0 is the front.
pub fn count(lanes: usize, per_lane: usize, kinds: &[(bool, usize)], rules: RuleFlags) -> Counts {
    let cells: Vec<(usize, usize)> = (0..lanes).flat_map(|l| (0..per_lane).map(move |i| (l, i))).collect();
    let mut total = Counts::default();
    let mut occupant: Vec<Option<bool>> = vec![None; cells.len()];
    place(&cells, kinds, 0, 0, &mut occupant, lanes, per_lane, rules, &mut total);
    total
}

#[allow(clippy::too_many_arguments)]
fn place(
    cells: &[(usize, usize)],
    kinds: &[(bool, usize)],
    kind: usize,
    from: usize,
    occupant: &mut Vec<Option<bool>>,
    lanes: usize,
    per_lane: usize,
    rules: RuleFlags,
    total: &mut Counts,
) {
    let Some(&(is_truck, n)) = kinds.get(kind) else {
        *total += evaluate(cells, occupant, lanes, per_lane, rules);
        return;
    };
    if n == 0 {
        place(cells, kinds, kind + 1, 0, occupant, lanes, per_lane, rules, total);
        return;
    }
    // Same-class vehicles are placed in increasing cell order.
    let rest: Vec<(bool, usize)> =
        kinds.iter().enumerate().map(|(k, &(t, m))| if k == kind { (t, m - 1) } else { (t, m) }).collect();
    for c in from..cells.len() {
        if occupant[c].is_none() {
            occupant[c] = Some(is_truck);
            let next_from = if n > 1 { c + 1 } else { 0 };
            let next_kind = if n > 1 { kind } else { kind + 1 };
            place(cells, &rest, next_kind, next_from, occupant, lanes, per_lane, rules, total);
            occupant[c] = None;
        }
    }
}

fn evaluate(
    cells: &[(usize, usize)],
    occupant: &[Option<bool>],
    lanes: usize,
    per_lane: usize,
    rules: RuleFlags,
) -> Counts {
    let at = |l: usize, i: usize| occupant[l * per_lane + i];
    let free_target = |l: usize, i: usize| at(l, i).is_none() && (i == 0 || at(l, i - 1).is_none());
    let vehicles: Vec<(usize, usize, bool)> =
        cells.iter().zip(occupant).filter_map(|(&(l, i), o)| o.map(|t| (l, i, t))).collect();
    let sets: Vec<Vec<M>> = vehicles
        .iter()
        .map(|&(l, i, _)| {
            let mut s = vec![M::Follow];
            let ahead = (0..i).any(|j| at(l, j).is_some());
            if ahead {
                s.push(M::Approach);
            }
            if l > 0 && free_target(l - 1, i) {
                s.push(M::LaneChangeLeft);
            }
            if l + 1 < lanes && free_target(l + 1, i) {
                s.push(M::LaneChangeRight);
            }
            if ahead {
                s.push(M::FallBack);
            }
            s.push(M::StartFromStand);
            s
        })
        .collect();
    let mut counts = Counts::default();
    let mut choice = vec![0usize; sets.len()];
    loop {
        let pick: Vec<M> = choice.iter().zip(&sets).map(|(&c, s)| s[c]).collect();
        let forbidden = vehicles.iter().zip(&pick).any(|(&(_, _, truck), &m)| {
            m == M::LaneChangeLeft && (rules.no_passing_sign || (truck && rules.no_passing_for_trucks))
        });
        let shared = vehicles.iter().zip(&pick).any(|(&(la, ia, _), &ma)| {
            ma == M::LaneChangeLeft
                && vehicles
                    .iter()
                    .zip(&pick)
                    .any(|(&(lb, ib, _), &mb)| mb == M::LaneChangeRight && ib == ia && lb + 2 == la)
        });
        counts.candidates += 1;
        if !forbidden {
            counts.critical += 1;
            if !shared {
                counts.comfort += 1;
            }
        }
        let Some(k) = (0..sets.len()).find(|&k| choice[k] + 1 < sets[k].len()) else { break };
        choice[k] += 1;
        choice[..k].fill(0);
    }
    counts
}

/// Totals over every layout of a motorway class with `lanes` lanes. Element
/// variants: optional median barrier (2) times embankment with optional guard
/// rail (3). Speed rules: none, sign, or per-lane limit when lanes >= 3.
/// Passing rules: none, no-passing sign, or no passing for trucks.
pub fn motorway_total(lanes: usize, per_lane: usize, kinds: &[(bool, usize)], weather: u64) -> Counts {
    let element_variants = 2 * 3;
    let speed_variants = if lanes >= 3 { 3 } else { 2 };
    let mut total = Counts::default();
    for rules in [
        NO_RULES,
        RuleFlags { no_passing_sign: true, no_passing_for_trucks: false },
        RuleFlags { no_passing_sign: false, no_passing_for_trucks: true },
    ] {
        total += count(lanes, per_lane, kinds, rules);
    }
    total * (element_variants * speed_variants * weather)
}
