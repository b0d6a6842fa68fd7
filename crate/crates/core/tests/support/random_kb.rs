//! Random knowledge bases that pass validation.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;
use sceneforge_core::format::parse_rule;
use sceneforge_core::kb::{
    Cardinality, ClassDef, ClassKind, CompositionAxiom, CompositionMode, KnowledgeBase, Layer, LinkKind, Note,
    ParameterDef, ParameterLink, PropertyDef, PropertyKind,
};

fn pick<'a>(rng: &mut StdRng, xs: &'a [String]) -> &'a str {
    xs.choose(rng).expect("non-empty choice")
}

pub fn random_kb(rng: &mut StdRng, index: usize) -> KnowledgeBase {
    use ClassKind::*;
    let road = Some(Layer::Road);
    let infra = Some(Layer::TrafficInfrastructure);
    let objects = Some(Layer::Objects);
    let env = Some(Layer::Environment);

    let mut classes = vec![
        ClassDef::new("road_layout", None, road, Element).abstract_class(),
        ClassDef::new("element", None, road, Element).abstract_class(),
        ClassDef::new("position", None, road, Position),
        ClassDef::new("traffic_rule", None, infra, TrafficRule).abstract_class(),
        ClassDef::new("vehicle", None, objects, Participant).abstract_class(),
        ClassDef::new("maneuver", None, objects, Maneuver).abstract_class(),
        ClassDef::new("weather_setup", None, env, WeatherSetup).abstract_class(),
    ];
    let layouts: Vec<String> = (0..rng.gen_range(1..=3)).map(|i| format!("layout_{i}")).collect();
    for l in &layouts {
        classes.push(ClassDef::new(l, Some("road_layout"), road, Element));
    }
    let mut elements: Vec<String> = Vec::new();
    for i in 0..rng.gen_range(2..=6) {
        let name = format!("element_{i}");
        let parent = if elements.is_empty() || rng.gen_bool(0.6) {
            "element".to_owned()
        } else {
            pick(rng, &elements).to_owned()
        };
        let layer = if rng.gen_bool(0.7) { road } else { infra };
        classes.push(ClassDef::new(&name, Some(&parent), layer, Element));
        elements.push(name);
    }
    let rules: Vec<String> = (0..rng.gen_range(0..=3)).map(|i| format!("rule_{i}")).collect();
    for r in &rules {
        classes.push(ClassDef::new(r, Some("traffic_rule"), infra, TrafficRule));
    }
    let vehicles: Vec<String> = (0..rng.gen_range(1..=3)).map(|i| format!("vehicle_{i}")).collect();
    for v in &vehicles {
        classes.push(ClassDef::new(v, Some("vehicle"), objects, Participant));
    }
    let maneuvers: Vec<String> = (0..rng.gen_range(1..=4)).map(|i| format!("maneuver_{i}")).collect();
    for m in &maneuvers {
        classes.push(ClassDef::new(m, Some("maneuver"), objects, Maneuver));
    }
    for i in 0..rng.gen_range(1..=3) {
        classes.push(ClassDef::new(&format!("weather_{i}"), Some("weather_setup"), env, WeatherSetup));
    }
    classes.shuffle(rng);

    let mut properties = vec![
        PropertyDef::new("left_of", PropertyKind::Arrangement, Some("right_of"), "element", "element"),
        PropertyDef::new("right_of", PropertyKind::Arrangement, Some("left_of"), "element", "element"),
        PropertyDef::new("offers_position", PropertyKind::Structural, None, "element", "position"),
        PropertyDef::new("on", PropertyKind::Structural, None, "vehicle", "position"),
        PropertyDef::new("can_perform", PropertyKind::Behavioral, None, "vehicle", "maneuver"),
        PropertyDef::new("performs", PropertyKind::Behavioral, None, "vehicle", "maneuver"),
    ];
    if rng.gen_bool(0.5) {
        properties.push(PropertyDef::new(
            "ahead_of",
            PropertyKind::Arrangement,
            Some("behind_of"),
            "position",
            "position",
        ));
        properties.push(PropertyDef::new(
            "behind_of",
            PropertyKind::Arrangement,
            Some("ahead_of"),
            "position",
            "position",
        ));
    }
    properties.shuffle(rng);

    let modes = [CompositionMode::Mandatory, CompositionMode::Optional, CompositionMode::Enabled];
    let mut compositions = Vec::new();
    for l in &layouts {
        let mut parts: Vec<String> = elements.iter().chain(&rules).cloned().collect();
        parts.shuffle(rng);
        parts.truncate(rng.gen_range(1..=parts.len()));
        let element_parts: Vec<String> = parts.iter().filter(|p| elements.contains(p)).cloned().collect();
        for p in &parts {
            let is_rule = rules.contains(p);
            let mode = if is_rule { CompositionMode::Enabled } else { *modes[..2].choose(rng).unwrap() };
            let min = if mode == CompositionMode::Mandatory { rng.gen_range(1..=2) } else { rng.gen_range(0..=1) };
            let max = min.max(1) + rng.gen_range(0..=2);
            let cardinality = Cardinality::range(min, max);
            let mut a = CompositionAxiom::new(l, p, mode, cardinality).at(rng.gen_range(-3..=3));
            let others: Vec<String> = parts.iter().filter(|q| *q != p).cloned().collect();
            if !others.is_empty() && rng.gen_bool(0.3) {
                a = a.requiring(pick(rng, &others), rng.gen_range(1..=2));
            }
            if !others.is_empty() && rng.gen_bool(0.2) {
                a = a.excluding(pick(rng, &others));
            }
            if is_rule && !element_parts.is_empty() && rng.gen_bool(0.4) {
                a = a.scoped_to(pick(rng, &element_parts));
            }
            compositions.push(a);
        }
    }
    compositions.shuffle(rng);

    let all_classes: Vec<String> = classes.iter().map(|c| c.name.clone()).collect();
    let parameters = (0..rng.gen_range(0..=3))
        .map(|i| ParameterDef {
            name: format!("parameter_{i}"),
            unit: ["m", "km/h", "", "m/s²"].choose(rng).unwrap().to_string(),
            links: (0..rng.gen_range(0..=3))
                .map(|_| ParameterLink {
                    class: pick(rng, &all_classes).to_owned(),
                    kind: if rng.gen_bool(0.5) { LinkKind::Includes } else { LinkKind::Influences },
                })
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect(),
        })
        .collect();

    let mut rule_texts = Vec::new();
    for (i, m) in maneuvers.iter().enumerate() {
        let v = pick(rng, &vehicles);
        let text = match rng.gen_range(0..3) {
            0 => format!("{v}(?v), on(?v, ?p) -> can_perform(?v, {m})"),
            1 => format!(
                "vehicle(?v), on(?v, ?p), offers_position({}, ?p) -> can_perform(?v, {m})",
                pick(rng, &elements)
            ),
            _ => format!("vehicle(?v), on(?v, ?p), not performs(?v, {m}) -> can_perform(?v, {m})"),
        };
        rule_texts.push((format!("can_{i}"), text));
    }
    if rng.gen_bool(0.7) {
        let m = pick(rng, &maneuvers);
        let r = if rules.is_empty() { "traffic_rule".to_owned() } else { pick(rng, &rules).to_owned() };
        rule_texts.push(("ban".to_owned(), format!("vehicle(?v), performs(?v, {m}), {r}(?r) -> forbidden")));
    }
    if rng.gen_bool(0.5) {
        let m = pick(rng, &maneuvers);
        rule_texts.push((
            "crowded".to_owned(),
            format!(
                "performs(?a, {m}), on(?a, ?p), performs(?b, {m}), on(?b, ?q), left_of(?p, ?q) -> invalid_comfort_only"
            ),
        ));
    }
    let kb_rules = rule_texts.iter().map(|(n, t)| parse_rule(n, t).unwrap_or_else(|e| panic!("{t}: {e}"))).collect();

    let mut catalog = maneuvers.clone();
    catalog.shuffle(rng);
    let texts = ["plain text", "quotes \" and \\ backslashes", "ünïcödé ⟶ arrows", "tab\tand\nnewline"];
    let metadata = (0..rng.gen_range(0..=3))
        .map(|i| Note { name: format!("note_{i}"), text: texts.choose(rng).unwrap().to_string() })
        .collect();

    KnowledgeBase {
        name: format!("random_{index}"),
        classes,
        properties,
        compositions,
        parameters,
        rules: kb_rules,
        maneuvers: catalog,
        metadata,
    }
}
