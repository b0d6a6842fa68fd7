//! Scene graph documents and the renderers built on them.
//!
//! Every renderer works from a [`SceneGraphDocument`], so text, HTML and DOT
//! output always describe the same entities.

pub mod dot;
pub mod html;
pub mod text;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::kb::{InstanceId, LinkKind, Ontology};
use crate::layout::{format_layout_signature, LayoutInstance};
use crate::scene::{format_scene_signature, PositionGrid, Scene};

pub use text::Templates;

#[derive(Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Scene,
    Vehicle,
    Position,
    InfrastructureElement,
    TrafficRule,
    Weather,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    pub class: String,
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub relation: String,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub rule: String,
    pub verdict: String,
    pub bindings: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq, Default)]
pub struct CatalogMetadata {
    pub kb_name: String,
    pub config: serde_json::Value,
    /// Seconds since the Unix epoch, taken from `SOURCE_DATE_EPOCH`; absent otherwise.
    pub generated_at: Option<u64>,
    pub tool_version: String,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
pub struct SceneGraphDocument {
    pub signature: String,
    pub mode: String,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
    pub metadata: CatalogMetadata,
}

pub const SCENE_NODE: &str = "scene";
pub const WEATHER_NODE: &str = "weather";

/// Everything needed to describe one scene.
#[derive(Clone, Copy)]
pub struct SceneView<'a> {
    pub onto: &'a Ontology,
    pub layout: &'a LayoutInstance,
    pub grid: &'a PositionGrid,
    pub scene: &'a Scene,
}

impl SceneView<'_> {
    /// Instance id of the k-th participant (participants follow the positions).
    pub fn participant_instance(&self, k: usize) -> InstanceId {
        let first = self.grid.positions.last().map_or(0, |p| p.instance.0 + 1);
        InstanceId(first + k as u32)
    }
}

fn id(x: InstanceId) -> String {
    x.to_string()
}

fn labels<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect()
}

fn parameter_labels(onto: &Ontology, class: &str) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for (key, kind) in [("includes", LinkKind::Includes), ("influences", LinkKind::Influences)] {
        let names: Vec<&str> = onto
            .kb()
            .parameters
            .iter()
            .filter(|p| p.links.iter().any(|l| l.kind == kind && l.class == class))
            .map(|p| p.name.as_str())
            .collect();
        if !names.is_empty() {
            out.insert(key.to_owned(), names.join(","));
        }
    }
    out
}

pub fn to_scene_graph(view: SceneView<'_>, mode: &str, metadata: &CatalogMetadata) -> SceneGraphDocument {
    let SceneView { onto, layout, grid, scene } = view;
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let edge = |from: String, to: String, relation: &str| Edge { from, to, relation: relation.to_owned() };

    nodes.push(Node { id: SCENE_NODE.into(), kind: NodeKind::Scene, class: "scene".into(), labels: BTreeMap::new() });
    let root = id(layout.root);
    nodes.push(Node {
        id: root.clone(),
        kind: NodeKind::InfrastructureElement,
        class: onto.class_name(layout.class).into(),
        labels: labels([("role", "layout".into())]),
    });
    edges.push(edge(SCENE_NODE.into(), root.clone(), "consists_of"));

    for (k, e) in layout.elements.iter().enumerate() {
        let class = onto.class_name(e.class);
        let mut l = parameter_labels(onto, class);
        l.insert("lateral".into(), k.to_string());
        nodes.push(Node { id: id(e.instance), kind: NodeKind::InfrastructureElement, class: class.into(), labels: l });
        edges.push(edge(root.clone(), id(e.instance), "consists_of"));
    }
    for w in layout.elements.windows(2) {
        edges.push(edge(id(w[0].instance), id(w[1].instance), "left_of"));
    }
    for r in &layout.rules {
        nodes.push(Node {
            id: id(r.instance),
            kind: NodeKind::TrafficRule,
            class: onto.class_name(r.class).into(),
            labels: BTreeMap::new(),
        });
        edges.push(edge(root.clone(), id(r.instance), "enables"));
        if let Some(scope) = r.scope {
            edges.push(edge(id(r.instance), id(scope), "applies_to"));
        }
    }
    let weather = onto.class_name(scene.weather);
    nodes.push(Node {
        id: WEATHER_NODE.into(),
        kind: NodeKind::Weather,
        class: weather.into(),
        labels: parameter_labels(onto, weather),
    });
    edges.push(edge(root.clone(), WEATHER_NODE.into(), "has_weather"));

    for p in &grid.positions {
        nodes.push(Node {
            id: id(p.instance),
            kind: NodeKind::Position,
            class: "position".into(),
            labels: labels([("element", p.element.to_string()), ("index", p.index.to_string())]),
        });
        edges.push(edge(id(layout.elements[p.element].instance), id(p.instance), "offers_position"));
    }
    for (i, a) in grid.positions.iter().enumerate() {
        for b in &grid.positions[i + 1..] {
            if a.element == b.element && b.index == a.index + 1 {
                edges.push(edge(id(a.instance), id(b.instance), "in_front_of"));
            }
            if a.index == b.index && b.element == a.element + 1 {
                edges.push(edge(id(a.instance), id(b.instance), "left_of"));
            }
        }
    }

    for (k, p) in scene.participants.iter().enumerate() {
        let v = id(view.participant_instance(k));
        let position = grid
            .positions
            .iter()
            .find(|g| g.element == p.element && g.index == p.index)
            .expect("participant stands on a grid position");
        nodes.push(Node {
            id: v.clone(),
            kind: NodeKind::Vehicle,
            class: onto.class_name(p.class).into(),
            labels: BTreeMap::new(),
        });
        edges.push(edge(v.clone(), id(position.instance), "on"));
        edges.push(edge(SCENE_NODE.into(), v, onto.class_name(p.maneuver)));
    }

    let annotations = scene
        .annotations
        .iter()
        .map(|v| Annotation {
            rule: v.rule.clone(),
            verdict: v.kind.keyword().into(),
            bindings: v.bindings.iter().map(|(k, x)| (k.clone(), id(*x))).collect(),
        })
        .collect();

    SceneGraphDocument {
        signature: scene.signature.clone(),
        mode: mode.into(),
        nodes,
        edges,
        annotations,
        metadata: metadata.clone(),
    }
}

impl SceneGraphDocument {
    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn nodes_of(&self, kind: NodeKind) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(move |n| n.kind == kind)
    }

    pub fn targets<'a>(&'a self, from: &'a str, relation: &'a str) -> impl Iterator<Item = &'a Node> + 'a {
        self.edges.iter().filter(move |e| e.from == from && e.relation == relation).filter_map(|e| self.node(&e.to))
    }

    pub fn layout_root(&self) -> Option<&Node> {
        self.targets(SCENE_NODE, "consists_of").next()
    }

    /// Cross-section elements, left to right.
    pub fn elements(&self) -> Vec<&Node> {
        let Some(root) = self.layout_root() else { return Vec::new() };
        let mut v: Vec<&Node> = self.targets(&root.id, "consists_of").collect();
        v.sort_by_key(|n| n.labels.get("lateral").and_then(|l| l.parse::<usize>().ok()));
        v
    }

    pub fn rules(&self) -> Vec<&Node> {
        let Some(root) = self.layout_root() else { return Vec::new() };
        self.targets(&root.id, "enables").collect()
    }

    pub fn weather(&self) -> Option<&Node> {
        self.nodes_of(NodeKind::Weather).next()
    }

    /// `(position node, element index, longitudinal index)` for a node id.
    pub fn position_cell(&self, position: &str) -> Option<(usize, u32)> {
        let n = self.node(position)?;
        Some((n.labels.get("element")?.parse().ok()?, n.labels.get("index")?.parse().ok()?))
    }

    /// Participants as `(node, element, index, maneuver)` in lane-major order.
    pub fn participants(&self) -> Vec<(&Node, usize, u32, &str)> {
        let mut out: Vec<(&Node, usize, u32, &str)> = self
            .nodes_of(NodeKind::Vehicle)
            .filter_map(|v| {
                let on = self.edges.iter().find(|e| e.from == v.id && e.relation == "on")?;
                let (element, index) = self.position_cell(&on.to)?;
                let maneuver = self.edges.iter().find(|e| e.from == SCENE_NODE && e.to == v.id)?;
                Some((v, element, index, maneuver.relation.as_str()))
            })
            .collect();
        out.sort_by(|a, b| (a.1, a.2, &a.0.class).cmp(&(b.1, b.2, &b.0.class)));
        out
    }

    /// Recomputes the scene signature from the graph alone.
    pub fn recompute_signature(&self) -> Option<String> {
        let root = self.layout_root()?;
        let elements: Vec<&str> = self.elements().iter().map(|n| n.class.as_str()).collect();
        let rules: Vec<&str> = self.rules().iter().map(|n| n.class.as_str()).collect();
        let layout = format_layout_signature(&root.class, &elements, &rules);
        let entries = self.participants().into_iter().map(|(n, e, i, m)| (n.class.as_str(), e, i, m)).collect();
        Some(format_scene_signature(&layout, &self.weather()?.class, entries))
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("document serializes")
    }
}

/// Scene page file name: `scene-<signature>.html`, shortened with a hash
/// suffix when the signature would exceed common file-name limits.
pub fn scene_file_name(signature: &str, extension: &str) -> String {
    use sha2::{Digest, Sha256};
    const LIMIT: usize = 240;
    let full = format!("scene-{signature}.{extension}");
    if full.len() <= LIMIT {
        return full;
    }
    let digest = Sha256::digest(signature.as_bytes());
    let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    let keep = LIMIT - extension.len() - hex.len() - "scene-".len() - 3;
    format!("scene-{}-h{hex}.{extension}", &signature[..keep])
}
