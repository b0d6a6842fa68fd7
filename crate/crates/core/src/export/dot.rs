//! Graphviz rendering of a scene graph.

use super::{NodeKind, SceneGraphDocument};

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn quote(s: &str) -> String {
    format!("\"{}\"", escape(s))
}

fn style(kind: NodeKind) -> &'static str {
    match kind {
        NodeKind::Scene => "shape=box, style=filled, fillcolor=gray",
        NodeKind::Vehicle => "shape=box, style=filled, fillcolor=red",
        NodeKind::Position => "shape=box, style=filled, fillcolor=green",
        NodeKind::InfrastructureElement => "shape=ellipse, style=filled, fillcolor=lightblue",
        NodeKind::TrafficRule => "shape=octagon, style=filled, fillcolor=yellow",
        NodeKind::Weather => "shape=ellipse, style=filled, fillcolor=lightcyan",
    }
}

pub fn to_dot(doc: &SceneGraphDocument) -> String {
    let mut out = String::from("digraph scene {\n  rankdir=LR;\n");
    out.push_str(&format!("  label={};\n", quote(&doc.signature)));
    for n in &doc.nodes {
        out.push_str(&format!(
            "  {} [label=\"{}\\n{}\", {}];\n",
            quote(&n.id),
            escape(&n.class),
            escape(&n.id),
            style(n.kind)
        ));
    }
    for e in &doc.edges {
        out.push_str(&format!("  {} -> {} [label={}];\n", quote(&e.from), quote(&e.to), quote(&e.relation)));
    }
    out.push_str("}\n");
    out
}
