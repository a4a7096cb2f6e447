//! Graphviz export of the tree structure.

use super::{FaultMaintenanceTree, NodeKind};
use std::fmt::Write;

/// Render the tree as a DOT digraph: EBEs as circles, events and gates as
/// boxes, RDEP vertices as diamonds with a dashed trigger edge.
pub fn to_dot(tree: &FaultMaintenanceTree) -> String {
    let mut out = String::from("digraph fmt {\n  rankdir=BT;\n");
    for node in tree.nodes.values() {
        let id = escape(node.id.as_str());
        match &node.kind {
            NodeKind::Ebe { params } => {
                let label = if params.label.is_empty() {
                    node.id.as_str().to_string()
                } else {
                    format!("{}\\n{}", node.id, params.label)
                };
                let style = if params.shadow_of.is_some() {
                    ",style=dashed"
                } else {
                    ""
                };
                let _ = writeln!(
                    out,
                    "  \"{id}\" [shape=circle,label=\"{}\"{style}];",
                    escape(&label)
                );
            }
            NodeKind::Or => {
                let _ = writeln!(out, "  \"{id}\" [shape=box,label=\"{id}\\nOR\"];");
            }
            NodeKind::Event { name } => {
                let _ = writeln!(
                    out,
                    "  \"{id}\" [shape=box,label=\"{}\"];",
                    escape(name)
                );
            }
            NodeKind::Rdep { params } => {
                let _ = writeln!(
                    out,
                    "  \"{id}\" [shape=diamond,label=\"RDEP\\n\u{3b3}={}\"];",
                    params.gamma
                );
                let _ = writeln!(
                    out,
                    "  \"{}\" -> \"{id}\" [style=dashed,label=\"trigger\"];",
                    escape(params.trigger.as_str())
                );
            }
        }
        for child in &node.children {
            let _ = writeln!(out, "  \"{}\" -> \"{id}\";", escape(child.as_str()));
        }
    }
    out.push_str("}\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
