//! JSON (de)serialization of the model schema.

use super::{CostModel, FaultMaintenanceTree, FmtNode, MaintenancePolicy, NodeId};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    /// Syntax errors and unknown node kinds; carries serde's line/column.
    #[error("model syntax error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported format_version {0} (expected {FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("duplicate node id {0}")]
    DuplicateNodeId(NodeId),
    #[error("node {from} references undefined node {to}")]
    DanglingReference { from: NodeId, to: NodeId },
    #[error("top event {0} is not defined")]
    UnknownTop(NodeId),
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    comment: Option<String>,
    nodes: Vec<FmtNode>,
    top: NodeId,
    policy: MaintenancePolicy,
    #[serde(default)]
    costs: CostModel,
}

/// Parse a model document. Catches syntax errors, unknown kinds, duplicate
/// ids and dangling references; deeper well-formedness is `validate`'s job.
pub fn parse_model(text: &str) -> Result<FaultMaintenanceTree, ParseError> {
    let doc: ModelDoc = serde_json::from_str(text)?;
    if doc.format_version != FORMAT_VERSION {
        return Err(ParseError::UnsupportedVersion(doc.format_version));
    }
    let mut nodes: IndexMap<NodeId, FmtNode> = IndexMap::with_capacity(doc.nodes.len());
    for node in doc.nodes {
        if nodes.insert(node.id.clone(), node.clone()).is_some() {
            return Err(ParseError::DuplicateNodeId(node.id));
        }
    }
    for node in nodes.values() {
        for child in &node.children {
            if !nodes.contains_key(child) {
                return Err(ParseError::DanglingReference {
                    from: node.id.clone(),
                    to: child.clone(),
                });
            }
        }
    }
    if !nodes.contains_key(&doc.top) {
        return Err(ParseError::UnknownTop(doc.top));
    }
    Ok(FaultMaintenanceTree {
        nodes,
        top: doc.top,
        policy: doc.policy,
        costs: doc.costs,
    })
}

/// Serialize a tree back into the model schema (pretty-printed).
pub fn serialize_model(tree: &FaultMaintenanceTree) -> String {
    let doc = ModelDoc {
        format_version: FORMAT_VERSION,
        comment: None,
        nodes: tree.nodes.values().cloned().collect(),
        top: tree.top.clone(),
        policy: tree.policy.clone(),
        costs: tree.costs.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("model serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;

    const SINGLE_EBE: &str = r#"{
        "format_version": 1,
        "nodes": [
            {"id": "pump", "kind": "ebe",
             "params": {"degradation_levels": 3, "mttf": "10y", "erlang_phases": 2, "label": "pump wear"}}
        ],
        "top": "pump",
        "policy": {"t_cln": "1d", "t_rpl": "7d", "timer_phases": 3}
    }"#;

    #[test]
    fn parses_single_ebe_document() {
        let tree = parse_model(SINGLE_EBE).unwrap();
        assert_eq!(tree.validate(), vec![]);
        assert!(tree.nodes[&NodeId::from("pump")].is_ebe());
        assert_eq!(tree.top, NodeId::from("pump"));
        assert_eq!(tree.policy.timer_phases, 3);
    }

    #[test]
    fn round_trips() {
        let tree = parse_model(SINGLE_EBE).unwrap();
        let text = serialize_model(&tree);
        assert_eq!(parse_model(&text).unwrap(), tree);
    }

    #[test]
    fn dangling_reference_rejected() {
        let text = r#"{
            "format_version": 1,
            "nodes": [
                {"id": "a", "kind": "ebe",
                 "params": {"degradation_levels": 1, "mttf": "1y", "erlang_phases": 1}},
                {"id": "g", "kind": "or", "children": ["a", "x9"]}
            ],
            "top": "g",
            "policy": {"t_cln": "1d", "t_rpl": "7d"}
        }"#;
        match parse_model(text) {
            Err(ParseError::DanglingReference { to, .. }) => assert_eq!(to, NodeId::from("x9")),
            other => panic!("expected dangling reference, got {other:?}"),
        }
    }

    #[test]
    fn unknown_kind_rejected() {
        let text = SINGLE_EBE.replace("\"ebe\"", "\"nand\"");
        assert!(matches!(parse_model(&text), Err(ParseError::Json(_))));
    }

    #[test]
    fn syntax_error_carries_location() {
        let err = parse_model("{ not json").unwrap_err();
        assert!(err.to_string().contains("line"));
    }
}
