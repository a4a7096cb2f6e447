//! The fault-maintenance-tree model: a typed DAG of degrading components
//! (EBEs), OR gates, rate-dependency (RDEP) gates and intermediate events,
//! together with the maintenance policy and cost model that apply to it.

mod dot;
mod parse;

pub use dot::to_dot;
pub use parse::{parse_model, serialize_model, ParseError, FORMAT_VERSION};

use crate::duration::Duration;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::fmt;

/// Unique node identifier within one tree.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(s: impl Into<String>) -> Self {
        NodeId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

/// Parameters of an extended basic event: a component degrading through
/// `degradation_levels` discrete levels towards failure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EbeParams {
    /// Number of degradation levels N between `new` and `failed`.
    pub degradation_levels: u32,
    /// Mean time to failure; the per-level delay is mttf / N.
    pub mttf: Duration,
    /// Erlang phases used to approximate each per-level delay.
    pub erlang_phases: u32,
    #[serde(default)]
    pub label: String,
    /// Set on structural duplicates inserted for RDEP decomposition; a
    /// shadow shares the stochastic identity of the node it points to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shadow_of: Option<NodeId>,
}

impl EbeParams {
    /// Per-level degradation delay Td = mttf / N.
    pub fn level_delay(&self) -> Duration {
        Duration::from_years(self.mttf.years() / self.degradation_levels as f64)
    }
}

/// Parameters of a rate-dependency gate: while `trigger` is failed, its
/// dependent children degrade faster by `gamma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdepParams {
    pub gamma: f64,
    pub trigger: NodeId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeKind {
    Ebe { params: EbeParams },
    Or,
    Rdep { params: RdepParams },
    Event { name: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FmtNode {
    pub id: NodeId,
    #[serde(flatten)]
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<NodeId>,
}

impl FmtNode {
    pub fn is_ebe(&self) -> bool {
        matches!(self.kind, NodeKind::Ebe { .. })
    }

    pub fn is_rdep(&self) -> bool {
        matches!(self.kind, NodeKind::Rdep { .. })
    }

    pub fn ebe_params(&self) -> Option<&EbeParams> {
        match &self.kind {
            NodeKind::Ebe { params } => Some(params),
            _ => None,
        }
    }

    pub fn is_shadow(&self) -> bool {
        matches!(&self.kind, NodeKind::Ebe { params } if params.shadow_of.is_some())
    }
}

/// Global maintenance policy: periodic clean/replace/inspection timers and
/// the durations of the repair actions themselves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaintenancePolicy {
    /// Periodic clean check period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_rp: Option<Duration>,
    /// Periodic replace (overhaul) check period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_oh: Option<Duration>,
    /// Inspection period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_in: Option<Duration>,
    /// Duration of one clean action.
    pub t_cln: Duration,
    /// Duration of one replace action.
    pub t_rpl: Duration,
    /// Erlang phases for every timer DELAY.
    #[serde(default = "default_timer_phases")]
    pub timer_phases: u32,
}

fn default_timer_phases() -> u32 {
    1
}

impl MaintenancePolicy {
    /// A policy with no maintenance at all (action durations are inert).
    pub fn none() -> Self {
        MaintenancePolicy {
            t_rp: None,
            t_oh: None,
            t_in: None,
            t_cln: Duration::from_days(1.0),
            t_rpl: Duration::from_days(7.0),
            timer_phases: 1,
        }
    }

    pub fn has_maintenance(&self) -> bool {
        self.t_rp.is_some() || self.t_oh.is_some() || self.t_in.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub clean_cost: f64,
    pub inspect_cost: f64,
    pub replace_cost: f64,
    /// Cost per time unit in any state.
    pub operational_rate: f64,
    /// Extra cost per time unit while the top event is failed.
    pub failure_rate: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            clean_cost: 0.0,
            inspect_cost: 0.0,
            replace_cost: 0.0,
            operational_rate: 0.0,
            failure_rate: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FaultMaintenanceTree {
    pub nodes: IndexMap<NodeId, FmtNode>,
    pub top: NodeId,
    pub policy: MaintenancePolicy,
    pub costs: CostModel,
}

/// A well-formedness violation. Violations are data, not failures: `validate`
/// reports all of them instead of stopping at the first.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum Violation {
    #[error("top event {0} is not defined")]
    UnknownTop(NodeId),
    #[error("node {from} references undefined node {to}")]
    DanglingReference { from: NodeId, to: NodeId },
    #[error("cycle through node {0}")]
    Cycle(NodeId),
    #[error("multiple top events: {0:?}")]
    MultipleTopEvents(Vec<NodeId>),
    #[error("declared top event {0} has a parent")]
    TopEventNotRoot(NodeId),
    #[error("EBE {0} must be a leaf")]
    EbeHasChildren(NodeId),
    #[error("OR gate {id} has arity {arity}, needs at least 2")]
    OrArityTooSmall { id: NodeId, arity: usize },
    #[error("event {id} must have exactly one child, has {arity}")]
    EventArity { id: NodeId, arity: usize },
    #[error("RDEP {id} trigger {trigger} is not an EBE")]
    RdepTriggerNotEbe { id: NodeId, trigger: NodeId },
    #[error("RDEP {id} trigger {trigger} is listed among its dependents")]
    RdepTriggerIsChild { id: NodeId, trigger: NodeId },
    #[error("RDEP {0} has no dependent children")]
    RdepNoChildren(NodeId),
    #[error("RDEP {id} dependent {child} is not an EBE")]
    RdepChildNotEbe { id: NodeId, child: NodeId },
    #[error("RDEP {id} acceleration factor must be > 0, got {gamma}")]
    NonPositiveGamma { id: NodeId, gamma: f64 },
    #[error("EBE {0} needs degradation_levels >= 1")]
    ZeroDegradationLevels(NodeId),
    #[error("EBE {0} needs erlang_phases >= 1")]
    ZeroErlangPhases(NodeId),
    #[error("EBE {0} needs mttf > 0")]
    NonPositiveMttf(NodeId),
    #[error("policy duration {0} must be > 0")]
    NonPositiveDuration(&'static str),
    #[error("policy needs timer_phases >= 1")]
    ZeroTimerPhases,
    #[error("t_cln and t_rpl must differ")]
    CleanEqualsReplace,
    #[error("shadow node {id} points at {target}, which is not a real EBE")]
    BadShadow { id: NodeId, target: NodeId },
}

impl FaultMaintenanceTree {
    pub fn node(&self, id: &NodeId) -> Option<&FmtNode> {
        self.nodes.get(id)
    }

    /// All non-shadow EBE nodes, in definition order.
    pub fn real_ebes(&self) -> impl Iterator<Item = &FmtNode> {
        self.nodes
            .values()
            .filter(|n| n.is_ebe() && !n.is_shadow())
    }

    pub fn rdeps(&self) -> impl Iterator<Item = &FmtNode> {
        self.nodes.values().filter(|n| n.is_rdep())
    }

    /// Map from node to the set of nodes referencing it as a child.
    pub fn parents(&self) -> HashMap<&NodeId, Vec<&NodeId>> {
        let mut map: HashMap<&NodeId, Vec<&NodeId>> = HashMap::new();
        for node in self.nodes.values() {
            for child in &node.children {
                map.entry(child).or_default().push(&node.id);
            }
        }
        map
    }

    /// Check every structural and parameter invariant; empty iff well-formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();

        if !self.nodes.contains_key(&self.top) {
            out.push(Violation::UnknownTop(self.top.clone()));
        }

        for node in self.nodes.values() {
            for child in &node.children {
                if !self.nodes.contains_key(child) {
                    out.push(Violation::DanglingReference {
                        from: node.id.clone(),
                        to: child.clone(),
                    });
                }
            }
        }
        // Everything below assumes references resolve.
        if !out.is_empty() {
            return out;
        }

        if let Some(cycle_at) = self.find_cycle() {
            out.push(Violation::Cycle(cycle_at));
            return out;
        }

        let parents = self.parents();
        let roots: Vec<NodeId> = self
            .nodes
            .values()
            .filter(|n| !n.is_rdep() && !parents.contains_key(&n.id))
            .map(|n| n.id.clone())
            .collect();
        if roots.len() > 1 {
            out.push(Violation::MultipleTopEvents(roots.clone()));
        }
        if self.nodes.contains_key(&self.top) && !roots.contains(&self.top) {
            out.push(Violation::TopEventNotRoot(self.top.clone()));
        }

        for node in self.nodes.values() {
            match &node.kind {
                NodeKind::Ebe { params } => {
                    if !node.children.is_empty() {
                        out.push(Violation::EbeHasChildren(node.id.clone()));
                    }
                    if params.degradation_levels == 0 {
                        out.push(Violation::ZeroDegradationLevels(node.id.clone()));
                    }
                    if params.erlang_phases == 0 {
                        out.push(Violation::ZeroErlangPhases(node.id.clone()));
                    }
                    if !params.mttf.is_positive() {
                        out.push(Violation::NonPositiveMttf(node.id.clone()));
                    }
                    if let Some(target) = &params.shadow_of {
                        let ok = self
                            .nodes
                            .get(target)
                            .map(|t| t.is_ebe() && !t.is_shadow())
                            .unwrap_or(false);
                        if !ok {
                            out.push(Violation::BadShadow {
                                id: node.id.clone(),
                                target: target.clone(),
                            });
                        }
                    }
                }
                NodeKind::Or => {
                    if node.children.len() < 2 {
                        out.push(Violation::OrArityTooSmall {
                            id: node.id.clone(),
                            arity: node.children.len(),
                        });
                    }
                }
                NodeKind::Event { .. } => {
                    if node.children.len() != 1 {
                        out.push(Violation::EventArity {
                            id: node.id.clone(),
                            arity: node.children.len(),
                        });
                    }
                }
                NodeKind::Rdep { params } => {
                    if params.gamma <= 0.0 || !params.gamma.is_finite() {
                        out.push(Violation::NonPositiveGamma {
                            id: node.id.clone(),
                            gamma: params.gamma,
                        });
                    }
                    match self.nodes.get(&params.trigger) {
                        Some(t) if t.is_ebe() && !t.is_shadow() => {}
                        Some(_) => out.push(Violation::RdepTriggerNotEbe {
                            id: node.id.clone(),
                            trigger: params.trigger.clone(),
                        }),
                        None => out.push(Violation::DanglingReference {
                            from: node.id.clone(),
                            to: params.trigger.clone(),
                        }),
                    }
                    let dependents = self.rdep_dependents(node);
                    if dependents.is_empty() {
                        out.push(Violation::RdepNoChildren(node.id.clone()));
                    }
                    for child in &dependents {
                        if **child == params.trigger {
                            out.push(Violation::RdepTriggerIsChild {
                                id: node.id.clone(),
                                trigger: params.trigger.clone(),
                            });
                        }
                        match self.nodes.get(*child) {
                            Some(c) if c.is_ebe() => {}
                            Some(_) => out.push(Violation::RdepChildNotEbe {
                                id: node.id.clone(),
                                child: (*child).clone(),
                            }),
                            None => {}
                        }
                    }
                }
            }
        }

        if self.policy.timer_phases == 0 {
            out.push(Violation::ZeroTimerPhases);
        }
        for (name, d) in [
            ("t_cln", Some(self.policy.t_cln)),
            ("t_rpl", Some(self.policy.t_rpl)),
            ("t_rp", self.policy.t_rp),
            ("t_oh", self.policy.t_oh),
            ("t_in", self.policy.t_in),
        ] {
            if let Some(d) = d {
                if !d.is_positive() {
                    out.push(Violation::NonPositiveDuration(name));
                }
            }
        }
        if self.policy.t_cln == self.policy.t_rpl {
            out.push(Violation::CleanEqualsReplace);
        }

        out
    }

    /// Dependent (accelerated) children of an RDEP node, excluding the
    /// structural shadow of its trigger.
    pub fn rdep_dependents<'a>(&'a self, rdep: &'a FmtNode) -> Vec<&'a NodeId> {
        rdep.children
            .iter()
            .filter(|c| {
                self.nodes
                    .get(*c)
                    .map(|n| !n.is_shadow())
                    .unwrap_or(true)
            })
            .collect()
    }

    fn find_cycle(&self) -> Option<NodeId> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            White,
            Grey,
            Black,
        }
        let mut marks: HashMap<&NodeId, Mark> = self
            .nodes
            .keys()
            .map(|k| (k, Mark::White))
            .collect();
        // Iterative DFS with an explicit exit marker per node.
        for start in self.nodes.keys() {
            if marks[start] != Mark::White {
                continue;
            }
            let mut stack: Vec<(&NodeId, bool)> = vec![(start, false)];
            while let Some((id, exiting)) = stack.pop() {
                if exiting {
                    marks.insert(id, Mark::Black);
                    continue;
                }
                match marks[id] {
                    Mark::Black => continue,
                    Mark::Grey => return Some(id.clone()),
                    Mark::White => {}
                }
                marks.insert(id, Mark::Grey);
                stack.push((id, true));
                if let Some(node) = self.nodes.get(id) {
                    for child in &node.children {
                        if let Some(mark) = marks.get(child) {
                            match mark {
                                Mark::Grey => return Some(child.clone()),
                                Mark::White => stack.push((child, false)),
                                Mark::Black => {}
                            }
                        }
                    }
                }
            }
        }
        None
    }

    /// Insert a structural duplicate of each RDEP trigger as a direct child
    /// of the RDEP vertex, so graph decomposition sees the dependency as a
    /// local edge. Duplicates carry `shadow_of` and contribute no stochastic
    /// process of their own. Idempotent.
    pub fn duplicate_rdep_inputs(&self) -> FaultMaintenanceTree {
        let mut tree = self.clone();
        let rdep_ids: Vec<NodeId> = tree.rdeps().map(|n| n.id.clone()).collect();
        for rdep_id in rdep_ids {
            let (trigger, already_local) = {
                let node = &tree.nodes[&rdep_id];
                let trigger = match &node.kind {
                    NodeKind::Rdep { params } => params.trigger.clone(),
                    _ => unreachable!(),
                };
                let already = node.children.iter().any(|c| {
                    *c == trigger
                        || tree
                            .nodes
                            .get(c)
                            .and_then(|n| n.ebe_params())
                            .and_then(|p| p.shadow_of.as_ref())
                            == Some(&trigger)
                });
                (trigger, already)
            };
            if already_local {
                continue;
            }
            let Some(orig_params) = tree.nodes.get(&trigger).and_then(|n| n.ebe_params()).cloned()
            else {
                continue;
            };
            let shadow_id = NodeId::new(format!("{}__shadow_{}", trigger, rdep_id));
            let shadow = FmtNode {
                id: shadow_id.clone(),
                kind: NodeKind::Ebe {
                    params: EbeParams {
                        shadow_of: Some(trigger.clone()),
                        ..orig_params
                    },
                },
                children: Vec::new(),
            };
            tree.nodes.insert(shadow_id.clone(), shadow);
            if let Some(node) = tree.nodes.get_mut(&rdep_id) {
                node.children.insert(0, shadow_id);
            }
        }
        tree
    }

    /// Node ids reachable from `root` through child edges, `root` included.
    pub fn descendants(&self, root: &NodeId) -> HashSet<NodeId> {
        let mut seen = HashSet::new();
        let mut stack = vec![root.clone()];
        while let Some(id) = stack.pop() {
            if !seen.insert(id.clone()) {
                continue;
            }
            if let Some(node) = self.nodes.get(&id) {
                for child in &node.children {
                    stack.push(child.clone());
                }
            }
        }
        seen
    }
}
