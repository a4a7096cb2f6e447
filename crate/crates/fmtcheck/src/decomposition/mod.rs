//! Divide-and-conquer abstraction for large trees: self-contained
//! sub-trees are analyzed in isolation, each summarized by the delay of a
//! calibrated Erlang failure node, and the remaining top-level tree is
//! analyzed with those abstract nodes in place of the sub-trees.

use crate::analysis::{
    calibrate_erlang_delay, evaluate, mttf_from_unreliability, AnalysisError, HorizonMetrics,
    NumericsConfig,
};
use crate::duration::Duration;
use crate::model::{EbeParams, FaultMaintenanceTree, FmtNode, NodeId, NodeKind};
use crate::semantics::{assemble_system, count_system_states, AssembleError, AssembleOptions};
use serde::Serialize;
use std::collections::{BTreeMap, HashSet};

/// A self-contained sub-tree: no dependency (gate edge, rate dependency,
/// or shared component) crosses its boundary except the failure of its top
/// node.
#[derive(Clone, Debug, Serialize)]
pub struct SubGraph {
    pub top: NodeId,
    pub nodes: Vec<NodeId>,
    /// Placeholder nodes standing in for split-off child sub-graphs.
    pub split_inputs: Vec<NodeId>,
}

/// One fitted abstraction: the sub-graph's failure probability at a
/// horizon, the exponential-equivalent MTTF, and the calibrated total
/// delay given to the replacement Erlang node.
#[derive(Clone, Debug, Serialize)]
pub struct MttfEntry {
    pub vg: NodeId,
    pub module_top: NodeId,
    pub horizon: f64,
    pub failure_probability: f64,
    pub mttf: f64,
    pub fitted_delay: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AbstractionPlan {
    /// Bottom-up: split-off modules first (lexicographic by top), the
    /// root sub-graph last.
    pub subgraphs: Vec<SubGraph>,
    pub mttf_table: Vec<MttfEntry>,
    pub abstract_phase_count: u32,
}

impl AbstractionPlan {
    pub fn is_monolithic(&self) -> bool {
        self.subgraphs.len() == 1
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DecompError {
    #[error(transparent)]
    Assemble(#[from] AssembleError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("sub-graph {module} has failure probability {d} at horizon {horizon}; the abstraction fit needs 0 < D < 1 — pick a different horizon")]
    DegenerateModule {
        module: NodeId,
        horizon: f64,
        d: f64,
    },
}

fn vg_id(top: &NodeId) -> NodeId {
    NodeId::new(format!("vg_{top}"))
}

fn is_real_ebe(node: &FmtNode) -> bool {
    node.is_ebe() && !node.is_shadow()
}

/// A node roots a module iff it is a gate (or intermediate event) whose
/// sub-tree holds at least two components and no rate dependency or shadow
/// link crosses its boundary.
fn qualifies(tree: &FaultMaintenanceTree, id: &NodeId) -> bool {
    let Some(node) = tree.node(id) else {
        return false;
    };
    match node.kind {
        NodeKind::Or | NodeKind::Event { .. } => {}
        _ => return false,
    }
    let sub = tree.descendants(id);
    let components = sub
        .iter()
        .filter(|n| tree.node(n).map(is_real_ebe).unwrap_or(false))
        .count();
    if components < 2 {
        return false;
    }
    // Shadow components and their originals must not be separated.
    for n in tree.nodes.values() {
        if let Some(of) = n.ebe_params().and_then(|p| p.shadow_of.as_ref()) {
            if sub.contains(&n.id) != sub.contains(of) {
                return false;
            }
        }
    }
    // Rate dependencies must lie entirely inside or entirely outside.
    for r in tree.rdeps() {
        let NodeKind::Rdep { params } = &r.kind else {
            continue;
        };
        let mut involved = vec![&r.id, &params.trigger];
        involved.extend(r.children.iter());
        let inside = involved.iter().filter(|n| sub.contains(**n)).count();
        if inside != 0 && inside != involved.len() {
            return false;
        }
    }
    true
}

fn walk(tree: &FaultMaintenanceTree, id: &NodeId, seen: &mut HashSet<NodeId>, out: &mut Vec<NodeId>) {
    let Some(node) = tree.node(id) else { return };
    for child in &node.children {
        if !seen.insert(child.clone()) {
            continue;
        }
        if qualifies(tree, child) {
            out.push(child.clone());
        } else {
            walk(tree, child, seen, out);
        }
    }
}

/// Identify the outermost self-contained sub-trees strictly below the top
/// event by depth-first traversal. A tree with no such sub-tree yields a
/// single-sub-graph (monolithic) plan. Expects shared rate-dependency
/// inputs already duplicated.
pub fn find_and_split(tree: &FaultMaintenanceTree, abstract_phase_count: u32) -> AbstractionPlan {
    let mut module_tops = Vec::new();
    let mut seen = HashSet::new();
    seen.insert(tree.top.clone());
    walk(tree, &tree.top, &mut seen, &mut module_tops);
    module_tops.sort();

    let mut subgraphs = Vec::new();
    let mut covered: HashSet<NodeId> = HashSet::new();
    for top in &module_tops {
        let mut nodes: Vec<NodeId> = tree.descendants(top).into_iter().collect();
        nodes.sort();
        covered.extend(nodes.iter().cloned());
        subgraphs.push(SubGraph {
            top: top.clone(),
            nodes,
            split_inputs: Vec::new(),
        });
    }
    let mut root_nodes: Vec<NodeId> = tree
        .nodes
        .keys()
        .filter(|id| !covered.contains(*id))
        .cloned()
        .collect();
    root_nodes.sort();
    subgraphs.push(SubGraph {
        top: tree.top.clone(),
        nodes: root_nodes,
        split_inputs: module_tops.iter().map(vg_id).collect(),
    });
    AbstractionPlan {
        subgraphs,
        mttf_table: Vec::new(),
        abstract_phase_count,
    }
}

/// The sub-graph as a standalone model. Module-level analysis keeps the
/// maintenance policy and the clean/replace action costs but drops the
/// system-level cost rates and the inspection cost: inspections fire on
/// the same timer schedule in every bundle, so the root charges them once
/// for the whole system.
fn module_tree(tree: &FaultMaintenanceTree, sub: &SubGraph) -> FaultMaintenanceTree {
    let members: HashSet<&NodeId> = sub.nodes.iter().collect();
    let mut costs = tree.costs.clone();
    costs.operational_rate = 0.0;
    costs.failure_rate = 0.0;
    costs.inspect_cost = 0.0;
    FaultMaintenanceTree {
        nodes: tree
            .nodes
            .iter()
            .filter(|(id, _)| members.contains(id))
            .map(|(id, n)| (id.clone(), n.clone()))
            .collect(),
        top: sub.top.clone(),
        policy: tree.policy.clone(),
        costs,
    }
}

/// The root sub-graph with every split module replaced by a single
/// abstract failure node carrying the fitted delay.
fn root_tree(
    tree: &FaultMaintenanceTree,
    plan: &AbstractionPlan,
    fitted: &BTreeMap<NodeId, f64>,
) -> (FaultMaintenanceTree, HashSet<NodeId>) {
    let mut covered: HashSet<&NodeId> = HashSet::new();
    let mut tops: HashSet<&NodeId> = HashSet::new();
    for sub in &plan.subgraphs[..plan.subgraphs.len() - 1] {
        covered.extend(sub.nodes.iter());
        tops.insert(&sub.top);
    }
    let mut nodes = indexmap::IndexMap::new();
    for (id, node) in &tree.nodes {
        if covered.contains(id) {
            if tops.contains(id) {
                let vg = vg_id(id);
                nodes.insert(
                    vg.clone(),
                    FmtNode {
                        id: vg,
                        kind: NodeKind::Ebe {
                            params: EbeParams {
                                degradation_levels: 1,
                                mttf: Duration::from_years(fitted[id]),
                                erlang_phases: plan.abstract_phase_count,
                                label: format!("abstract {id}"),
                                shadow_of: None,
                            },
                        },
                        children: Vec::new(),
                    },
                );
            }
            continue;
        }
        let mut node = node.clone();
        for child in node.children.iter_mut() {
            if tops.contains(&*child) {
                *child = vg_id(child);
            }
        }
        nodes.insert(id.clone(), node);
    }
    let transparent = tops.iter().map(|t| vg_id(t)).collect();
    (
        FaultMaintenanceTree {
            nodes,
            top: tree.top.clone(),
            policy: tree.policy.clone(),
            costs: tree.costs.clone(),
        },
        transparent,
    )
}

pub struct AbstractAnalysis {
    pub metrics: Vec<HorizonMetrics>,
    pub plan: AbstractionPlan,
    /// Reachable states of each module's live chain.
    pub module_states: Vec<(NodeId, usize)>,
    /// Largest root chain over the analyzed horizons.
    pub root_states: usize,
}

/// Decomposed analysis at each horizon (ascending, years). Every module is
/// refit per horizon: its failure probability there defines both the
/// reported MTTF and the delay of the abstract node, calibrated so the
/// abstract node's failure probability at that horizon is exact.
///
/// Reliability, availability and failure counts come from the abstract
/// root system; maintenance costs incurred inside modules are added to the
/// root's cost so actions on split-off components stay accounted for.
pub fn abstract_analyze(
    tree: &FaultMaintenanceTree,
    horizons: &[f64],
    abstract_phase_count: u32,
    base: &AssembleOptions,
    numerics: &NumericsConfig,
) -> Result<AbstractAnalysis, DecompError> {
    let dup = tree.duplicate_rdep_inputs();
    let plan = find_and_split(&dup, abstract_phase_count);

    let full_opts = AssembleOptions {
        absorb_failed: false,
        maintenance_transparent: HashSet::new(),
        ..base.clone()
    };
    let abs_opts = AssembleOptions {
        absorb_failed: true,
        ..full_opts.clone()
    };

    if plan.is_monolithic() {
        let full = assemble_system(&dup, &full_opts)?;
        let absorbing = assemble_system(&dup, &abs_opts)?;
        let metrics = evaluate(&full, &absorbing, horizons, numerics)?;
        let root_states = full.ctmc.num_states();
        return Ok(AbstractAnalysis {
            metrics,
            plan,
            module_states: Vec::new(),
            root_states,
        });
    }

    let positive: Vec<f64> = horizons.iter().copied().filter(|h| *h > 0.0).collect();
    let modules = &plan.subgraphs[..plan.subgraphs.len() - 1];
    let mut module_states = Vec::new();
    let mut module_metrics: Vec<Vec<HorizonMetrics>> = Vec::new();
    for sub in modules {
        let mtree = module_tree(&dup, sub);
        let full = assemble_system(&mtree, &full_opts)?;
        let absorbing = assemble_system(&mtree, &abs_opts)?;
        module_states.push((sub.top.clone(), full.ctmc.num_states()));
        module_metrics.push(evaluate(&full, &absorbing, &positive, numerics)?);
    }

    let mut mttf_table = Vec::new();
    let mut metrics = Vec::with_capacity(horizons.len());
    let mut root_states = 0usize;
    for &h in horizons {
        if h <= 0.0 {
            metrics.push(HorizonMetrics {
                horizon: h,
                reliability: 1.0,
                availability: 1.0,
                expected_cost: 0.0,
                expected_failures: 0.0,
            });
            continue;
        }
        let hi = positive.iter().position(|&p| p == h).unwrap();
        let mut fitted = BTreeMap::new();
        for (sub, mm) in modules.iter().zip(&module_metrics) {
            let d = 1.0 - mm[hi].reliability;
            if !(d > 0.0 && d < 1.0) {
                return Err(DecompError::DegenerateModule {
                    module: sub.top.clone(),
                    horizon: h,
                    d,
                });
            }
            let mttf = mttf_from_unreliability(d, h)?;
            let delay = calibrate_erlang_delay(abstract_phase_count, h, d)?;
            mttf_table.push(MttfEntry {
                vg: vg_id(&sub.top),
                module_top: sub.top.clone(),
                horizon: h,
                failure_probability: d,
                mttf,
                fitted_delay: delay,
            });
            fitted.insert(sub.top.clone(), delay);
        }
        let (rtree, transparent) = root_tree(&dup, &plan, &fitted);
        let r_full_opts = AssembleOptions {
            maintenance_transparent: transparent.clone(),
            ..full_opts.clone()
        };
        let r_abs_opts = AssembleOptions {
            absorb_failed: true,
            ..r_full_opts.clone()
        };
        let full = assemble_system(&rtree, &r_full_opts)?;
        let absorbing = assemble_system(&rtree, &r_abs_opts)?;
        root_states = root_states.max(full.ctmc.num_states());
        let mut m = evaluate(&full, &absorbing, &[h], numerics)?.remove(0);
        for mm in &module_metrics {
            m.expected_cost += mm[hi].expected_cost;
        }
        metrics.push(m);
    }

    let plan = AbstractionPlan {
        mttf_table,
        ..plan
    };
    Ok(AbstractAnalysis {
        metrics,
        plan,
        module_states,
        root_states,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StateSpaceReport {
    pub monolithic_states: usize,
    /// Monolithic exploration stopped at the budget; the reduction is then
    /// a lower bound.
    pub monolithic_truncated: bool,
    pub abstract_states: usize,
    pub reduction_pct: f64,
}

/// Compare the composed state-space sizes of the monolithic system and of
/// the decomposed one (sum over modules plus the abstract root).
pub fn state_space_report(
    tree: &FaultMaintenanceTree,
    base: &AssembleOptions,
    budget: usize,
) -> Result<StateSpaceReport, DecompError> {
    let dup = tree.duplicate_rdep_inputs();
    let plan = find_and_split(&dup, 4);
    let full_opts = AssembleOptions {
        absorb_failed: false,
        maintenance_transparent: HashSet::new(),
        ..base.clone()
    };

    let (monolithic_states, monolithic_truncated) =
        count_system_states(&dup, &full_opts, budget)?;

    let abstract_states = if plan.is_monolithic() {
        monolithic_states
    } else {
        let modules = &plan.subgraphs[..plan.subgraphs.len() - 1];
        let mut total = 0usize;
        let mut fitted = BTreeMap::new();
        for sub in modules {
            let mtree = module_tree(&dup, sub);
            let (n, _) = count_system_states(&mtree, &full_opts, budget)?;
            total += n;
            // The chain's shape does not depend on the fitted delay.
            fitted.insert(sub.top.clone(), 1.0);
        }
        let (rtree, transparent) = root_tree(&dup, &plan, &fitted);
        let r_opts = AssembleOptions {
            maintenance_transparent: transparent,
            ..full_opts.clone()
        };
        let (n, _) = count_system_states(&rtree, &r_opts, budget)?;
        total + n
    };

    let reduction_pct = if monolithic_states > 0 {
        100.0 * (1.0 - abstract_states as f64 / monolithic_states as f64)
    } else {
        0.0
    };
    Ok(StateSpaceReport {
        monolithic_states,
        monolithic_truncated,
        abstract_states,
        reduction_pct,
    })
}
