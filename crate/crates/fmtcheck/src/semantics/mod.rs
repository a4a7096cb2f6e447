//! Compilation of a fault-maintenance tree into a single labelled CTMC:
//! one component per stochastic process (EBE chains, degradation timers,
//! maintenance timers, repair delays, repair and inspection modules), wired
//! together by synchronization labels and composed in one sweep.

use crate::ctmc::{
    action_delay, compose_system, count_reachable, cyclic_signal_delay, ComposeError,
    ComposeOptions, Ctmc,
    CtmcBuilder, Guard, SyncMode, SyncRules,
};
use crate::model::{EbeParams, FaultMaintenanceTree, NodeId, NodeKind, Violation};
use std::collections::HashSet;

/// Synchronization labels of the maintenance machinery.
pub const L_CHECK_CLEAN: &str = "check_clean";
pub const L_CHECK_REPLACE: &str = "check_replace";
pub const L_INSPECT: &str = "inspect";
pub const L_TRIGGER_CLEAN: &str = "trigger_clean";
pub const L_TRIGGER_REPLACE: &str = "trigger_replace";
pub const L_PERFORM_CLEAN: &str = "perform_clean";
pub const L_PERFORM_REPLACE: &str = "perform_replace";

/// Busy markers of the two repair delays, used for mutual exclusion.
const P_CLN_BUSY: &str = "cln_busy";
const P_RPL_BUSY: &str = "rpl_busy";

/// Repair-duration delays use a single exponential phase: their durations
/// (days) are far below every other time constant, and extra phases would
/// raise the uniformization rate for no measurable accuracy gain.
const ACTION_PHASES: u32 = 1;

pub fn prop_new(id: &NodeId) -> String {
    format!("new_{id}")
}

pub fn prop_thresh(id: &NodeId, level: u32) -> String {
    let _ = level;
    format!("thresh_{id}")
}

pub fn prop_failed(id: &NodeId) -> String {
    format!("failed_{id}")
}

pub fn degrade_label(id: &NodeId) -> String {
    format!("degrade_{id}")
}

#[derive(Debug, thiserror::Error)]
pub enum AssembleError {
    #[error("model is not well-formed: {0:?}")]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error("abstract node {0} must have exactly one degradation level")]
    AbstractLevels(NodeId),
    #[error("RDEP {rdep} accelerates {dependent}, which is an abstract node")]
    RdepOnAbstract { rdep: NodeId, dependent: NodeId },
}

/// Rewards attached to the composed chain: a cost rate per state and a lump
/// cost per transition (both in the model's currency).
#[derive(Clone, Debug)]
pub struct RewardStructure {
    pub state_rate: Vec<f64>,
    pub edge_cost: Vec<f64>,
}

/// The composed system: chain, rewards, and the top-event failure marking.
pub struct SystemBundle {
    pub ctmc: Ctmc,
    pub rewards: RewardStructure,
    /// Per state: does the top-event failure predicate hold?
    pub failed: Vec<bool>,
    /// Collapsed absorbing failure state, present on absorbing builds.
    pub sink: Option<u32>,
    pub warnings: Vec<String>,
}

impl SystemBundle {
    pub fn num_states(&self) -> usize {
        self.ctmc.num_states()
    }
}

#[derive(Clone, Debug, Default)]
pub struct AssembleOptions {
    /// Make top-event-failed states absorbing (collapsed into one sink);
    /// required for reliability, wrong for the other metrics.
    pub absorb_failed: bool,
    pub max_states: Option<usize>,
    /// Count failed EBEs towards the thresh signal. Off by default: the
    /// threshold signal covers intermediate degradation levels only.
    pub thresh_includes_failed: bool,
    /// Override the start-up rate of the repair delays.
    pub mu_override: Option<f64>,
    /// EBE nodes that take no part in maintenance (abstract replacements
    /// whose fitted delay already embeds maintenance effects).
    pub maintenance_transparent: HashSet<NodeId>,
}

/// An EBE's two components: the degradation-level chain and the per-level
/// delay timer driving it.
pub struct EbeBundle {
    pub chain: Ctmc,
    pub timer: Ctmc,
}

/// Build the level chain s0..sN (propositions new/thresh/failed) and its
/// degradation timer. The chain moves one level per `degrade` signal; clean
/// moves one level back (also from failed), replace returns to s0. Repair
/// labels are attached only when the policy can fire them.
pub fn build_ebe(id: &NodeId, params: &EbeParams, clean: bool, replace: bool) -> EbeBundle {
    let n = params.degradation_levels as usize;
    let degrade = degrade_label(id);
    let p_new = prop_new(id);
    let p_thresh = prop_thresh(id, 0);
    let p_failed = prop_failed(id);

    let mut b = CtmcBuilder::new(format!("ebe_{id}"));
    let mut states = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let props: Vec<&str> = if j == 0 {
            vec![p_new.as_str()]
        } else if j == n {
            vec![p_failed.as_str()]
        } else {
            vec![p_thresh.as_str()]
        };
        states.push(b.state(&props));
    }
    b.set_initial(states[0]);
    for j in 0..n {
        b.edge(states[j], &degrade, 1.0, states[j + 1]);
    }
    if clean {
        b.edge(states[0], L_PERFORM_CLEAN, 1.0, states[0]);
        for j in 1..=n {
            b.edge(states[j], L_PERFORM_CLEAN, 1.0, states[j - 1]);
        }
    }
    if replace {
        b.edge(states[0], L_PERFORM_REPLACE, 1.0, states[0]);
        for j in 1..=n {
            b.edge(states[j], L_PERFORM_REPLACE, 1.0, states[0]);
        }
    }
    let chain = b.build();

    let mut resets: Vec<&str> = Vec::new();
    if clean {
        resets.push(L_PERFORM_CLEAN);
    }
    if replace {
        resets.push(L_PERFORM_REPLACE);
    }
    let timer = cyclic_signal_delay(
        &format!("td_{id}"),
        params.level_delay().years(),
        params.erlang_phases,
        &degrade,
        &resets,
    );
    EbeBundle { chain, timer }
}

/// A maintenance-transparent abstract node: one Erlang(k) first passage to
/// failure, merged into a single component with no repair participation.
fn build_abstract_component(id: &NodeId, params: &EbeParams) -> Result<Ctmc, AssembleError> {
    if params.degradation_levels != 1 {
        return Err(AssembleError::AbstractLevels(id.clone()));
    }
    let k = params.erlang_phases as usize;
    let rate = params.erlang_phases as f64 / params.mttf.years();
    let tick = format!("_abs_{id}");
    let degrade = degrade_label(id);
    let p_new = prop_new(id);
    let p_failed = prop_failed(id);

    let mut b = CtmcBuilder::new(format!("abs_{id}"));
    let mut phases = Vec::with_capacity(k);
    for i in 0..k {
        let props: Vec<&str> = if i == 0 { vec![p_new.as_str()] } else { vec![] };
        phases.push(b.state(&props));
    }
    let failed = b.state(&[p_failed.as_str()]);
    b.set_initial(phases[0]);
    for i in 0..k - 1 {
        b.edge(phases[i], &tick, rate, phases[i + 1]);
    }
    b.edge(phases[k - 1], &degrade, rate, failed);
    Ok(b.build())
}

/// thresh signal: some EBE sits at an intermediate degradation level
/// (failed levels count only when `include_failed` is set). Takes
/// `(id, degradation_levels)` pairs: a single-level EBE has no
/// intermediate state, so it contributes no thresh alternative.
pub fn thresh_predicate(ebes: &[(&NodeId, u32)], include_failed: bool) -> Guard {
    let mut alts = Vec::new();
    for (id, levels) in ebes {
        if *levels >= 2 {
            alts.push(Guard::Prop(prop_thresh(id, 0)));
        }
        if include_failed {
            alts.push(Guard::Prop(prop_failed(id)));
        }
    }
    Guard::AnyOf(alts)
}

/// trig signal: some EBE has left its `new` state.
pub fn trig_predicate(ebes: &[&NodeId]) -> Guard {
    Guard::AnyOf(
        ebes.iter()
            .map(|id| Guard::NotProp(prop_new(id)))
            .collect(),
    )
}

/// Failure predicate of a node: an EBE fails when its chain is at the
/// failed level; gates and events fail per the tree structure (OR over
/// children). Shadow EBEs delegate to the node they duplicate.
pub fn failure_guard(tree: &FaultMaintenanceTree, id: &NodeId) -> Guard {
    let Some(node) = tree.node(id) else {
        return Guard::False;
    };
    match &node.kind {
        NodeKind::Ebe { params } => {
            let target = params.shadow_of.as_ref().unwrap_or(id);
            Guard::Prop(prop_failed(target))
        }
        NodeKind::Or => Guard::AnyOf(
            node.children
                .iter()
                .map(|c| failure_guard(tree, c))
                .collect(),
        ),
        NodeKind::Event { .. } => node
            .children
            .first()
            .map(|c| failure_guard(tree, c))
            .unwrap_or(Guard::False),
        // RDEP vertices modulate rates; they are not failure events.
        NodeKind::Rdep { .. } => Guard::False,
    }
}

/// The repair module: one idle state plus a pending state per repair kind.
/// Periodic checks and inspections move it to a pending state when their
/// guard holds (and are absorbed by a self-loop otherwise, so the timers
/// never block); the pending state immediately starts the matching repair
/// delay, except while the other repair is running.
pub fn build_rm(
    has_rp: bool,
    has_oh: bool,
    has_in: bool,
    trig: &Guard,
    thresh: &Guard,
) -> Ctmc {
    let clean = has_rp || has_in;
    let replace = has_oh;
    let mut b = CtmcBuilder::new("rm");
    let rm0 = b.state(&[]);
    let rm_cln = if clean { Some(b.state(&["maintenance"])) } else { None };
    let rm_rpl = if replace { Some(b.state(&["maintenance"])) } else { None };
    b.set_initial(rm0);

    if has_rp {
        b.guarded_edge(rm0, L_CHECK_CLEAN, 1.0, rm_cln.unwrap(), trig.clone());
        b.guarded_edge(rm0, L_CHECK_CLEAN, 1.0, rm0, trig.clone().not());
    }
    if has_oh {
        b.guarded_edge(rm0, L_CHECK_REPLACE, 1.0, rm_rpl.unwrap(), trig.clone());
        b.guarded_edge(rm0, L_CHECK_REPLACE, 1.0, rm0, trig.clone().not());
    }
    if has_in {
        // An inspection that finds a degraded component triggers a clean
        // outside the periodic cycle.
        b.guarded_edge(rm0, L_INSPECT, 1.0, rm_cln.unwrap(), thresh.clone());
        b.guarded_edge(rm0, L_INSPECT, 1.0, rm0, thresh.clone().not());
    }
    if let Some(s) = rm_cln {
        let guard = if replace {
            Guard::NotProp(P_RPL_BUSY.into())
        } else {
            Guard::True
        };
        b.guarded_edge(s, L_TRIGGER_CLEAN, 1.0, rm0, guard);
    }
    if let Some(s) = rm_rpl {
        let guard = if clean {
            Guard::NotProp(P_CLN_BUSY.into())
        } else {
            Guard::True
        };
        b.guarded_edge(s, L_TRIGGER_REPLACE, 1.0, rm0, guard);
    }
    b.build()
}

/// The inspection module: records that an inspection found degradation and
/// clears when the resulting repair completes. It carries no propositions;
/// its one dynamic effect is blocking further inspections until the repair.
pub fn build_im(thresh: &Guard, clean: bool, replace: bool) -> Ctmc {
    let mut b = CtmcBuilder::new("im");
    let im0 = b.state(&[]);
    let im1 = b.state(&[]);
    b.set_initial(im0);
    b.guarded_edge(im0, L_INSPECT, 1.0, im1, thresh.clone());
    b.guarded_edge(im0, L_INSPECT, 1.0, im0, thresh.clone().not());
    if clean {
        b.edge(im0, L_PERFORM_CLEAN, 1.0, im0);
        b.edge(im1, L_PERFORM_CLEAN, 1.0, im0);
    }
    if replace {
        b.edge(im0, L_PERFORM_REPLACE, 1.0, im0);
        b.edge(im1, L_PERFORM_REPLACE, 1.0, im0);
    }
    b.build()
}

/// While `trigger_failed_prop` holds, every move of this degradation timer
/// runs `gamma` times faster. Repair resets are left untouched: repairs are
/// not accelerated. `gamma == 1` is the identity.
pub fn apply_rdep(timer: &mut Ctmc, gamma: f64, trigger_failed_prop: &str) {
    if gamma == 1.0 {
        return;
    }
    let reset_labels: Vec<u16> = [L_PERFORM_CLEAN, L_PERFORM_REPLACE]
        .iter()
        .filter_map(|l| timer.label_id(l))
        .collect();
    let mut out = Vec::with_capacity(timer.transitions.len() * 2);
    for t in timer.transitions.drain(..) {
        if reset_labels.contains(&t.label) {
            out.push(t);
            continue;
        }
        let mut fast = t.clone();
        fast.rate *= gamma;
        fast.guard = fast.guard.and(Guard::Prop(trigger_failed_prop.into()));
        let mut slow = t;
        slow.guard = slow
            .guard
            .and(Guard::NotProp(trigger_failed_prop.into()));
        out.push(fast);
        out.push(slow);
    }
    timer.transitions = out;
}

/// The synchronization table: degradation signals bind each timer to its
/// chain; maintenance labels bind timers, RM, IM, repair delays and chains.
/// Everything else (internal ticks) interleaves.
pub fn sync_rules(degrade_labels: &[String]) -> SyncRules {
    let mut rules = SyncRules::new(SyncMode::Interleave);
    for l in degrade_labels {
        rules.set(l, SyncMode::Full);
    }
    for l in [
        L_CHECK_CLEAN,
        L_CHECK_REPLACE,
        L_INSPECT,
        L_TRIGGER_CLEAN,
        L_TRIGGER_REPLACE,
        L_PERFORM_CLEAN,
        L_PERFORM_REPLACE,
    ] {
        rules.set(l, SyncMode::Full);
    }
    rules
}

/// (component, label, mode) triples for every shared label a component
/// carries — the wiring table in auditable form.
pub fn wiring_audit(components: &[Ctmc], rules: &SyncRules) -> Vec<(String, String, SyncMode)> {
    let mut out = Vec::new();
    for c in components {
        for l in &c.labels {
            let mode = rules.mode_of(l);
            if mode == SyncMode::Full {
                out.push((c.name.clone(), l.clone(), mode));
            }
        }
    }
    out.sort();
    out
}

/// Build every component for `tree` and compose them. The returned bundle
/// carries the composed chain, the cost rewards, and the per-state
/// evaluation of the top event's failure predicate.
pub fn assemble_system(
    tree: &FaultMaintenanceTree,
    opts: &AssembleOptions,
) -> Result<SystemBundle, AssembleError> {
    let (components, rules) = build_components(tree, opts)?;
    compose_bundle(tree, opts, &components, &rules)
}

/// Reachable-state count of the composed system without materializing the
/// chain; the flag reports truncation at `budget`.
pub fn count_system_states(
    tree: &FaultMaintenanceTree,
    opts: &AssembleOptions,
    budget: usize,
) -> Result<(usize, bool), AssembleError> {
    let (components, rules) = build_components(tree, opts)?;
    let failed_guard = failure_guard(tree, &tree.top);
    let compose_opts = ComposeOptions {
        absorb: opts.absorb_failed.then(|| failed_guard.clone()),
        absorb_to_sink: opts.absorb_failed,
        max_states: Some(budget),
    };
    Ok(count_reachable(&components, &rules, &compose_opts)?)
}

fn build_components(
    tree: &FaultMaintenanceTree,
    opts: &AssembleOptions,
) -> Result<(Vec<Ctmc>, SyncRules), AssembleError> {
    let violations = tree.validate();
    if !violations.is_empty() {
        return Err(AssembleError::Invalid(violations));
    }

    let policy = &tree.policy;
    let clean_enabled = policy.t_rp.is_some() || policy.t_in.is_some();
    let replace_enabled = policy.t_oh.is_some();

    let mut components: Vec<Ctmc> = Vec::new();
    let mut degrade_labels: Vec<String> = Vec::new();
    // Timer component index per EBE, for RDEP acceleration.
    let mut timer_index: std::collections::HashMap<NodeId, usize> =
        std::collections::HashMap::new();
    let mut maintained_ebes: Vec<&NodeId> = Vec::new();
    let mut maintained_levels: Vec<(&NodeId, u32)> = Vec::new();

    for node in tree.real_ebes() {
        let params = node.ebe_params().expect("real_ebes yields EBEs");
        degrade_labels.push(degrade_label(&node.id));
        if opts.maintenance_transparent.contains(&node.id) {
            components.push(build_abstract_component(&node.id, params)?);
        } else {
            let bundle = build_ebe(&node.id, params, clean_enabled, replace_enabled);
            components.push(bundle.chain);
            timer_index.insert(node.id.clone(), components.len());
            components.push(bundle.timer);
            maintained_ebes.push(&node.id);
            maintained_levels.push((&node.id, params.degradation_levels));
        }
    }

    for rdep in tree.rdeps() {
        let NodeKind::Rdep { params } = &rdep.kind else { unreachable!() };
        let trigger_prop = prop_failed(&params.trigger);
        for dep in tree.rdep_dependents(rdep) {
            let Some(&ti) = timer_index.get(dep) else {
                return Err(AssembleError::RdepOnAbstract {
                    rdep: rdep.id.clone(),
                    dependent: dep.clone(),
                });
            };
            apply_rdep(&mut components[ti], params.gamma, &trigger_prop);
        }
    }

    if clean_enabled || replace_enabled {
        let trig = trig_predicate(&maintained_ebes);
        let thresh = thresh_predicate(&maintained_levels, opts.thresh_includes_failed);
        components.push(build_rm(
            policy.t_rp.is_some(),
            policy.t_oh.is_some(),
            policy.t_in.is_some(),
            &trig,
            &thresh,
        ));
        if policy.t_in.is_some() {
            components.push(build_im(&thresh, clean_enabled, replace_enabled));
        }
        if let Some(t) = policy.t_rp {
            components.push(cyclic_signal_delay(
                "trp",
                t.years(),
                policy.timer_phases,
                L_CHECK_CLEAN,
                &[],
            ));
        }
        if let Some(t) = policy.t_oh {
            components.push(cyclic_signal_delay(
                "toh",
                t.years(),
                policy.timer_phases,
                L_CHECK_REPLACE,
                &[],
            ));
        }
        if let Some(t) = policy.t_in {
            components.push(cyclic_signal_delay(
                "tin",
                t.years(),
                policy.timer_phases,
                L_INSPECT,
                &[],
            ));
        }

        // The start-up rate of a repair delay stands in for an immediate
        // transition; tie it to the fastest real rate so it dominates the
        // dynamics without inflating the uniformization rate.
        let mut mu = components
            .iter()
            .flat_map(|c| c.transitions.iter())
            .map(|t| t.rate)
            .fold(1.0f64, f64::max);
        mu = mu
            .max(ACTION_PHASES as f64 / policy.t_cln.years())
            .max(ACTION_PHASES as f64 / policy.t_rpl.years());
        let mu = opts.mu_override.unwrap_or(mu);

        if clean_enabled {
            components.push(action_delay(
                "tcln",
                policy.t_cln.years(),
                ACTION_PHASES,
                L_TRIGGER_CLEAN,
                mu,
                L_PERFORM_CLEAN,
                Some(P_CLN_BUSY),
            ));
        }
        if replace_enabled {
            components.push(action_delay(
                "trpl",
                policy.t_rpl.years(),
                ACTION_PHASES,
                L_TRIGGER_REPLACE,
                mu,
                L_PERFORM_REPLACE,
                Some(P_RPL_BUSY),
            ));
        }
    }

    let rules = sync_rules(&degrade_labels);
    Ok((components, rules))
}

fn compose_bundle(
    tree: &FaultMaintenanceTree,
    opts: &AssembleOptions,
    components: &[Ctmc],
    rules: &SyncRules,
) -> Result<SystemBundle, AssembleError> {
    let failed_guard = failure_guard(tree, &tree.top);
    let compose_opts = ComposeOptions {
        absorb: opts.absorb_failed.then(|| failed_guard.clone()),
        absorb_to_sink: opts.absorb_failed,
        max_states: opts.max_states,
    };
    let composition = compose_system(components, rules, &compose_opts)?;
    let ctmc = composition.ctmc;
    let sink = composition.sink;

    let mut failed = vec![false; ctmc.num_states()];
    {
        let lookup = |props: u128, guard: &Guard| -> bool {
            guard
                .eval(&|p: &str| ctmc.prop_id(p).map(|i| props & (1u128 << i) != 0))
                .unwrap_or(false)
        };
        for (s, &mask) in ctmc.state_props.iter().enumerate() {
            failed[s] = lookup(mask, &failed_guard);
        }
    }
    if let Some(s) = sink {
        failed[s as usize] = true;
    }

    let costs = &tree.costs;
    let mut state_rate = vec![costs.operational_rate; ctmc.num_states()];
    for (s, f) in failed.iter().enumerate() {
        if *f {
            state_rate[s] += costs.failure_rate;
        }
    }
    let mut edge_cost = vec![0.0; ctmc.transitions.len()];
    for (i, t) in ctmc.transitions.iter().enumerate() {
        edge_cost[i] = match ctmc.label_name(t.label) {
            L_INSPECT => costs.inspect_cost,
            L_PERFORM_CLEAN => costs.clean_cost,
            L_PERFORM_REPLACE => costs.replace_cost,
            _ => 0.0,
        };
    }

    Ok(SystemBundle {
        ctmc,
        rewards: RewardStructure {
            state_rate,
            edge_cost,
        },
        failed,
        sink,
        warnings: composition.warnings,
    })
}
