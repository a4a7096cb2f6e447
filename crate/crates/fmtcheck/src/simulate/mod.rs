//! Monte Carlo oracle: statistical simulation of the composed CTMC
//! (phase-type mode) and a discrete-event simulator with exact
//! deterministic clocks, for cross-validating the numeric engine.

use crate::duration::Duration;
use crate::model::{FaultMaintenanceTree, NodeId, NodeKind};
use crate::semantics::SystemBundle;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use std::collections::HashMap;

/// Recorded in output metadata so results are reproducible across builds.
pub const RNG_ALGORITHM: &str = "chacha12";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DelayMode {
    /// Sample the composed chain itself: exponential sojourns, the exact
    /// oracle for the numeric engine.
    PhaseType,
    /// Schedule every timed module as an exact clock; quantifies the
    /// Erlang approximation error.
    Deterministic,
}

#[derive(Clone, Copy, Debug)]
pub struct SimConfig {
    pub runs: u32,
    pub horizon: Duration,
    pub seed: u64,
    pub delay_mode: DelayMode,
}

#[derive(Clone, Copy, Debug)]
pub struct SimEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub runs: u32,
}

/// One estimate per metric.
#[derive(Clone, Copy, Debug)]
pub struct SimReport {
    pub reliability: SimEstimate,
    pub availability: SimEstimate,
    pub expected_cost: SimEstimate,
    pub expected_failures: SimEstimate,
}

#[derive(Clone, Copy, Debug)]
pub struct CrossCheck {
    pub z: f64,
    pub pass: bool,
}

/// z-score agreement test between a numeric value and a Monte Carlo
/// estimate; passes iff z <= 3. A zero standard error demands an exact
/// match.
pub fn cross_check(numeric: f64, sim: &SimEstimate) -> CrossCheck {
    let diff = (numeric - sim.mean).abs();
    if sim.stderr == 0.0 {
        let pass = diff <= 1e-9 * numeric.abs().max(1.0);
        return CrossCheck {
            z: if pass { 0.0 } else { f64::INFINITY },
            pass,
        };
    }
    let z = diff / sim.stderr;
    CrossCheck { z, pass: z <= 3.0 }
}

fn summarize(samples: &[[f64; 4]], runs: u32) -> SimReport {
    let n = samples.len() as f64;
    let mut means = [0.0f64; 4];
    for s in samples {
        for m in 0..4 {
            means[m] += s[m];
        }
    }
    for m in means.iter_mut() {
        *m /= n;
    }
    let mut var = [0.0f64; 4];
    for s in samples {
        for m in 0..4 {
            let d = s[m] - means[m];
            var[m] += d * d;
        }
    }
    let est = |m: usize| {
        let stderr = if samples.len() > 1 {
            (var[m] / (n - 1.0)).sqrt() / n.sqrt()
        } else {
            0.0
        };
        SimEstimate {
            mean: means[m],
            stderr,
            ci_lo: means[m] - 1.96 * stderr,
            ci_hi: means[m] + 1.96 * stderr,
            runs,
        }
    };
    SimReport {
        reliability: est(0),
        availability: est(1),
        expected_cost: est(2),
        expected_failures: est(3),
    }
}

/// Phase-type simulation of a composed system bundle. Returns, per run:
/// reliability indicator, up-time fraction, accumulated cost, failure
/// count — aggregated into estimates.
pub fn simulate_bundle(sys: &SystemBundle, cfg: &SimConfig) -> SimReport {
    assert!(cfg.runs >= 1);
    assert!(
        !sys.ctmc.has_unresolved_guards(),
        "simulation needs a fully resolved chain"
    );
    let horizon = cfg.horizon.years();
    let n = sys.ctmc.num_states();
    // Adjacency with cumulative rates for roulette selection.
    let mut adj: Vec<Vec<(f64, u32, f64)>> = vec![Vec::new(); n];
    for (i, t) in sys.ctmc.transitions.iter().enumerate() {
        adj[t.src as usize].push((t.rate, t.dst, sys.rewards.edge_cost[i]));
    }
    let mut exit = vec![0.0f64; n];
    for (s, edges) in adj.iter_mut().enumerate() {
        let mut cum = 0.0;
        for e in edges.iter_mut() {
            cum += e.0;
            e.0 = cum;
        }
        exit[s] = cum;
    }

    let samples: Vec<[f64; 4]> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
            rng.set_stream(run as u64);
            let mut s = sys.ctmc.initial as usize;
            let mut t = 0.0f64;
            let mut up = 0.0f64;
            let mut cost = 0.0f64;
            let mut failures = 0.0f64;
            let mut ever_failed = sys.failed[s];
            loop {
                let e = exit[s];
                let end = if e > 0.0 {
                    let u: f64 = 1.0 - rng.gen::<f64>();
                    (t - u.ln() / e).min(horizon)
                } else {
                    horizon
                };
                let dt = end - t;
                if !sys.failed[s] {
                    up += dt;
                }
                cost += sys.rewards.state_rate[s] * dt;
                t = end;
                if t >= horizon {
                    break;
                }
                let x: f64 = rng.gen::<f64>() * e;
                let edges = &adj[s];
                let mut pick = edges.len() - 1;
                for (i, edge) in edges.iter().enumerate() {
                    if x < edge.0 {
                        pick = i;
                        break;
                    }
                }
                let (_, dst, ecost) = edges[pick];
                cost += ecost;
                if !sys.failed[s] && sys.failed[dst as usize] {
                    failures += 1.0;
                    ever_failed = true;
                }
                s = dst as usize;
            }
            let avail = if horizon > 0.0 { up / horizon } else { 1.0 };
            [
                if ever_failed { 0.0 } else { 1.0 },
                avail,
                cost,
                failures,
            ]
        })
        .collect();
    summarize(&samples, cfg.runs)
}

// ---------------------------------------------------------------------------
// Deterministic-clock discrete-event simulation over the model itself.

#[derive(Clone, Copy, PartialEq)]
enum RmState {
    Idle,
    PendClean,
    PendReplace,
}

struct EbeSim {
    levels: u32,
    level_delay: f64,
    level: u32,
    /// Nominal time left in the current degradation level.
    remaining: f64,
    /// Degradation speed-up: 1, or gamma while the trigger is failed.
    rate: f64,
}

struct DetSim<'a> {
    tree: &'a FaultMaintenanceTree,
    ebes: Vec<EbeSim>,
    index: HashMap<NodeId, usize>,
    /// dependent index -> (gamma, trigger index)
    rdep: HashMap<usize, (f64, usize)>,
}

impl<'a> DetSim<'a> {
    fn new(tree: &'a FaultMaintenanceTree) -> DetSim<'a> {
        let mut ebes = Vec::new();
        let mut index = HashMap::new();
        for node in tree.real_ebes() {
            let p = node.ebe_params().unwrap();
            index.insert(node.id.clone(), ebes.len());
            ebes.push(EbeSim {
                levels: p.degradation_levels,
                level_delay: p.level_delay().years(),
                level: 0,
                remaining: p.level_delay().years(),
                rate: 1.0,
            });
        }
        // Shadows resolve to the component of the original.
        for node in tree.nodes.values() {
            if let Some(p) = node.ebe_params() {
                if let Some(of) = &p.shadow_of {
                    if let Some(&i) = index.get(of) {
                        index.insert(node.id.clone(), i);
                    }
                }
            }
        }
        let mut rdep = HashMap::new();
        for r in tree.rdeps() {
            if let NodeKind::Rdep { params } = &r.kind {
                if let Some(&trig) = index.get(&params.trigger) {
                    for dep in tree.rdep_dependents(r) {
                        if let Some(&d) = index.get(dep) {
                            rdep.insert(d, (params.gamma, trig));
                        }
                    }
                }
            }
        }
        DetSim {
            tree,
            ebes,
            index,
            rdep,
        }
    }

    fn top_failed(&self) -> bool {
        self.node_failed(&self.tree.top)
    }

    fn node_failed(&self, id: &NodeId) -> bool {
        let node = match self.tree.node(id) {
            Some(n) => n,
            None => return false,
        };
        match &node.kind {
            NodeKind::Ebe { .. } => self
                .index
                .get(id)
                .map(|&i| self.ebes[i].level == self.ebes[i].levels)
                .unwrap_or(false),
            NodeKind::Or => node.children.iter().any(|c| self.node_failed(c)),
            NodeKind::Event { .. } => node.children.iter().any(|c| self.node_failed(c)),
            NodeKind::Rdep { .. } => false,
        }
    }

    fn any_degraded(&self) -> bool {
        self.ebes.iter().any(|e| e.level > 0)
    }

    fn any_thresh(&self) -> bool {
        self.ebes
            .iter()
            .any(|e| e.level > 0 && e.level < e.levels)
    }

    fn refresh_rates(&mut self) {
        let failed: Vec<bool> = self
            .ebes
            .iter()
            .map(|e| e.level == e.levels)
            .collect();
        for (i, e) in self.ebes.iter_mut().enumerate() {
            e.rate = match self.rdep.get(&i) {
                Some(&(gamma, trig)) if failed[trig] => gamma,
                _ => 1.0,
            };
        }
    }

    fn advance(&mut self, dt: f64) {
        for e in self.ebes.iter_mut() {
            if e.level < e.levels {
                e.remaining = (e.remaining - dt * e.rate).max(0.0);
            }
        }
    }

    fn next_degrade(&self, now: f64) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (i, e) in self.ebes.iter().enumerate() {
            if e.level < e.levels && e.rate > 0.0 {
                let t = now + e.remaining / e.rate;
                if best.map(|(bt, _)| t < bt).unwrap_or(true) {
                    best = Some((t, i));
                }
            }
        }
        best
    }

    /// One level of improvement for every component, clocks restarted.
    fn clean(&mut self) {
        for e in self.ebes.iter_mut() {
            if e.level > 0 {
                e.level -= 1;
            }
            e.remaining = e.level_delay;
        }
        self.refresh_rates();
    }

    fn replace(&mut self) {
        for e in self.ebes.iter_mut() {
            e.level = 0;
            e.remaining = e.level_delay;
        }
        self.refresh_rates();
    }
}

/// Event kinds in fixed tie-break priority (lower = fires first at equal
/// times): perform_replace > perform_clean > inspect > checks > degrade.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ev {
    PerformReplace,
    PerformClean,
    Inspect,
    CheckReplace,
    CheckClean,
    Degrade,
}

/// Exact-clock trajectory of the model: every degradation level, repair
/// duration and maintenance period elapses deterministically. The
/// trajectory is unique, so the estimate has zero variance.
pub fn simulate_deterministic(tree: &FaultMaintenanceTree, cfg: &SimConfig) -> SimReport {
    assert!(cfg.runs >= 1);
    let horizon = cfg.horizon.years();
    let policy = &tree.policy;
    let costs = &tree.costs;
    let clean_enabled = policy.t_rp.is_some() || policy.t_in.is_some();
    let replace_enabled = policy.t_oh.is_some();
    let t_cln = policy.t_cln.years();
    let t_rpl = policy.t_rpl.years();

    let mut sim = DetSim::new(tree);
    sim.refresh_rates();
    let mut now = 0.0f64;
    let mut rm = RmState::Idle;
    let mut cln_done: Option<f64> = None;
    let mut rpl_done: Option<f64> = None;
    let mut trp_next = policy.t_rp.map(|d| d.years());
    let mut toh_next = policy.t_oh.map(|d| d.years());
    let mut tin_next = policy.t_in.map(|d| d.years());

    let mut up = 0.0f64;
    let mut cost = 0.0f64;
    let mut failures = 0.0f64;
    let mut was_failed = sim.top_failed();
    let mut ever_failed = was_failed;

    while now < horizon {
        // Pending maintenance becomes an action as soon as no action runs.
        if cln_done.is_none() && rpl_done.is_none() {
            match rm {
                RmState::PendReplace => {
                    rpl_done = Some(now + t_rpl);
                    rm = RmState::Idle;
                }
                RmState::PendClean => {
                    cln_done = Some(now + t_cln);
                    rm = RmState::Idle;
                }
                RmState::Idle => {}
            }
        }

        let mut candidates: Vec<(f64, Ev)> = Vec::new();
        if let Some(t) = rpl_done {
            candidates.push((t.max(now), Ev::PerformReplace));
        }
        if let Some(t) = cln_done {
            candidates.push((t.max(now), Ev::PerformClean));
        }
        // Timers wait while the repair module is occupied.
        if rm == RmState::Idle {
            if let Some(t) = tin_next {
                candidates.push((t.max(now), Ev::Inspect));
            }
            if let Some(t) = toh_next {
                candidates.push((t.max(now), Ev::CheckReplace));
            }
            if let Some(t) = trp_next {
                candidates.push((t.max(now), Ev::CheckClean));
            }
        }
        if let Some((t, _)) = sim.next_degrade(now) {
            candidates.push((t, Ev::Degrade));
        }

        let (t_ev, ev) = match candidates
            .into_iter()
            .min_by(|a, b| a.partial_cmp(b).unwrap())
        {
            Some(x) => x,
            None => break,
        };
        let t_ev_clamped = t_ev.min(horizon);
        let dt = t_ev_clamped - now;
        if !was_failed {
            up += dt;
        }
        cost += dt
            * (costs.operational_rate
                + if was_failed { costs.failure_rate } else { 0.0 });
        sim.advance(dt);
        now = t_ev_clamped;
        if t_ev > horizon {
            break;
        }

        match ev {
            Ev::PerformReplace => {
                sim.replace();
                cost += costs.replace_cost;
                rpl_done = None;
            }
            Ev::PerformClean => {
                sim.clean();
                cost += costs.clean_cost;
                cln_done = None;
            }
            Ev::Inspect => {
                cost += costs.inspect_cost;
                if sim.any_thresh() && clean_enabled {
                    rm = RmState::PendClean;
                }
                tin_next = Some(now + policy.t_in.unwrap().years());
            }
            Ev::CheckReplace => {
                if sim.any_degraded() && replace_enabled {
                    rm = RmState::PendReplace;
                }
                toh_next = Some(now + policy.t_oh.unwrap().years());
            }
            Ev::CheckClean => {
                if sim.any_degraded() && clean_enabled {
                    rm = RmState::PendClean;
                }
                trp_next = Some(now + policy.t_rp.unwrap().years());
            }
            Ev::Degrade => {
                if let Some((_, i)) = sim.next_degrade(now) {
                    debug_assert!(sim.ebes[i].remaining <= 1e-12);
                    sim.ebes[i].level += 1;
                    sim.ebes[i].remaining = sim.ebes[i].level_delay;
                    sim.refresh_rates();
                }
            }
        }
        let failed = sim.top_failed();
        if failed && !was_failed {
            failures += 1.0;
            ever_failed = true;
        }
        was_failed = failed;
    }
    if now < horizon {
        let dt = horizon - now;
        if !was_failed {
            up += dt;
        }
        cost += dt
            * (costs.operational_rate
                + if was_failed { costs.failure_rate } else { 0.0 });
    }

    let avail = if horizon > 0.0 { up / horizon } else { 1.0 };
    let sample = [
        if ever_failed { 0.0 } else { 1.0 },
        avail,
        cost,
        failures,
    ];
    // All runs are identical; report the single trajectory with zero
    // spread at the requested run count.
    summarize(&[sample], cfg.runs)
}

/// Dispatch on the configured delay mode.
pub fn simulate(
    sys: &SystemBundle,
    tree: &FaultMaintenanceTree,
    cfg: &SimConfig,
) -> SimReport {
    match cfg.delay_mode {
        DelayMode::PhaseType => simulate_bundle(sys, cfg),
        DelayMode::Deterministic => simulate_deterministic(tree, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        CostModel, EbeParams, FaultMaintenanceTree, FmtNode, MaintenancePolicy, NodeKind,
    };
    use crate::semantics::{assemble_system, AssembleOptions};
    use approx::assert_abs_diff_eq;
    use indexmap::IndexMap;

    fn single_ebe_tree(levels: u32, mttf_years: f64, policy: MaintenancePolicy) -> FaultMaintenanceTree {
        let mut nodes = IndexMap::new();
        nodes.insert(
            NodeId::from("top"),
            FmtNode {
                id: NodeId::from("top"),
                kind: NodeKind::Event {
                    name: "system failure".into(),
                },
                children: vec![NodeId::from("e1")],
            },
        );
        nodes.insert(
            NodeId::from("e1"),
            FmtNode {
                id: NodeId::from("e1"),
                kind: NodeKind::Ebe {
                    params: EbeParams {
                        degradation_levels: levels,
                        mttf: Duration::from_years(mttf_years),
                        erlang_phases: 1,
                        label: "e1".into(),
                        shadow_of: None,
                    },
                },
                children: vec![],
            },
        );
        FaultMaintenanceTree {
            nodes,
            top: NodeId::from("top"),
            policy,
            costs: CostModel {
                clean_cost: 10.0,
                inspect_cost: 5.0,
                replace_cost: 100.0,
                operational_rate: 1.0,
                failure_rate: 0.0,
            },
        }
    }

    fn cfg(runs: u32, horizon: f64, mode: DelayMode) -> SimConfig {
        SimConfig {
            runs,
            horizon: Duration::from_years(horizon),
            seed: 42,
            delay_mode: mode,
        }
    }

    #[test]
    fn phase_type_matches_exponential() {
        let tree = single_ebe_tree(1, 1.0, MaintenancePolicy::none());
        let sys = assemble_system(&tree, &AssembleOptions::default()).unwrap();
        let rep = simulate_bundle(&sys, &cfg(20_000, 1.0, DelayMode::PhaseType));
        let truth = (-1.0f64).exp();
        let z = (rep.reliability.mean - truth).abs() / rep.reliability.stderr;
        assert!(z <= 3.5, "z = {z}");
        assert!(rep.reliability.ci_lo <= rep.reliability.mean);
        assert!(rep.reliability.ci_hi >= rep.reliability.mean);
    }

    #[test]
    fn identical_seed_identical_output() {
        let tree = single_ebe_tree(2, 4.0, MaintenancePolicy::none());
        let sys = assemble_system(&tree, &AssembleOptions::default()).unwrap();
        let a = simulate_bundle(&sys, &cfg(2000, 6.0, DelayMode::PhaseType));
        let b = simulate_bundle(&sys, &cfg(2000, 6.0, DelayMode::PhaseType));
        assert_eq!(a.reliability.mean, b.reliability.mean);
        assert_eq!(a.expected_cost.mean, b.expected_cost.mean);
        assert_eq!(a.expected_failures.mean, b.expected_failures.mean);
    }

    #[test]
    fn deterministic_single_component_steps() {
        let tree = single_ebe_tree(1, 10.0, MaintenancePolicy::none());
        let before = simulate_deterministic(&tree, &cfg(5, 5.0, DelayMode::Deterministic));
        assert_eq!(before.reliability.mean, 1.0);
        assert_eq!(before.expected_failures.mean, 0.0);
        assert_eq!(before.reliability.stderr, 0.0);
        let after = simulate_deterministic(&tree, &cfg(5, 15.0, DelayMode::Deterministic));
        assert_eq!(after.reliability.mean, 0.0);
        assert_eq!(after.expected_failures.mean, 1.0);
        assert_abs_diff_eq!(after.availability.mean, 10.0 / 15.0, epsilon = 1e-12);
    }

    #[test]
    fn deterministic_periodic_clean_prevents_failure() {
        let mut policy = MaintenancePolicy::none();
        policy.t_rp = Some(Duration::from_years(4.0));
        policy.t_cln = Duration::from_days(1.0);
        let tree = single_ebe_tree(2, 10.0, policy);
        let rep = simulate_deterministic(&tree, &cfg(1, 40.0, DelayMode::Deterministic));
        // Levels take 5y; a clean every 4y keeps the component from ever
        // reaching the failed level.
        assert_eq!(rep.reliability.mean, 1.0);
        assert_eq!(rep.expected_failures.mean, 0.0);
        assert!(rep.expected_cost.mean > 40.0, "cleans were charged");
    }

    #[test]
    fn cross_check_contract() {
        let est = SimEstimate {
            mean: 0.5,
            stderr: 0.01,
            ci_lo: 0.48,
            ci_hi: 0.52,
            runs: 100,
        };
        assert!(cross_check(0.5, &est).pass);
        assert_eq!(cross_check(0.5, &est).z, 0.0);
        assert!(cross_check(0.52, &est).pass);
        assert!(!cross_check(0.55, &est).pass);
        let exact = SimEstimate {
            mean: 1.0,
            stderr: 0.0,
            ci_lo: 1.0,
            ci_hi: 1.0,
            runs: 1,
        };
        assert!(cross_check(1.0, &exact).pass);
        assert!(!cross_check(0.9, &exact).pass);
    }

    #[test]
    fn erlang_chain_reliability_matches_cdf() {
        // 3-level component over 9y: failure time Erlang(3, 1/3).
        let tree = single_ebe_tree(3, 9.0, MaintenancePolicy::none());
        let sys = assemble_system(&tree, &AssembleOptions::default()).unwrap();
        let rep = simulate_bundle(&sys, &cfg(20_000, 9.0, DelayMode::PhaseType));
        let truth = 1.0 - crate::analysis::erlang_cdf(3, 1.0 / 3.0, 9.0);
        let z = (rep.reliability.mean - truth).abs() / rep.reliability.stderr;
        assert!(z <= 3.5, "z = {z}");
    }
}
