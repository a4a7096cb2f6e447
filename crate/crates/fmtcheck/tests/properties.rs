//! Property-based suites over randomized models: schema round-trips,
//! compilation invariants, and engine self-consistency.

use fmtcheck::analysis::{evaluate, reliability_series, NumericsConfig};
use fmtcheck::duration::Duration;
use fmtcheck::model::{
    parse_model, serialize_model, CostModel, EbeParams, FaultMaintenanceTree, FmtNode,
    MaintenancePolicy, NodeId, NodeKind, RdepParams,
};
use fmtcheck::semantics::{assemble_system, AssembleOptions};
use indexmap::IndexMap;
use proptest::prelude::*;

fn ebe_node(id: String, levels: u32, mttf_days: u32, phases: u32, label: String) -> FmtNode {
    FmtNode {
        id: NodeId::new(id),
        kind: NodeKind::Ebe {
            params: EbeParams {
                degradation_levels: levels,
                mttf: Duration::from_days(mttf_days as f64),
                erlang_phases: phases,
                label,
                shadow_of: None,
            },
        },
        children: Vec::new(),
    }
}

prop_compose! {
    fn arb_policy()(
        t_rp in proptest::option::of(200u32..2000),
        t_oh in proptest::option::of(1000u32..6000),
        t_in in proptest::option::of(100u32..1500),
        timer_phases in 1u32..3,
    ) -> MaintenancePolicy {
        MaintenancePolicy {
            t_rp: t_rp.map(|d| Duration::from_days(d as f64)),
            t_oh: t_oh.map(|d| Duration::from_days(d as f64)),
            t_in: t_in.map(|d| Duration::from_days(d as f64)),
            t_cln: Duration::from_days(1.0),
            t_rpl: Duration::from_days(7.0),
            timer_phases,
        }
    }
}

prop_compose! {
    fn arb_tree()(
        n_ebes in 1usize..4,
        seeds in proptest::collection::vec((1u32..4, 200u32..20000, 1u32..3), 4),
        policy in arb_policy(),
        with_rdep in proptest::bool::ANY,
        gamma in 1.0f64..4.0,
        clean_cost in 0.0f64..200.0,
    ) -> FaultMaintenanceTree {
        let mut nodes: IndexMap<NodeId, FmtNode> = IndexMap::new();
        let mut leaf_ids = Vec::new();
        for i in 0..n_ebes {
            let (levels, mttf, phases) = seeds[i];
            let id = format!("e{i}");
            leaf_ids.push(NodeId::from(id.as_str()));
            let node = ebe_node(id.clone(), levels, mttf, phases, format!("wear {i}"));
            nodes.insert(node.id.clone(), node);
        }
        let mut top_children = leaf_ids.clone();
        if with_rdep && n_ebes >= 2 {
            let rdep = FmtNode {
                id: "r0".into(),
                kind: NodeKind::Rdep {
                    params: RdepParams { gamma, trigger: leaf_ids[0].clone() },
                },
                children: vec![leaf_ids[1].clone()],
            };
            top_children.push(rdep.id.clone());
            nodes.insert(rdep.id.clone(), rdep);
        }
        let top = if top_children.len() == 1 {
            FmtNode {
                id: "top".into(),
                kind: NodeKind::Event { name: "system failure".into() },
                children: top_children,
            }
        } else {
            FmtNode { id: "top".into(), kind: NodeKind::Or, children: top_children }
        };
        nodes.insert(top.id.clone(), top);
        FaultMaintenanceTree {
            nodes,
            top: "top".into(),
            policy,
            costs: CostModel {
                clean_cost,
                inspect_cost: 5.0,
                replace_cost: 100.0,
                operational_rate: 1.0,
                failure_rate: 2.0,
            },
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn parse_serialize_round_trip(tree in arb_tree()) {
        prop_assert!(tree.validate().is_empty());
        let text = serialize_model(&tree);
        let back = parse_model(&text).unwrap();
        prop_assert_eq!(&back, &tree);
        // Serialization is a pure function of the tree.
        prop_assert_eq!(serialize_model(&back), text);
    }

    #[test]
    fn validate_is_pure(tree in arb_tree()) {
        prop_assert_eq!(tree.validate(), tree.validate());
        let dup = tree.duplicate_rdep_inputs();
        prop_assert!(dup.validate().is_empty());
        prop_assert_eq!(dup.duplicate_rdep_inputs(), dup);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Without maintenance there is no repair label anywhere, so failure
    /// probability can only grow with the horizon.
    #[test]
    fn unreliability_monotone_without_maintenance(mut tree in arb_tree()) {
        tree.policy = MaintenancePolicy {
            timer_phases: tree.policy.timer_phases,
            ..MaintenancePolicy::none()
        };
        let bundle = assemble_system(
            &tree,
            &AssembleOptions { absorb_failed: true, ..Default::default() },
        ).unwrap();
        let horizons = [1.0, 3.0, 8.0, 20.0, 60.0];
        let rel = reliability_series(&bundle, &horizons, &NumericsConfig::default()).unwrap();
        for w in rel.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "reliability increased: {:?}", rel);
        }
    }

    /// The two repair delays are mutually exclusive: no reachable state
    /// runs a clean and a replacement at the same time.
    #[test]
    fn single_maintenance_action(mut tree in arb_tree()) {
        tree.policy.t_rp = Some(Duration::from_days(400.0));
        tree.policy.t_oh = Some(Duration::from_days(900.0));
        let bundle = assemble_system(&tree, &AssembleOptions::default()).unwrap();
        let c = &bundle.ctmc;
        let (cln, rpl) = match (c.prop_id("cln_busy"), c.prop_id("rpl_busy")) {
            (Some(a), Some(b)) => (a, b),
            _ => return Ok(()),
        };
        for mask in &c.state_props {
            let both = mask & (1u128 << cln) != 0 && mask & (1u128 << rpl) != 0;
            prop_assert!(!both, "state runs clean and replace simultaneously");
        }
    }

    /// With the failed part absorbing, the failure counter can fire at
    /// most once per run: expected failures equal the unreliability.
    #[test]
    fn failure_counter_single_fire(tree in arb_tree()) {
        let absorbing = assemble_system(
            &tree,
            &AssembleOptions { absorb_failed: true, ..Default::default() },
        ).unwrap();
        let m = evaluate(&absorbing, &absorbing, &[7.0], &NumericsConfig::default())
            .unwrap().remove(0);
        prop_assert!((m.expected_failures - (1.0 - m.reliability)).abs() < 1e-7,
            "failures {} vs unreliability {}", m.expected_failures, 1.0 - m.reliability);
    }
}

/// A dependency with acceleration factor 1 changes nothing: the composed
/// chain is identical to the one without the dependency node.
#[test]
fn gamma_one_rdep_is_identity() {
    let make = |with_rdep: bool| {
        let mut nodes: IndexMap<NodeId, FmtNode> = IndexMap::new();
        for (i, mttf) in [(0, 1100u32), (1, 2900)] {
            let n = ebe_node(format!("e{i}"), 2, mttf, 1, format!("wear {i}"));
            nodes.insert(n.id.clone(), n);
        }
        let mut children = vec![NodeId::from("e0"), NodeId::from("e1")];
        if with_rdep {
            let rdep = FmtNode {
                id: "r0".into(),
                kind: NodeKind::Rdep {
                    params: RdepParams {
                        gamma: 1.0,
                        trigger: "e0".into(),
                    },
                },
                children: vec![NodeId::from("e1")],
            };
            children.push(rdep.id.clone());
            nodes.insert(rdep.id.clone(), rdep);
        }
        nodes.insert(
            NodeId::from("top"),
            FmtNode {
                id: "top".into(),
                kind: NodeKind::Or,
                children,
            },
        );
        FaultMaintenanceTree {
            nodes,
            top: "top".into(),
            policy: MaintenancePolicy {
                t_rp: Some(Duration::from_days(700.0)),
                ..MaintenancePolicy::none()
            },
            costs: CostModel::default(),
        }
    };
    let with = assemble_system(&make(true), &AssembleOptions::default()).unwrap();
    let without = assemble_system(&make(false), &AssembleOptions::default()).unwrap();
    assert_eq!(
        with.ctmc.canonical_signature(),
        without.ctmc.canonical_signature()
    );
}

/// Identical CLI invocations produce byte-identical CSV.
#[test]
fn csv_deterministic_under_fixed_seed() {
    let bin = env!("CARGO_BIN_EXE_fmtcheck");
    let model = concat!(env!("CARGO_MANIFEST_DIR"), "/data/toys/clean.fmt.json");
    let run = || {
        let out = std::process::Command::new(bin)
            .args([
                "analyze",
                model,
                "--horizons",
                "0,2,5",
                "--engine",
                "both",
                "--runs",
                "4000",
                "--seed",
                "99",
            ])
            .env("FMTCHECK_THREADS", "4")
            .output()
            .expect("run fmtcheck");
        assert!(out.status.success());
        out.stdout
    };
    let a = run();
    assert_eq!(a, run());
    assert!(String::from_utf8(a).unwrap().starts_with(
        "model,strategy,metric,horizon,engine,value,stderr,ci_lo,ci_hi,runs,seed,z"
    ));
}
