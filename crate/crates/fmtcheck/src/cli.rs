//! Command-line front end: validate, analyze, compare, decompose, export.

use crate::analysis::{evaluate, HorizonMetrics, NumericsConfig};
use crate::decomposition::{abstract_analyze, find_and_split, state_space_report};
use crate::duration::Duration;
use crate::model::{parse_model, to_dot, FaultMaintenanceTree};
use crate::report::{render_csv, ReportRow};
use crate::semantics::{assemble_system, AssembleOptions, SystemBundle};
use crate::simulate::{
    cross_check, simulate_bundle, simulate_deterministic, DelayMode, SimConfig, SimReport,
};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use std::path::{Path, PathBuf};

/// Exit codes: 0 ok, 1 usage, 2 model/config problem, 3 numeric failure.
enum AppError {
    Usage(String),
    Model(String),
    Numeric(String),
}

impl AppError {
    fn code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 1,
            AppError::Model(_) => 2,
            AppError::Numeric(_) => 3,
        }
    }
    fn message(&self) -> &str {
        match self {
            AppError::Usage(m) | AppError::Model(m) | AppError::Numeric(m) => m,
        }
    }
}

type AppResult<T> = Result<T, AppError>;

#[derive(Parser)]
#[command(
    name = "fmtcheck",
    version,
    about = "Dependability analysis of fault trees with degradation and maintenance"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a model and list well-formedness violations.
    Validate { model: PathBuf },
    /// Compute metrics over horizons and emit a CSV report.
    Analyze(AnalyzeArgs),
    /// Evaluate every strategy in a strategy file and rank them.
    Compare(CompareArgs),
    /// Show the decomposition plan and state-space comparison.
    Decompose(DecomposeArgs),
    /// Write a derived artifact (graph, flat chain, model-checker sketch).
    Export(ExportArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Engine {
    Numeric,
    Mc,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Monolithic,
    Decomposed,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DelayModeArg {
    #[value(name = "phase_type")]
    PhaseType,
    Deterministic,
}

#[derive(Parser)]
struct AnalyzeArgs {
    model: PathBuf,
    /// Strategy file (JSON); required when --strategy is given.
    #[arg(long)]
    strategy_file: Option<PathBuf>,
    /// Strategy name from the strategy file; "none" disables maintenance.
    #[arg(long)]
    strategy: Option<String>,
    /// Comma-separated subset of reliability,availability,expected_cost,expected_failures, or "all".
    #[arg(long, default_value = "all")]
    metrics: String,
    /// Comma-separated horizons; plain numbers are years, units (d|mo|y) accepted.
    #[arg(long, default_value = "0,5,10,15,20,25")]
    horizons: String,
    #[arg(long, value_enum, default_value_t = Engine::Numeric)]
    engine: Engine,
    #[arg(long, value_enum, default_value_t = Mode::Monolithic)]
    mode: Mode,
    /// Override the model's maintenance-timer phase count.
    #[arg(long)]
    phases: Option<u32>,
    /// Phase count of abstract nodes in decomposed mode.
    #[arg(long, default_value_t = 4)]
    abstract_phases: u32,
    #[arg(long, default_value_t = 1e-9)]
    epsilon: f64,
    #[arg(long, default_value_t = 5_000_000)]
    max_iterations: usize,
    /// State budget for the composed chain.
    #[arg(long)]
    max_states: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    runs: u32,
    #[arg(long, value_enum, default_value_t = DelayModeArg::PhaseType)]
    delay_mode: DelayModeArg,
    /// With --engine both: fail (exit 3) if any z-score exceeds 3.
    #[arg(long)]
    strict: bool,
    /// Write the CSV here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Parser)]
struct CompareArgs {
    model: PathBuf,
    #[arg(long)]
    strategies: PathBuf,
    #[arg(long, default_value = "all")]
    metrics: String,
    #[arg(long, default_value = "0,5,10,15,20,25")]
    horizons: String,
    #[arg(long, value_enum, default_value_t = Mode::Monolithic)]
    mode: Mode,
    #[arg(long)]
    phases: Option<u32>,
    #[arg(long, default_value_t = 4)]
    abstract_phases: u32,
    #[arg(long, default_value_t = 1e-9)]
    epsilon: f64,
    #[arg(long, default_value_t = 5_000_000)]
    max_iterations: usize,
    #[arg(long)]
    max_states: Option<usize>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Parser)]
struct DecomposeArgs {
    model: PathBuf,
    #[arg(long)]
    strategy_file: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<String>,
    /// Fit horizon for the abstraction table.
    #[arg(long, default_value = "10")]
    horizon: String,
    /// Write the abstraction plan (JSON) to this path instead of stdout.
    #[arg(long)]
    emit_plan: Option<PathBuf>,
    /// Also compare monolithic vs decomposed state-space sizes.
    #[arg(long)]
    report_states: bool,
    /// Exploration budget for the monolithic state count.
    #[arg(long, default_value_t = 2_000_000)]
    budget: usize,
    #[arg(long)]
    phases: Option<u32>,
    #[arg(long, default_value_t = 4)]
    abstract_phases: u32,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExportWhat {
    Dot,
    Ctmc,
    PrismSketch,
}

#[derive(Parser)]
struct ExportArgs {
    model: PathBuf,
    #[arg(long, value_enum)]
    what: ExportWhat,
    #[arg(long)]
    phases: Option<u32>,
    #[arg(long, default_value_t = 200_000)]
    max_states: usize,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Deserialize)]
struct StrategyFile {
    strategies: Vec<StrategyDef>,
}

#[derive(Clone, Deserialize)]
struct StrategyDef {
    name: String,
    #[serde(default)]
    t_rp: Option<Duration>,
    #[serde(default)]
    t_oh: Option<Duration>,
    #[serde(default)]
    t_in: Option<Duration>,
}

fn configure_threads() {
    if let Ok(v) = std::env::var("FMTCHECK_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
}

pub fn run() -> i32 {
    configure_threads();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap prints help/version through the error path with exit 0.
            let benign = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if benign { 0 } else { 1 };
        }
    };
    let result = match cli.cmd {
        Cmd::Validate { model } => cmd_validate(&model),
        Cmd::Analyze(args) => cmd_analyze(&args),
        Cmd::Compare(args) => cmd_compare(&args),
        Cmd::Decompose(args) => cmd_decompose(&args),
        Cmd::Export(args) => cmd_export(&args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn load_model(path: &Path) -> AppResult<FaultMaintenanceTree> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Model(format!("{}: {e}", path.display())))?;
    parse_model(&text).map_err(|e| AppError::Model(format!("{}: {e}", path.display())))
}

fn load_strategies(path: &Path) -> AppResult<Vec<StrategyDef>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Model(format!("{}: {e}", path.display())))?;
    let file: StrategyFile = serde_json::from_str(&text)
        .map_err(|e| AppError::Model(format!("{}: {e}", path.display())))?;
    let mut seen = std::collections::HashSet::new();
    for s in &file.strategies {
        if !seen.insert(s.name.clone()) {
            return Err(AppError::Model(format!(
                "duplicate strategy name {}",
                s.name
            )));
        }
    }
    Ok(file.strategies)
}

fn apply_strategy(tree: &mut FaultMaintenanceTree, s: &StrategyDef) {
    tree.policy.t_rp = s.t_rp;
    tree.policy.t_oh = s.t_oh;
    tree.policy.t_in = s.t_in;
}

fn parse_horizons(spec: &str) -> AppResult<Vec<f64>> {
    let mut out = Vec::new();
    for tok in spec.split(',') {
        let tok = tok.trim();
        if tok.is_empty() {
            continue;
        }
        let years = if let Ok(v) = tok.parse::<f64>() {
            v
        } else {
            tok.parse::<Duration>()
                .map_err(|e| AppError::Usage(format!("bad horizon {tok:?}: {e}")))?
                .years()
        };
        if !(years >= 0.0 && years.is_finite()) {
            return Err(AppError::Usage(format!("bad horizon {tok:?}")));
        }
        out.push(years);
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup();
    if out.is_empty() {
        return Err(AppError::Usage("no horizons given".into()));
    }
    Ok(out)
}

const METRIC_NAMES: [&str; 4] = [
    "reliability",
    "availability",
    "expected_cost",
    "expected_failures",
];

fn parse_metrics(spec: &str) -> AppResult<Vec<&'static str>> {
    if spec == "all" {
        return Ok(METRIC_NAMES.to_vec());
    }
    let mut out = Vec::new();
    for tok in spec.split(',') {
        let tok = tok.trim();
        match METRIC_NAMES.iter().find(|m| **m == tok) {
            Some(m) => {
                if !out.contains(m) {
                    out.push(*m)
                }
            }
            None => {
                return Err(AppError::Usage(format!(
                    "unknown metric {tok:?} (expected one of {})",
                    METRIC_NAMES.join(", ")
                )))
            }
        }
    }
    if out.is_empty() {
        return Err(AppError::Usage("no metrics given".into()));
    }
    Ok(out)
}

fn metric_of(m: &HorizonMetrics, name: &str) -> f64 {
    match name {
        "reliability" => m.reliability,
        "availability" => m.availability,
        "expected_cost" => m.expected_cost,
        "expected_failures" => m.expected_failures,
        _ => unreachable!(),
    }
}

fn sim_metric_of(r: &SimReport, name: &str) -> crate::simulate::SimEstimate {
    match name {
        "reliability" => r.reliability,
        "availability" => r.availability,
        "expected_cost" => r.expected_cost,
        "expected_failures" => r.expected_failures,
        _ => unreachable!(),
    }
}

fn validate_or_fail(tree: &FaultMaintenanceTree, path: &Path) -> AppResult<()> {
    let violations = tree.validate();
    if violations.is_empty() {
        return Ok(());
    }
    let mut msg = format!("{} is not well-formed:", path.display());
    for v in violations {
        msg.push_str(&format!("\n  - {v:?}"));
    }
    Err(AppError::Model(msg))
}

fn cmd_validate(path: &Path) -> AppResult<()> {
    let tree = load_model(path)?;
    validate_or_fail(&tree, path)?;
    println!(
        "{}: ok ({} nodes, top event {})",
        path.display(),
        tree.nodes.len(),
        tree.top
    );
    Ok(())
}

struct NumericSetup {
    numerics: NumericsConfig,
    assemble: AssembleOptions,
}

fn numeric_metrics(
    tree: &FaultMaintenanceTree,
    horizons: &[f64],
    mode: Mode,
    abstract_phases: u32,
    setup: &NumericSetup,
) -> AppResult<Vec<HorizonMetrics>> {
    match mode {
        Mode::Monolithic => {
            let full = assemble_system(tree, &setup.assemble)
                .map_err(|e| AppError::Numeric(e.to_string()))?;
            let absorbing = assemble_system(
                tree,
                &AssembleOptions {
                    absorb_failed: true,
                    ..setup.assemble.clone()
                },
            )
            .map_err(|e| AppError::Numeric(e.to_string()))?;
            evaluate(&full, &absorbing, horizons, &setup.numerics)
                .map_err(|e| AppError::Numeric(e.to_string()))
        }
        Mode::Decomposed => abstract_analyze(
            tree,
            horizons,
            abstract_phases,
            &setup.assemble,
            &setup.numerics,
        )
        .map(|a| a.metrics)
        .map_err(|e| AppError::Numeric(e.to_string())),
    }
}

fn full_bundle(tree: &FaultMaintenanceTree, setup: &NumericSetup) -> AppResult<SystemBundle> {
    assemble_system(tree, &setup.assemble).map_err(|e| AppError::Numeric(e.to_string()))
}

fn write_or_print(output: &Option<PathBuf>, text: &str) -> AppResult<()> {
    match output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| AppError::Model(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_analyze(args: &AnalyzeArgs) -> AppResult<()> {
    let mut tree = load_model(&args.model)?;
    let mut strategy_name = "model".to_string();
    if let Some(name) = &args.strategy {
        let file = args.strategy_file.as_ref().ok_or_else(|| {
            AppError::Usage("--strategy requires --strategy-file".into())
        })?;
        let strategies = load_strategies(file)?;
        let s = strategies
            .iter()
            .find(|s| s.name == *name)
            .ok_or_else(|| AppError::Model(format!("strategy {name:?} not in file")))?;
        apply_strategy(&mut tree, s);
        strategy_name = s.name.clone();
    }
    if let Some(p) = args.phases {
        tree.policy.timer_phases = p;
    }
    validate_or_fail(&tree, &args.model)?;

    let horizons = parse_horizons(&args.horizons)?;
    let metrics = parse_metrics(&args.metrics)?;
    let setup = NumericSetup {
        numerics: NumericsConfig {
            epsilon: args.epsilon,
            max_iterations: args.max_iterations,
        },
        assemble: AssembleOptions {
            max_states: args.max_states,
            ..AssembleOptions::default()
        },
    };
    let model_name = model_label(&args.model);

    let mut rows: Vec<ReportRow> = Vec::new();
    let numeric = if args.engine != Engine::Mc {
        let nm = numeric_metrics(&tree, &horizons, args.mode, args.abstract_phases, &setup)?;
        for (h, m) in horizons.iter().zip(&nm) {
            for name in &metrics {
                rows.push(ReportRow::numeric(
                    &model_name,
                    &strategy_name,
                    name,
                    *h,
                    metric_of(m, name),
                ));
            }
        }
        Some(nm)
    } else {
        None
    };

    let mut any_z_fail = false;
    if args.engine != Engine::Numeric {
        let bundle = match args.delay_mode {
            DelayModeArg::PhaseType => Some(full_bundle(&tree, &setup)?),
            DelayModeArg::Deterministic => None,
        };
        for (hi, &h) in horizons.iter().enumerate() {
            let cfg = SimConfig {
                runs: args.runs,
                horizon: Duration::from_years(h),
                seed: args.seed,
                delay_mode: match args.delay_mode {
                    DelayModeArg::PhaseType => DelayMode::PhaseType,
                    DelayModeArg::Deterministic => DelayMode::Deterministic,
                },
            };
            let rep = match &bundle {
                Some(b) => simulate_bundle(b, &cfg),
                None => simulate_deterministic(&tree, &cfg),
            };
            for name in &metrics {
                let est = sim_metric_of(&rep, name);
                let z = numeric.as_ref().map(|nm| {
                    let check = cross_check(metric_of(&nm[hi], name), &est);
                    if !check.pass {
                        any_z_fail = true;
                    }
                    check.z
                });
                rows.push(ReportRow {
                    model: model_name.clone(),
                    strategy: strategy_name.clone(),
                    metric: name.to_string(),
                    horizon: h,
                    engine: "mc".to_string(),
                    value: est.mean,
                    stderr: Some(est.stderr),
                    ci_lo: Some(est.ci_lo),
                    ci_hi: Some(est.ci_hi),
                    runs: Some(est.runs),
                    seed: Some(args.seed),
                    z,
                });
            }
        }
    }

    let csv = render_csv(&mut rows, args.engine == Engine::Both);
    write_or_print(&args.output, &csv)?;
    if args.strict && any_z_fail {
        return Err(AppError::Numeric(
            "cross-check failed: a z-score exceeded 3".into(),
        ));
    }
    Ok(())
}

fn model_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn cmd_compare(args: &CompareArgs) -> AppResult<()> {
    let base = load_model(&args.model)?;
    let strategies = load_strategies(&args.strategies)?;
    if strategies.is_empty() {
        return Err(AppError::Model("strategy file is empty".into()));
    }
    let horizons = parse_horizons(&args.horizons)?;
    let metrics = parse_metrics(&args.metrics)?;
    let setup = NumericSetup {
        numerics: NumericsConfig {
            epsilon: args.epsilon,
            max_iterations: args.max_iterations,
        },
        assemble: AssembleOptions {
            max_states: args.max_states,
            ..AssembleOptions::default()
        },
    };
    let model_name = model_label(&args.model);

    let mut rows: Vec<ReportRow> = Vec::new();
    // (strategy, horizon) -> (failures, cost) for the ranking summary.
    let mut ranking: Vec<(String, Vec<(f64, f64, f64)>)> = Vec::new();
    for s in &strategies {
        let mut tree = base.clone();
        apply_strategy(&mut tree, s);
        if let Some(p) = args.phases {
            tree.policy.timer_phases = p;
        }
        validate_or_fail(&tree, &args.model)?;
        let nm = numeric_metrics(&tree, &horizons, args.mode, args.abstract_phases, &setup)?;
        let mut cells = Vec::new();
        for (h, m) in horizons.iter().zip(&nm) {
            for name in &metrics {
                rows.push(ReportRow::numeric(
                    &model_name,
                    &s.name,
                    name,
                    *h,
                    metric_of(m, name),
                ));
            }
            cells.push((*h, m.expected_failures, m.expected_cost));
        }
        ranking.push((s.name.clone(), cells));
    }

    let csv = render_csv(&mut rows, false);
    write_or_print(&args.output, &csv)?;

    // Ranking: fewest expected failures first, cheapest breaking ties.
    for (hi, &h) in horizons.iter().enumerate() {
        let mut order: Vec<&(String, Vec<(f64, f64, f64)>)> = ranking.iter().collect();
        order.sort_by(|a, b| {
            let (_, fa, ca) = a.1[hi];
            let (_, fb, cb) = b.1[hi];
            fa.partial_cmp(&fb)
                .unwrap()
                .then(ca.partial_cmp(&cb).unwrap())
                .then(a.0.cmp(&b.0))
        });
        let names: Vec<&str> = order.iter().map(|(n, _)| n.as_str()).collect();
        eprintln!("ranking at {h}y (failures asc, cost asc): {}", names.join(" > "));
    }
    Ok(())
}

fn cmd_decompose(args: &DecomposeArgs) -> AppResult<()> {
    let mut tree = load_model(&args.model)?;
    if let Some(name) = &args.strategy {
        let file = args.strategy_file.as_ref().ok_or_else(|| {
            AppError::Usage("--strategy requires --strategy-file".into())
        })?;
        let strategies = load_strategies(file)?;
        let s = strategies
            .iter()
            .find(|s| s.name == *name)
            .ok_or_else(|| AppError::Model(format!("strategy {name:?} not in file")))?;
        apply_strategy(&mut tree, s);
    }
    if let Some(p) = args.phases {
        tree.policy.timer_phases = p;
    }
    validate_or_fail(&tree, &args.model)?;
    let horizon = parse_horizons(&args.horizon)?;

    let dup = tree.duplicate_rdep_inputs();
    let plan = if horizon.iter().any(|h| *h > 0.0) && !find_and_split(&dup, args.abstract_phases).is_monolithic()
    {
        // Fit the abstraction table at the requested horizon.
        abstract_analyze(
            &tree,
            &horizon,
            args.abstract_phases,
            &AssembleOptions::default(),
            &NumericsConfig::default(),
        )
        .map_err(|e| AppError::Numeric(e.to_string()))?
        .plan
    } else {
        find_and_split(&dup, args.abstract_phases)
    };

    let plan_json = serde_json::to_string_pretty(&plan).expect("plan serialization");
    match &args.emit_plan {
        Some(path) => std::fs::write(path, &plan_json)
            .map_err(|e| AppError::Model(format!("{}: {e}", path.display())))?,
        None => println!("{plan_json}"),
    }

    if args.report_states {
        let rep = state_space_report(&tree, &AssembleOptions::default(), args.budget)
            .map_err(|e| AppError::Numeric(e.to_string()))?;
        println!(
            "states: monolithic {}{}, decomposed {}, reduction {:.1}%{}",
            rep.monolithic_states,
            if rep.monolithic_truncated { "+" } else { "" },
            rep.abstract_states,
            rep.reduction_pct,
            if rep.monolithic_truncated {
                " (lower bound)"
            } else {
                ""
            }
        );
    }
    Ok(())
}

fn prism_sketch(bundle: &SystemBundle, name: &str) -> String {
    let c = &bundle.ctmc;
    let mut out = String::new();
    out.push_str("// best-effort sketch of the composed chain; for manual\n");
    out.push_str("// cross-checks only, not a supported interchange format\n");
    out.push_str("ctmc\n\n");
    out.push_str(&format!("module {name}\n"));
    out.push_str(&format!(
        "  s : [0..{}] init {};\n",
        c.num_states().saturating_sub(1),
        c.initial
    ));
    for t in &c.transitions {
        out.push_str(&format!(
            "  [{}] s={} -> {}:(s'={});\n",
            c.label_name(t.label),
            t.src,
            t.rate,
            t.dst
        ));
    }
    out.push_str("endmodule\n\n");
    let failed: Vec<String> = bundle
        .failed
        .iter()
        .enumerate()
        .filter(|(_, f)| **f)
        .map(|(s, _)| format!("s={s}"))
        .collect();
    out.push_str(&format!(
        "label \"failed\" = {};\n",
        if failed.is_empty() {
            "false".to_string()
        } else {
            failed.join(" | ")
        }
    ));
    out
}

fn cmd_export(args: &ExportArgs) -> AppResult<()> {
    let mut tree = load_model(&args.model)?;
    if let Some(p) = args.phases {
        tree.policy.timer_phases = p;
    }
    validate_or_fail(&tree, &args.model)?;
    let text = match args.what {
        ExportWhat::Dot => to_dot(&tree),
        ExportWhat::Ctmc | ExportWhat::PrismSketch => {
            let bundle = assemble_system(
                &tree,
                &AssembleOptions {
                    max_states: Some(args.max_states),
                    ..AssembleOptions::default()
                },
            )
            .map_err(|e| AppError::Numeric(e.to_string()))?;
            match args.what {
                ExportWhat::Ctmc => crate::ctmc::export_flat(&bundle.ctmc),
                _ => prism_sketch(&bundle, &model_label(&args.model)),
            }
        }
    };
    write_or_print(&args.output, &text)
}
