//! CSV report rows shared by the numeric and Monte Carlo engines.

/// One (model, strategy, metric, horizon, engine) cell.
#[derive(Clone, Debug)]
pub struct ReportRow {
    pub model: String,
    pub strategy: String,
    pub metric: String,
    pub horizon: f64,
    pub engine: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub runs: Option<u32>,
    pub seed: Option<u64>,
    pub z: Option<f64>,
}

impl ReportRow {
    pub fn numeric(
        model: &str,
        strategy: &str,
        metric: &str,
        horizon: f64,
        value: f64,
    ) -> ReportRow {
        ReportRow {
            model: model.to_string(),
            strategy: strategy.to_string(),
            metric: metric.to_string(),
            horizon,
            engine: "numeric".to_string(),
            value,
            stderr: None,
            ci_lo: None,
            ci_hi: None,
            runs: None,
            seed: None,
            z: None,
        }
    }
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

/// Deterministic CSV: rows sorted by (strategy, metric, horizon, engine).
/// The z column is appended only for dual-engine runs.
pub fn render_csv(rows: &mut Vec<ReportRow>, with_z: bool) -> String {
    rows.sort_by(|a, b| {
        (&a.strategy, &a.metric)
            .cmp(&(&b.strategy, &b.metric))
            .then(a.horizon.partial_cmp(&b.horizon).unwrap())
            .then(a.engine.cmp(&b.engine))
    });
    let mut out = String::from("model,strategy,metric,horizon,engine,value,stderr,ci_lo,ci_hi,runs,seed");
    if with_z {
        out.push_str(",z");
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.model,
            r.strategy,
            r.metric,
            r.horizon,
            r.engine,
            r.value,
            opt(&r.stderr),
            opt(&r.ci_lo),
            opt(&r.ci_hi),
            opt(&r.runs),
            opt(&r.seed),
        ));
        if with_z {
            out.push(',');
            out.push_str(&opt(&r.z));
        }
        out.push('\n');
    }
    out
}
