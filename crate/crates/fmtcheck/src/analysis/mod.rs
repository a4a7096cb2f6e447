//! Transient numerical engine: uniformization for state distributions and
//! accumulated (state + impulse) rewards, and the four dependability
//! metrics evaluated over a set of horizons.

use crate::ctmc::Ctmc;
use crate::semantics::SystemBundle;
use rayon::prelude::*;

#[derive(Clone, Copy, Debug)]
pub struct NumericsConfig {
    /// Truncation tolerance on the Poisson tail mass.
    pub epsilon: f64,
    /// Cap on Poisson terms per analysis leg.
    pub max_iterations: usize,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            epsilon: 1e-9,
            max_iterations: 5_000_000,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("uniformization needs more than {cap} terms (rate x time = {lambda_t:.3e}); raise max_iterations or split the horizon")]
    IterationCap { lambda_t: f64, cap: usize },
    #[error("MTTF is undefined for failure probability {d}; change the fit horizon")]
    MttfUndefined { d: f64 },
}

/// The uniformized jump chain, stored column-major (CSR of P transposed) so
/// that a distribution-vector step gathers over incoming edges per state.
pub struct Uniformized {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    pub lambda: f64,
}

pub fn uniformize(ctmc: &Ctmc) -> Uniformized {
    let n = ctmc.num_states();
    let mut exit = vec![0.0f64; n];
    for t in &ctmc.transitions {
        exit[t.src as usize] += t.rate;
    }
    let lambda = exit.iter().cloned().fold(0.0, f64::max).max(1e-300);

    // Entries: one per transition plus one diagonal per state.
    let mut counts = vec![0usize; n];
    for t in &ctmc.transitions {
        counts[t.dst as usize] += 1;
    }
    for c in counts.iter_mut() {
        *c += 1;
    }
    let mut row_ptr = vec![0usize; n + 1];
    for i in 0..n {
        row_ptr[i + 1] = row_ptr[i] + counts[i];
    }
    let nnz = row_ptr[n];
    let mut cols = vec![0u32; nnz];
    let mut vals = vec![0.0f64; nnz];
    let mut cursor = row_ptr.clone();
    for (i, e) in exit.iter().enumerate() {
        let at = cursor[i];
        cols[at] = i as u32;
        vals[at] = 1.0 - e / lambda;
        cursor[i] += 1;
    }
    for t in &ctmc.transitions {
        let at = cursor[t.dst as usize];
        cols[at] = t.src;
        vals[at] = t.rate / lambda;
        cursor[t.dst as usize] += 1;
    }
    Uniformized {
        n,
        row_ptr,
        cols,
        vals,
        lambda,
    }
}

impl Uniformized {
    fn step(&self, pi: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(j, o)| {
            let mut acc = 0.0;
            for e in self.row_ptr[j]..self.row_ptr[j + 1] {
                acc += self.vals[e] * pi[self.cols[e] as usize];
            }
            *o = acc;
        });
    }
}

/// Poisson(lambda_t) weights for k in `first..first+len`, truncated to tail
/// mass <= epsilon and normalized. Computed outward from the mode with the
/// multiplicative recurrence, so no special functions are needed.
fn poisson_weights(
    lambda_t: f64,
    epsilon: f64,
    cap: usize,
) -> Result<(usize, Vec<f64>), AnalysisError> {
    if lambda_t <= 0.0 {
        return Ok((0, vec![1.0]));
    }
    let mode = lambda_t.floor() as usize;
    // Unnormalized weights relative to the mode; anything below `floor`
    // contributes less than epsilon/10 of the total mass.
    let floor = epsilon * 1e-3 / (4.0 * lambda_t.sqrt() + 10.0);
    let mut right = Vec::new();
    let mut w = 1.0f64;
    let mut k = mode;
    loop {
        k += 1;
        w *= lambda_t / k as f64;
        if w < floor {
            break;
        }
        right.push(w);
        if k - mode > cap {
            return Err(AnalysisError::IterationCap {
                lambda_t,
                cap,
            });
        }
    }
    let mut left = Vec::new();
    w = 1.0;
    k = mode;
    while k > 0 {
        w *= k as f64 / lambda_t;
        k -= 1;
        if w < floor {
            break;
        }
        left.push(w);
    }
    let first = k + usize::from(w < floor);
    let mut weights = Vec::with_capacity(left.len() + 1 + right.len());
    weights.extend(left.iter().rev());
    weights.push(1.0);
    weights.extend(right.iter());
    if first + weights.len() > cap {
        return Err(AnalysisError::IterationCap { lambda_t, cap });
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok((first, weights))
}

/// One uniformization leg of length `dt` from `init`: the distribution at
/// the end and the per-state occupancy (expected time in each state during
/// the leg, via the mixed-Poisson integral).
pub fn transient_leg(
    u: &Uniformized,
    init: &[f64],
    dt: f64,
    cfg: &NumericsConfig,
) -> Result<(Vec<f64>, Vec<f64>), AnalysisError> {
    assert_eq!(init.len(), u.n);
    if dt <= 0.0 {
        return Ok((init.to_vec(), vec![0.0; u.n]));
    }
    let lambda_t = u.lambda * dt;
    let (first, weights) = poisson_weights(lambda_t, cfg.epsilon, cfg.max_iterations)?;
    let last = first + weights.len() - 1;

    let mut dist = vec![0.0f64; u.n];
    let mut occ = vec![0.0f64; u.n];
    let mut pi = init.to_vec();
    let mut next = vec![0.0f64; u.n];
    let mut cum = 0.0f64;

    for k in 0..=last {
        let w = if k >= first { weights[k - first] } else { 0.0 };
        cum += w;
        // The occupancy factor of pi_k is P(Pois > k) / lambda.
        let survival = (1.0 - cum).max(0.0);
        if survival > 0.0 {
            let f = survival / u.lambda;
            occ.par_iter_mut()
                .zip(pi.par_iter())
                .for_each(|(o, p)| *o += f * p);
        }
        if w > 0.0 {
            dist.par_iter_mut()
                .zip(pi.par_iter())
                .for_each(|(d, p)| *d += w * p);
        }
        if k < last {
            u.step(&pi, &mut next);
            std::mem::swap(&mut pi, &mut next);
        }
    }
    Ok((dist, occ))
}

/// Distribution over states at time `t`, starting from the chain's initial
/// state.
pub fn transient_distribution(
    ctmc: &Ctmc,
    t: f64,
    cfg: &NumericsConfig,
) -> Result<Vec<f64>, AnalysisError> {
    let u = uniformize(ctmc);
    let mut init = vec![0.0; u.n];
    init[ctmc.initial as usize] = 1.0;
    Ok(transient_leg(&u, &init, t, cfg)?.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HorizonMetrics {
    pub horizon: f64,
    pub reliability: f64,
    pub availability: f64,
    pub expected_cost: f64,
    pub expected_failures: f64,
}

/// Evaluate all four metrics at each horizon (ascending, in years).
/// `full` is the live chain (availability, cost, failure counting);
/// `absorbing` is the same system with top-event failure absorbing
/// (reliability = probability of never reaching it).
pub fn evaluate(
    full: &SystemBundle,
    absorbing: &SystemBundle,
    horizons: &[f64],
    cfg: &NumericsConfig,
) -> Result<Vec<HorizonMetrics>, AnalysisError> {
    assert!(
        horizons.windows(2).all(|w| w[0] < w[1]),
        "horizons must be strictly ascending"
    );
    let reliability = reliability_series(absorbing, horizons, cfg)?;

    // Cost impulses and failure entries are per-source-state exit rates
    // weighted by the occupancy of the source state.
    let n = full.ctmc.num_states();
    let mut cost_rate = full.rewards.state_rate.clone();
    let mut failure_rate = vec![0.0f64; n];
    for (i, t) in full.ctmc.transitions.iter().enumerate() {
        cost_rate[t.src as usize] += t.rate * full.rewards.edge_cost[i];
        if !full.failed[t.src as usize] && full.failed[t.dst as usize] {
            failure_rate[t.src as usize] += t.rate;
        }
    }

    let u = uniformize(&full.ctmc);
    let mut pi = vec![0.0; n];
    pi[full.ctmc.initial as usize] = 1.0;
    let mut cum_occ = vec![0.0f64; n];
    let mut out = Vec::with_capacity(horizons.len());
    let mut prev_t = 0.0;
    for (hi, &t) in horizons.iter().enumerate() {
        let (dist, occ) = transient_leg(&u, &pi, t - prev_t, cfg)?;
        pi = dist;
        for (c, o) in cum_occ.iter_mut().zip(&occ) {
            *c += o;
        }
        prev_t = t;

        let up_time: f64 = cum_occ
            .iter()
            .zip(&full.failed)
            .filter(|(_, f)| !**f)
            .map(|(o, _)| o)
            .sum();
        let availability = if t > 0.0 { up_time / t } else { 1.0 };
        let expected_cost: f64 = cum_occ.iter().zip(&cost_rate).map(|(o, r)| o * r).sum();
        let expected_failures: f64 =
            cum_occ.iter().zip(&failure_rate).map(|(o, r)| o * r).sum();
        out.push(HorizonMetrics {
            horizon: t,
            reliability: reliability[hi],
            availability: availability.clamp(0.0, 1.0),
            expected_cost,
            expected_failures,
        });
    }
    Ok(out)
}

/// Reliability at each horizon: survival probability of the absorbing
/// chain's non-failed part.
pub fn reliability_series(
    absorbing: &SystemBundle,
    horizons: &[f64],
    cfg: &NumericsConfig,
) -> Result<Vec<f64>, AnalysisError> {
    let u = uniformize(&absorbing.ctmc);
    let n = absorbing.ctmc.num_states();
    let mut pi = vec![0.0; n];
    pi[absorbing.ctmc.initial as usize] = 1.0;
    let mut out = Vec::with_capacity(horizons.len());
    let mut prev_t = 0.0;
    for &t in horizons {
        let (dist, _) = transient_leg(&u, &pi, t - prev_t, cfg)?;
        pi = dist;
        prev_t = t;
        let failed_mass: f64 = pi
            .iter()
            .zip(&absorbing.failed)
            .filter(|(_, f)| **f)
            .map(|(p, _)| p)
            .sum();
        out.push((1.0 - failed_mass).clamp(0.0, 1.0));
    }
    Ok(out)
}

/// The mean of the exponential whose CDF passes through (T, D).
pub fn mttf_from_unreliability(d: f64, t: f64) -> Result<f64, AnalysisError> {
    if !(d > 0.0 && d < 1.0) || t <= 0.0 {
        return Err(AnalysisError::MttfUndefined { d });
    }
    Ok(-t / (1.0 - d).ln())
}

/// CDF of Erlang(k, rate) at t: P(Pois(rate * t) >= k).
pub fn erlang_cdf(k: u32, rate: f64, t: f64) -> f64 {
    let x = rate * t;
    if x <= 0.0 {
        return 0.0;
    }
    let mut term = (-x).exp();
    let mut below = term;
    for j in 1..k {
        term *= x / j as f64;
        below += term;
    }
    (1.0 - below).clamp(0.0, 1.0)
}

/// The total delay Td such that an Erlang(k, k / Td) first passage has
/// probability exactly `d` of completing within `t`. For k = 1 this is the
/// exponential fit (-t / ln(1 - d)).
pub fn calibrate_erlang_delay(k: u32, t: f64, d: f64) -> Result<f64, AnalysisError> {
    if !(d > 0.0 && d < 1.0) || t <= 0.0 {
        return Err(AnalysisError::MttfUndefined { d });
    }
    // Solve P(Pois(x) >= k) = d for x = rate * t, monotone increasing in x.
    let sf = |x: f64| erlang_cdf(k, x, 1.0);
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while sf(hi) < d {
        hi *= 2.0;
        if hi > 1e9 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sf(mid) < d {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    Ok(k as f64 * t / x)
}
