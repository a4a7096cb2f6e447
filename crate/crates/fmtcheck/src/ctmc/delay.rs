//! DELAY modules: Erlang phase-type approximations of deterministic delays.

use super::{Ctmc, CtmcBuilder};

/// Default separation between the start-up trigger rate and the phase rate
/// of a standalone DELAY.
pub const DEFAULT_MU_FACTOR: f64 = 1e4;

/// Proposition carried by the elapsed state of a DELAY.
pub const ELAPSED_PROP: &str = "elapsed";

/// A DELAY approximating a deterministic delay `t` with `phases` exponential
/// phases of rate `phases / t`.
///
/// States d0..d(N+1): d0 waits for `trigger_label` (rate mu), every phase
/// advance and the cyclic restart d(N+1) -> d1 carry `move_label`, and only
/// d(N+1) carries [`ELAPSED_PROP`]. First passage d1 -> d(N+1) is
/// Erlang(N, N/t), so its mean is exactly `t`.
pub fn erlang_delay(t: f64, phases: u32, trigger_label: &str, move_label: &str) -> Ctmc {
    let mu = DEFAULT_MU_FACTOR * phases as f64 / t;
    erlang_delay_with_mu(t, phases, trigger_label, move_label, &[], mu)
}

/// [`erlang_delay`] plus reset transitions: from every phase d_i with
/// 2 <= i <= N, a rate-1 transition back to d1 on each reset label. The
/// effective reset rate comes from the synchronization partner.
pub fn erlang_delay_ext(
    t: f64,
    phases: u32,
    trigger_label: &str,
    move_label: &str,
    reset_labels: &[&str],
) -> Ctmc {
    assert!(!reset_labels.is_empty(), "reset_labels must be nonempty");
    let mu = DEFAULT_MU_FACTOR * phases as f64 / t;
    erlang_delay_with_mu(t, phases, trigger_label, move_label, reset_labels, mu)
}

pub fn erlang_delay_with_mu(
    t: f64,
    phases: u32,
    trigger_label: &str,
    move_label: &str,
    reset_labels: &[&str],
    mu: f64,
) -> Ctmc {
    assert!(t > 0.0, "delay must be positive");
    assert!(phases >= 1, "need at least one phase");
    let n = phases as usize;
    let rate = phases as f64 / t;

    let mut b = CtmcBuilder::new(format!("delay_{move_label}"));
    // d0, d1..dN, d(N+1)
    let d0 = b.state(&[]);
    let mut states = vec![d0];
    for _ in 1..=n {
        states.push(b.state(&[]));
    }
    states.push(b.state(&[ELAPSED_PROP]));
    b.set_initial(d0);

    b.edge(d0, trigger_label, mu, states[1]);
    for i in 1..=n {
        b.edge(states[i], move_label, rate, states[i + 1]);
    }
    // Cyclic restart of the approximation once the delay has elapsed.
    b.edge(states[n + 1], move_label, rate, states[1]);
    for i in 2..=n {
        for reset in reset_labels {
            b.edge(states[i], reset, 1.0, states[1]);
        }
    }
    b.build()
}

/// System-facing periodic timer: starts running immediately, cycles through
/// `phases` internal ticks and emits `signal_label` exactly once per period,
/// on the last phase transition. Mean period is exactly `t`.
///
/// Reset labels (when the timer belongs to a degradation process that a
/// repair restarts) get rate-1 edges back to the first phase from every
/// phase, so the timer never blocks a synchronized repair.
pub fn cyclic_signal_delay(
    name: &str,
    t: f64,
    phases: u32,
    signal_label: &str,
    reset_labels: &[&str],
) -> Ctmc {
    assert!(t > 0.0 && phases >= 1);
    let n = phases as usize;
    let rate = phases as f64 / t;
    let tick = format!("_tick_{name}");

    let mut b = CtmcBuilder::new(name.to_string());
    let mut phase_states = Vec::with_capacity(n);
    for _ in 0..n {
        phase_states.push(b.state(&[]));
    }
    b.set_initial(phase_states[0]);
    for i in 0..n - 1 {
        b.edge(phase_states[i], &tick, rate, phase_states[i + 1]);
    }
    b.edge(phase_states[n - 1], signal_label, rate, phase_states[0]);
    if !reset_labels.is_empty() && n >= 2 {
        // Every phase needs a reset edge (a self-loop on the first one); a
        // phase without one would block the synchronized repair action.
        for &s in &phase_states {
            for reset in reset_labels {
                b.edge(s, reset, 1.0, phase_states[0]);
            }
        }
    }
    b.build()
}

/// System-facing action timer (repair durations): idle in d0 until
/// `start_label` fires, runs `phases` ticks, then emits `done_label` and
/// returns to idle. Mean busy time is exactly `t`. Busy states carry
/// `busy_prop` when given, so other components can guard on it.
pub fn action_delay(
    name: &str,
    t: f64,
    phases: u32,
    start_label: &str,
    start_rate: f64,
    done_label: &str,
    busy_prop: Option<&str>,
) -> Ctmc {
    assert!(t > 0.0 && phases >= 1);
    let n = phases as usize;
    let rate = phases as f64 / t;
    let tick = format!("_tick_{name}");
    let busy: &[&str] = match &busy_prop {
        Some(p) => std::slice::from_ref(p),
        None => &[],
    };

    let mut b = CtmcBuilder::new(name.to_string());
    let idle = b.state(&[]);
    let mut phase_states = Vec::with_capacity(n);
    for _ in 0..n {
        phase_states.push(b.state(busy));
    }
    b.set_initial(idle);
    b.edge(idle, start_label, start_rate, phase_states[0]);
    for i in 0..n - 1 {
        b.edge(phase_states[i], &tick, rate, phase_states[i + 1]);
    }
    b.edge(phase_states[n - 1], done_label, rate, idle);
    b.build()
}
