//! Parallel composition of labelled CTMCs.
//!
//! Two flavours: a binary `compose` (pairwise product, residual guards
//! allowed) and a multiway `compose_system` used to assemble whole systems
//! in one reachability sweep, with optional absorption and a state budget.

use super::guard::CompiledGuard;
use super::{Ctmc, Guard, Transition, MAX_PROPS};
use indexmap::IndexSet;
use std::collections::{HashMap, HashSet, VecDeque};

/// How a label synchronizes during composition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SyncMode {
    /// All components that carry the label in their alphabet must move
    /// together; the joint rate is the product of the participating rates.
    Full,
    /// Each component moves on its own.
    Interleave,
}

#[derive(Clone, Debug)]
pub struct SyncRule {
    pub label: String,
    pub mode: SyncMode,
}

/// Label-to-mode table with a default for unlisted labels.
#[derive(Clone, Debug)]
pub struct SyncRules {
    default: SyncMode,
    rules: HashMap<String, SyncMode>,
}

impl SyncRules {
    pub fn new(default: SyncMode) -> Self {
        SyncRules {
            default,
            rules: HashMap::new(),
        }
    }

    /// Interleave by default, full synchronization on the given labels.
    pub fn full_on<S: AsRef<str>>(labels: impl IntoIterator<Item = S>) -> Self {
        let mut s = SyncRules::new(SyncMode::Interleave);
        for l in labels {
            s.set(l.as_ref(), SyncMode::Full);
        }
        s
    }

    pub fn set(&mut self, label: &str, mode: SyncMode) -> &mut Self {
        self.rules.insert(label.to_string(), mode);
        self
    }

    pub fn add(&mut self, rule: SyncRule) -> &mut Self {
        self.rules.insert(rule.label, rule.mode);
        self
    }

    pub fn mode_of(&self, label: &str) -> SyncMode {
        self.rules.get(label).copied().unwrap_or(self.default)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ComposeError {
    #[error("composed chain needs {0} atomic propositions (limit {MAX_PROPS})")]
    TooManyProps(usize),
    #[error("guard in component {component} references unknown proposition {prop}")]
    UnknownGuardProp { component: String, prop: String },
    #[error("state budget of {limit} states exceeded during composition")]
    StateBudget { limit: usize },
    #[error("product state space too large to index")]
    KeySpace,
}

/// Result of a composition: the product chain plus any warnings raised
/// (dead synchronization labels, rate-carrier violations).
#[derive(Debug)]
pub struct Composition {
    pub ctmc: Ctmc,
    pub warnings: Vec<String>,
    /// The collapsed absorbing state, when `absorb_to_sink` was used and an
    /// absorbed state was reached.
    pub sink: Option<u32>,
}

#[derive(Clone, Debug, Default)]
pub struct ComposeOptions {
    /// States satisfying this guard are kept but not expanded, making them
    /// absorbing. Used to build the failure-absorbing chain for reliability.
    pub absorb: Option<Guard>,
    /// Collapse every absorbed state into a single sink state (propless;
    /// reported via `Composition::sink`). Keeps the absorbing chain small
    /// when the absorbed frontier is much larger than the live part.
    pub absorb_to_sink: bool,
    /// Abort (`compose_system`) or truncate (`count_reachable`) once this
    /// many states have been discovered.
    pub max_states: Option<usize>,
}

/// Binary parallel composition. Full-sync labels shared by both alphabets
/// produce joint moves with product rates; a full-sync label carried by only
/// one alphabet can never fire and its transitions are dropped with a
/// warning. Guards are partially evaluated against the pair state; residual
/// guards (over propositions of components not yet composed) are kept.
pub fn compose(a: &Ctmc, b: &Ctmc, rules: &SyncRules) -> Result<Composition, ComposeError> {
    let mut warnings = Vec::new();

    let mut props: IndexSet<String> = a.props.clone();
    for p in &b.props {
        props.insert(p.clone());
    }
    if props.len() > MAX_PROPS {
        return Err(ComposeError::TooManyProps(props.len()));
    }
    let mut labels: IndexSet<String> = a.labels.clone();
    for l in &b.labels {
        labels.insert(l.clone());
    }

    // Full-sync labels known to one side only: dead, drop with a warning.
    let mut dead: HashSet<&str> = HashSet::new();
    for l in labels.iter() {
        if rules.mode_of(l) == SyncMode::Full && a.labels.contains(l) != b.labels.contains(l) {
            let side = if a.labels.contains(l) { &a.name } else { &b.name };
            warnings.push(format!(
                "label {l} synchronizes fully but only {side} carries it; its transitions can never fire"
            ));
            dead.insert(l);
        }
    }

    // Remap a local proposition mask into the union index space.
    let remap = |c: &Ctmc| -> Vec<u128> {
        let shift: Vec<usize> = c
            .props
            .iter()
            .map(|p| props.get_index_of(p).unwrap())
            .collect();
        c.state_props
            .iter()
            .map(|&m| {
                let mut out = 0u128;
                for (i, &g) in shift.iter().enumerate() {
                    if m & (1u128 << i) != 0 {
                        out |= 1u128 << g;
                    }
                }
                out
            })
            .collect()
    };
    let a_masks = remap(a);
    let b_masks = remap(b);

    // Transitions grouped by (state, union label id).
    let group = |c: &Ctmc| -> HashMap<(u32, u16), Vec<Transition>> {
        let mut m: HashMap<(u32, u16), Vec<Transition>> = HashMap::new();
        for t in &c.transitions {
            let name = c.label_name(t.label);
            if dead.contains(name) {
                continue;
            }
            let gid = labels.get_index_of(name).unwrap() as u16;
            m.entry((t.src, gid)).or_default().push(Transition {
                label: gid,
                ..t.clone()
            });
        }
        m
    };
    let a_adj = group(a);
    let b_adj = group(b);

    let mut key_of: HashMap<(u32, u32), u32> = HashMap::new();
    let mut order: Vec<(u32, u32)> = Vec::new();
    let mut state_props: Vec<u128> = Vec::new();
    let mut transitions: Vec<Transition> = Vec::new();

    let init = (a.initial, b.initial);
    key_of.insert(init, 0);
    order.push(init);
    state_props.push(a_masks[a.initial as usize] | b_masks[b.initial as usize]);
    let mut queue = VecDeque::from([0u32]);

    while let Some(id) = queue.pop_front() {
        let (sa, sb) = order[id as usize];
        let mask = state_props[id as usize];
        let lookup = |p: &str| props.get_index_of(p).map(|i| mask & (1u128 << i) != 0);

        let mut intern = |pair: (u32, u32),
                          state_props: &mut Vec<u128>,
                          queue: &mut VecDeque<u32>|
         -> u32 {
            *key_of.entry(pair).or_insert_with(|| {
                let nid = order.len() as u32;
                order.push(pair);
                state_props.push(a_masks[pair.0 as usize] | b_masks[pair.1 as usize]);
                queue.push_back(nid);
                nid
            })
        };

        for (gid, label) in labels.iter().enumerate() {
            let gid = gid as u16;
            let in_a = a.labels.contains(label);
            let in_b = b.labels.contains(label);
            let full = rules.mode_of(label) == SyncMode::Full && !dead.contains(label.as_str());
            if full && in_a && in_b {
                let (Some(ea), Some(eb)) = (a_adj.get(&(sa, gid)), b_adj.get(&(sb, gid)))
                else {
                    continue;
                };
                for ta in ea {
                    for tb in eb {
                        let guard = ta.guard.clone().and(tb.guard.clone()).partial_eval(&lookup);
                        if guard == Guard::False {
                            continue;
                        }
                        let dst = intern((ta.dst, tb.dst), &mut state_props, &mut queue);
                        transitions.push(Transition {
                            src: id,
                            label: gid,
                            rate: ta.rate * tb.rate,
                            dst,
                            guard,
                        });
                    }
                }
            } else {
                if in_a {
                    if let Some(ea) = a_adj.get(&(sa, gid)) {
                        for ta in ea {
                            let guard = ta.guard.partial_eval(&lookup);
                            if guard == Guard::False {
                                continue;
                            }
                            let dst = intern((ta.dst, sb), &mut state_props, &mut queue);
                            transitions.push(Transition {
                                src: id,
                                label: gid,
                                rate: ta.rate,
                                dst,
                                guard,
                            });
                        }
                    }
                }
                if in_b {
                    if let Some(eb) = b_adj.get(&(sb, gid)) {
                        for tb in eb {
                            let guard = tb.guard.partial_eval(&lookup);
                            if guard == Guard::False {
                                continue;
                            }
                            let dst = intern((sa, tb.dst), &mut state_props, &mut queue);
                            transitions.push(Transition {
                                src: id,
                                label: gid,
                                rate: tb.rate,
                                dst,
                                guard,
                            });
                        }
                    }
                }
            }
        }
    }

    Ok(Composition {
        ctmc: Ctmc {
            name: format!("{}||{}", a.name, b.name),
            labels,
            props,
            state_props,
            initial: 0,
            transitions,
        },
        warnings,
        sink: None,
    })
}

struct CompiledEdge {
    rate: f64,
    dst: u32,
    guard: CompiledGuard,
}

struct Prepared {
    labels: IndexSet<String>,
    props: IndexSet<String>,
    /// Per component, per state: proposition mask in the global index space.
    masks: Vec<Vec<u128>>,
    /// Per component, per state: edges grouped by global label id.
    adj: Vec<Vec<HashMap<u16, Vec<CompiledEdge>>>>,
    /// Per global label: indices of components carrying it in the alphabet.
    participants: Vec<Vec<usize>>,
    full: Vec<bool>,
    /// Mixed-radix place value of each component in the product state key.
    place: Vec<u128>,
    initial_key: u128,
    absorb: Option<CompiledGuard>,
}

fn prepare(
    components: &[Ctmc],
    rules: &SyncRules,
    opts: &ComposeOptions,
) -> Result<Prepared, ComposeError> {
    let mut labels: IndexSet<String> = IndexSet::new();
    let mut props: IndexSet<String> = IndexSet::new();
    for c in components {
        for l in &c.labels {
            labels.insert(l.clone());
        }
        for p in &c.props {
            props.insert(p.clone());
        }
    }
    if props.len() > MAX_PROPS {
        return Err(ComposeError::TooManyProps(props.len()));
    }

    let prop_index = |p: &str| props.get_index_of(p);
    let mut masks = Vec::with_capacity(components.len());
    let mut adj = Vec::with_capacity(components.len());
    for c in components {
        let shift: Vec<usize> = c
            .props
            .iter()
            .map(|p| props.get_index_of(p).unwrap())
            .collect();
        masks.push(
            c.state_props
                .iter()
                .map(|&m| {
                    let mut out = 0u128;
                    for (i, &g) in shift.iter().enumerate() {
                        if m & (1u128 << i) != 0 {
                            out |= 1u128 << g;
                        }
                    }
                    out
                })
                .collect::<Vec<u128>>(),
        );
        let mut per_state: Vec<HashMap<u16, Vec<CompiledEdge>>> =
            (0..c.num_states()).map(|_| HashMap::new()).collect();
        for t in &c.transitions {
            let gid = labels.get_index_of(c.label_name(t.label)).unwrap() as u16;
            let guard = CompiledGuard::compile(&t.guard, &prop_index).map_err(|prop| {
                ComposeError::UnknownGuardProp {
                    component: c.name.clone(),
                    prop,
                }
            })?;
            per_state[t.src as usize].entry(gid).or_default().push(CompiledEdge {
                rate: t.rate,
                dst: t.dst,
                guard,
            });
        }
        adj.push(per_state);
    }

    let mut participants = vec![Vec::new(); labels.len()];
    let mut full = vec![false; labels.len()];
    for (gid, l) in labels.iter().enumerate() {
        full[gid] = rules.mode_of(l) == SyncMode::Full;
        for (ci, c) in components.iter().enumerate() {
            if c.labels.contains(l) {
                participants[gid].push(ci);
            }
        }
    }

    let mut place = Vec::with_capacity(components.len());
    let mut radix: u128 = 1;
    for c in components {
        place.push(radix);
        radix = radix
            .checked_mul(c.num_states() as u128)
            .ok_or(ComposeError::KeySpace)?;
    }
    let initial_key = components
        .iter()
        .zip(&place)
        .map(|(c, &p)| c.initial as u128 * p)
        .sum();

    let absorb = match &opts.absorb {
        Some(g) => Some(CompiledGuard::compile(g, &prop_index).map_err(|prop| {
            ComposeError::UnknownGuardProp {
                component: "absorb predicate".to_string(),
                prop,
            }
        })?),
        None => None,
    };

    Ok(Prepared {
        labels,
        props,
        masks,
        adj,
        participants,
        full,
        place,
        initial_key,
        absorb,
    })
}

fn decode(key: u128, components_len: usize, place: &[u128], sizes: &[usize], out: &mut Vec<u32>) {
    out.clear();
    for i in 0..components_len {
        out.push(((key / place[i]) % sizes[i] as u128) as u32);
    }
}

struct Explored {
    state_props: Vec<u128>,
    transitions: Vec<Transition>,
    warnings: Vec<String>,
    truncated: bool,
    sink: Option<u32>,
}

/// Discovered-state bookkeeping shared by the full-sync and interleave
/// branches of the exploration loop.
struct Frontier {
    key_of: HashMap<u128, u32>,
    keys: Vec<u128>,
    state_props: Vec<u128>,
    queue: VecDeque<u32>,
    sink: Option<u32>,
}

enum Interned {
    State(u32),
    Budget,
}

impl Frontier {
    /// Look up or create the product state for `dst_locals`; absorbed
    /// states go to the shared sink when sink collapsing is on.
    fn intern(
        &mut self,
        dst_locals: &[u32],
        mask: u128,
        prep: &Prepared,
        opts: &ComposeOptions,
        absorbed: bool,
    ) -> Interned {
        if absorbed && opts.absorb_to_sink {
            return match self.sink {
                Some(s) => Interned::State(s),
                None => {
                    if let Some(limit) = opts.max_states {
                        if self.keys.len() >= limit {
                            return Interned::Budget;
                        }
                    }
                    let s = self.keys.len() as u32;
                    // Not keyed: every absorbed state maps here.
                    self.keys.push(u128::MAX);
                    self.state_props.push(0);
                    self.sink = Some(s);
                    Interned::State(s)
                }
            };
        }
        let dst_key: u128 = dst_locals
            .iter()
            .zip(&prep.place)
            .map(|(&s, &p)| s as u128 * p)
            .sum();
        if let Some(&d) = self.key_of.get(&dst_key) {
            return Interned::State(d);
        }
        if let Some(limit) = opts.max_states {
            if self.keys.len() >= limit {
                return Interned::Budget;
            }
        }
        let d = self.keys.len() as u32;
        self.key_of.insert(dst_key, d);
        self.keys.push(dst_key);
        self.state_props.push(mask);
        if !absorbed {
            self.queue.push_back(d);
        }
        Interned::State(d)
    }
}

fn explore(
    components: &[Ctmc],
    prep: &Prepared,
    opts: &ComposeOptions,
    record: bool,
) -> Result<Explored, ComposeError> {
    let sizes: Vec<usize> = components.iter().map(|c| c.num_states()).collect();
    let n = components.len();

    let mut transitions: Vec<Transition> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    let mut lint_warned: HashSet<u16> = HashSet::new();
    let mut truncated = false;

    let mask_of = |locals: &[u32]| -> u128 {
        locals
            .iter()
            .enumerate()
            .fold(0u128, |acc, (i, &s)| acc | prep.masks[i][s as usize])
    };

    let mut fr = Frontier {
        key_of: HashMap::new(),
        keys: Vec::new(),
        state_props: Vec::new(),
        queue: VecDeque::new(),
        sink: None,
    };
    let mut locals = Vec::with_capacity(n);
    decode(prep.initial_key, n, &prep.place, &sizes, &mut locals);
    let initial_mask = mask_of(&locals);
    let initial_absorbed = prep
        .absorb
        .as_ref()
        .map(|g| g.eval(initial_mask))
        .unwrap_or(false);
    // The initial state is always materialized as a real state, absorbed or
    // not, so state 0 is the initial state of the product.
    fr.key_of.insert(prep.initial_key, 0);
    fr.keys.push(prep.initial_key);
    fr.state_props.push(initial_mask);
    if !initial_absorbed {
        fr.queue.push_back(0);
    }

    'bfs: while let Some(id) = fr.queue.pop_front() {
        let key = fr.keys[id as usize];
        decode(key, n, &prep.place, &sizes, &mut locals);
        let mask = fr.state_props[id as usize];

        // Per label: either one joint move over all participants or an
        // independent move per participant edge.
        for gid in 0..prep.labels.len() as u16 {
            let parts = &prep.participants[gid as usize];
            if parts.is_empty() {
                continue;
            }
            if prep.full[gid as usize] && parts.len() >= 2 {
                // Every participant must offer an enabled edge.
                let mut choices: Vec<&[CompiledEdge]> = Vec::with_capacity(parts.len());
                let mut enabled_buf: Vec<Vec<usize>> = Vec::with_capacity(parts.len());
                let mut blocked = false;
                for &ci in parts {
                    let Some(edges) = prep.adj[ci][locals[ci] as usize].get(&gid) else {
                        blocked = true;
                        break;
                    };
                    let enabled: Vec<usize> = edges
                        .iter()
                        .enumerate()
                        .filter(|(_, e)| e.guard.eval(mask))
                        .map(|(i, _)| i)
                        .collect();
                    if enabled.is_empty() {
                        blocked = true;
                        break;
                    }
                    choices.push(edges);
                    enabled_buf.push(enabled);
                }
                if blocked {
                    continue;
                }
                // Odometer over the enabled-edge choices of each participant.
                let mut idx = vec![0usize; parts.len()];
                loop {
                    let mut rate = 1.0;
                    let mut carriers = 0u32;
                    let mut dst_locals = locals.clone();
                    for (k, &ci) in parts.iter().enumerate() {
                        let e = &choices[k][enabled_buf[k][idx[k]]];
                        if e.rate != 1.0 {
                            carriers += 1;
                        }
                        rate *= e.rate;
                        dst_locals[ci] = e.dst;
                    }
                    if carriers >= 2 && lint_warned.insert(gid) {
                        warnings.push(format!(
                            "label {} has more than one rate carrier in a joint move; \
                             the product rate is unlikely to be intended",
                            prep.labels.get_index(gid as usize).unwrap()
                        ));
                    }
                    let dst_mask = mask_of(&dst_locals);
                    let absorbed = prep
                        .absorb
                        .as_ref()
                        .map(|g| g.eval(dst_mask))
                        .unwrap_or(false);
                    let dst = match fr.intern(&dst_locals, dst_mask, prep, opts, absorbed) {
                        Interned::State(d) => d,
                        Interned::Budget => {
                            if record {
                                return Err(ComposeError::StateBudget {
                                    limit: opts.max_states.unwrap(),
                                });
                            }
                            truncated = true;
                            break 'bfs;
                        }
                    };
                    if record {
                        transitions.push(Transition {
                            src: id,
                            label: gid,
                            rate,
                            dst,
                            guard: Guard::True,
                        });
                    }
                    // advance odometer
                    let mut k = 0;
                    loop {
                        idx[k] += 1;
                        if idx[k] < enabled_buf[k].len() {
                            break;
                        }
                        idx[k] = 0;
                        k += 1;
                        if k == parts.len() {
                            break;
                        }
                    }
                    if k == parts.len() {
                        break;
                    }
                }
            } else {
                for &ci in parts {
                    let Some(edges) = prep.adj[ci][locals[ci] as usize].get(&gid) else {
                        continue;
                    };
                    for e in edges {
                        if !e.guard.eval(mask) {
                            continue;
                        }
                        let mut dst_locals = locals.clone();
                        dst_locals[ci] = e.dst;
                        let dst_mask = mask_of(&dst_locals);
                        let absorbed = prep
                            .absorb
                            .as_ref()
                            .map(|g| g.eval(dst_mask))
                            .unwrap_or(false);
                        let dst = match fr.intern(&dst_locals, dst_mask, prep, opts, absorbed) {
                            Interned::State(d) => d,
                            Interned::Budget => {
                                if record {
                                    return Err(ComposeError::StateBudget {
                                        limit: opts.max_states.unwrap(),
                                    });
                                }
                                truncated = true;
                                break 'bfs;
                            }
                        };
                        if record {
                            transitions.push(Transition {
                                src: id,
                                label: gid,
                                rate: e.rate,
                                dst,
                                guard: Guard::True,
                            });
                        }
                    }
                }
            }
        }
    }

    Ok(Explored {
        state_props: fr.state_props,
        transitions,
        warnings,
        truncated,
        sink: fr.sink,
    })
}

/// Multiway synchronized product of `components` in a single reachability
/// sweep. Full-sync labels require a joint move of every component carrying
/// the label; all other moves interleave. Guards must be resolvable against
/// the union proposition set; the result has no residual guards.
pub fn compose_system(
    components: &[Ctmc],
    rules: &SyncRules,
    opts: &ComposeOptions,
) -> Result<Composition, ComposeError> {
    assert!(!components.is_empty());
    let prep = prepare(components, rules, opts)?;
    let explored = explore(components, &prep, opts, true)?;
    let name = components
        .iter()
        .map(|c| c.name.as_str())
        .collect::<Vec<_>>()
        .join("||");
    Ok(Composition {
        ctmc: Ctmc {
            name,
            labels: prep.labels,
            props: prep.props,
            state_props: explored.state_props,
            initial: 0,
            transitions: explored.transitions,
        },
        warnings: explored.warnings,
        sink: explored.sink,
    })
}

/// Count reachable product states without materializing transitions.
/// Returns `(count, truncated)`; `truncated` is set when the exploration
/// stopped at `opts.max_states`.
pub fn count_reachable(
    components: &[Ctmc],
    rules: &SyncRules,
    opts: &ComposeOptions,
) -> Result<(usize, bool), ComposeError> {
    assert!(!components.is_empty());
    let prep = prepare(components, rules, opts)?;
    let explored = explore(components, &prep, opts, false)?;
    Ok((explored.state_props.len(), explored.truncated))
}
