//! Labelled continuous-time Markov chains: the value type, Erlang DELAY
//! builders, and parallel composition.

mod compose;
mod delay;
mod export;
mod guard;

pub use compose::{
    compose, compose_system, count_reachable, ComposeError, ComposeOptions, Composition,
    SyncMode, SyncRule, SyncRules,
};
pub use delay::{
    action_delay, cyclic_signal_delay, erlang_delay, erlang_delay_ext, erlang_delay_with_mu,
    DEFAULT_MU_FACTOR, ELAPSED_PROP,
};
pub use export::export_flat;
pub use guard::Guard;

use indexmap::IndexSet;
use std::collections::{HashSet, VecDeque};

pub const MAX_PROPS: usize = 128;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub src: u32,
    pub label: u16,
    pub rate: f64,
    pub dst: u32,
    /// Enabled only in composed states satisfying the guard; `Guard::True`
    /// once fully resolved.
    pub guard: Guard,
}

/// A CTMC with transition labels (for synchronization) and atomic
/// propositions on states. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Ctmc {
    /// Component name, used in diagnostics and to namespace internal labels.
    pub name: String,
    /// The alphabet Act. May contain labels with no transition (a component
    /// still participates in synchronization on such labels and blocks it).
    pub labels: IndexSet<String>,
    /// Atomic propositions AP.
    pub props: IndexSet<String>,
    /// Per-state proposition bitmask over `props` indices.
    pub state_props: Vec<u128>,
    pub initial: u32,
    pub transitions: Vec<Transition>,
}

impl Ctmc {
    pub fn num_states(&self) -> usize {
        self.state_props.len()
    }

    pub fn label_name(&self, id: u16) -> &str {
        self.labels.get_index(id as usize).expect("label id in range")
    }

    pub fn label_id(&self, name: &str) -> Option<u16> {
        self.labels.get_index_of(name).map(|i| i as u16)
    }

    pub fn prop_id(&self, name: &str) -> Option<usize> {
        self.props.get_index_of(name)
    }

    pub fn state_has_prop(&self, state: u32, prop: &str) -> bool {
        match self.prop_id(prop) {
            Some(i) => self.state_props[state as usize] & (1u128 << i) != 0,
            None => false,
        }
    }

    /// Total exit rate of a state (self-loops included).
    pub fn exit_rate(&self, state: u32) -> f64 {
        self.transitions
            .iter()
            .filter(|t| t.src == state)
            .map(|t| t.rate)
            .sum()
    }

    /// States reachable from the initial state, guards treated as enabled.
    pub fn reachable(&self) -> HashSet<u32> {
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); self.num_states()];
        for t in &self.transitions {
            adj[t.src as usize].push(t.dst);
        }
        let mut seen = HashSet::new();
        let mut queue = VecDeque::from([self.initial]);
        seen.insert(self.initial);
        while let Some(s) = queue.pop_front() {
            for &d in &adj[s as usize] {
                if seen.insert(d) {
                    queue.push_back(d);
                }
            }
        }
        seen
    }

    /// Sorted multiset of (label, rate, src-props, dst-props) edge
    /// signatures plus the state count; equal signatures indicate
    /// isomorphic chains for the well-labelled systems built here.
    pub fn canonical_signature(&self) -> (usize, Vec<(String, u64, u128, u128)>) {
        let mut edges: Vec<(String, u64, u128, u128)> = self
            .transitions
            .iter()
            .map(|t| {
                (
                    self.label_name(t.label).to_string(),
                    t.rate.to_bits(),
                    self.state_props[t.src as usize],
                    self.state_props[t.dst as usize],
                )
            })
            .collect();
        edges.sort();
        (self.num_states(), edges)
    }

    pub fn has_unresolved_guards(&self) -> bool {
        self.transitions.iter().any(|t| t.guard != Guard::True)
    }
}

/// Incremental construction helper for component CTMCs.
pub struct CtmcBuilder {
    name: String,
    labels: IndexSet<String>,
    props: IndexSet<String>,
    state_props: Vec<u128>,
    transitions: Vec<Transition>,
    initial: u32,
}

impl CtmcBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        CtmcBuilder {
            name: name.into(),
            labels: IndexSet::new(),
            props: IndexSet::new(),
            state_props: Vec::new(),
            transitions: Vec::new(),
            initial: 0,
        }
    }

    /// Add a state carrying the given propositions; returns its index.
    pub fn state(&mut self, props: &[&str]) -> u32 {
        let mut mask = 0u128;
        for p in props {
            let (i, _) = self.props.insert_full((*p).to_string());
            assert!(i < MAX_PROPS, "too many atomic propositions");
            mask |= 1u128 << i;
        }
        self.state_props.push(mask);
        (self.state_props.len() - 1) as u32
    }

    pub fn set_initial(&mut self, state: u32) {
        self.initial = state;
    }

    pub fn edge(&mut self, src: u32, label: &str, rate: f64, dst: u32) {
        self.guarded_edge(src, label, rate, dst, Guard::True);
    }

    pub fn guarded_edge(&mut self, src: u32, label: &str, rate: f64, dst: u32, guard: Guard) {
        assert!(rate > 0.0, "transition rate must be positive");
        let (label_id, _) = self.labels.insert_full(label.to_string());
        self.transitions.push(Transition {
            src,
            label: label_id as u16,
            rate,
            dst,
            guard,
        });
    }

    /// Put a label in the alphabet without attaching a transition.
    pub fn declare_label(&mut self, label: &str) {
        self.labels.insert(label.to_string());
    }

    pub fn build(self) -> Ctmc {
        assert!(
            (self.initial as usize) < self.state_props.len(),
            "initial state out of range"
        );
        Ctmc {
            name: self.name,
            labels: self.labels,
            props: self.props,
            state_props: self.state_props,
            initial: self.initial,
            transitions: self.transitions,
        }
    }
}
