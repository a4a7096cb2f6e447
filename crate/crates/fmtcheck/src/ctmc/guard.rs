//! Boolean guards over atomic propositions of the (composed) state.

/// A predicate on the labeling of the composed state. Guards are attached to
/// transitions of component CTMCs and resolved into state-dependent
/// transition variants during composition.
#[derive(Clone, Debug, PartialEq)]
pub enum Guard {
    True,
    False,
    /// The state carries this proposition.
    Prop(String),
    /// The state does not carry this proposition.
    NotProp(String),
    AnyOf(Vec<Guard>),
    AllOf(Vec<Guard>),
}

impl Guard {
    /// Conjunction, with short-circuit simplification.
    pub fn and(self, other: Guard) -> Guard {
        match (self, other) {
            (Guard::True, g) | (g, Guard::True) => g,
            (Guard::False, _) | (_, Guard::False) => Guard::False,
            (Guard::AllOf(mut a), Guard::AllOf(b)) => {
                a.extend(b);
                Guard::AllOf(a)
            }
            (Guard::AllOf(mut a), g) => {
                a.push(g);
                Guard::AllOf(a)
            }
            (g, Guard::AllOf(mut b)) => {
                b.insert(0, g);
                Guard::AllOf(b)
            }
            (a, b) => Guard::AllOf(vec![a, b]),
        }
    }

    /// Logical negation, pushed to the leaves by De Morgan.
    pub fn not(self) -> Guard {
        match self {
            Guard::True => Guard::False,
            Guard::False => Guard::True,
            Guard::Prop(p) => Guard::NotProp(p),
            Guard::NotProp(p) => Guard::Prop(p),
            Guard::AnyOf(gs) => Guard::AllOf(gs.into_iter().map(Guard::not).collect()),
            Guard::AllOf(gs) => Guard::AnyOf(gs.into_iter().map(Guard::not).collect()),
        }
    }

    /// Evaluate against a (partial) valuation. `lookup` returns `None` for
    /// propositions not yet bound; the result is then a residual guard.
    pub fn partial_eval(&self, lookup: &impl Fn(&str) -> Option<bool>) -> Guard {
        match self {
            Guard::True => Guard::True,
            Guard::False => Guard::False,
            Guard::Prop(p) => match lookup(p) {
                Some(true) => Guard::True,
                Some(false) => Guard::False,
                None => self.clone(),
            },
            Guard::NotProp(p) => match lookup(p) {
                Some(true) => Guard::False,
                Some(false) => Guard::True,
                None => self.clone(),
            },
            Guard::AnyOf(gs) => {
                let mut residual = Vec::new();
                for g in gs {
                    match g.partial_eval(lookup) {
                        Guard::True => return Guard::True,
                        Guard::False => {}
                        r => residual.push(r),
                    }
                }
                match residual.len() {
                    0 => Guard::False,
                    1 => residual.pop().unwrap(),
                    _ => Guard::AnyOf(residual),
                }
            }
            Guard::AllOf(gs) => {
                let mut residual = Vec::new();
                for g in gs {
                    match g.partial_eval(lookup) {
                        Guard::False => return Guard::False,
                        Guard::True => {}
                        r => residual.push(r),
                    }
                }
                match residual.len() {
                    0 => Guard::True,
                    1 => residual.pop().unwrap(),
                    _ => Guard::AllOf(residual),
                }
            }
        }
    }

    /// Total evaluation; propositions missing from the valuation are an
    /// error surfaced as `None`.
    pub fn eval(&self, lookup: &impl Fn(&str) -> Option<bool>) -> Option<bool> {
        match self.partial_eval(lookup) {
            Guard::True => Some(true),
            Guard::False => Some(false),
            _ => None,
        }
    }

    /// Collect every referenced proposition name.
    pub fn collect_props<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Guard::True | Guard::False => {}
            Guard::Prop(p) | Guard::NotProp(p) => out.push(p),
            Guard::AnyOf(gs) | Guard::AllOf(gs) => {
                for g in gs {
                    g.collect_props(out);
                }
            }
        }
    }
}

/// Guard compiled against a fixed proposition index, evaluable on a state
/// bitmask without string lookups.
#[derive(Clone, Debug)]
pub(crate) enum CompiledGuard {
    True,
    False,
    Prop(u32),
    NotProp(u32),
    AnyOf(Vec<CompiledGuard>),
    AllOf(Vec<CompiledGuard>),
}

impl CompiledGuard {
    pub fn compile(
        guard: &Guard,
        prop_index: &impl Fn(&str) -> Option<usize>,
    ) -> Result<CompiledGuard, String> {
        Ok(match guard {
            Guard::True => CompiledGuard::True,
            Guard::False => CompiledGuard::False,
            Guard::Prop(p) => CompiledGuard::Prop(
                prop_index(p).ok_or_else(|| p.clone())? as u32,
            ),
            Guard::NotProp(p) => CompiledGuard::NotProp(
                prop_index(p).ok_or_else(|| p.clone())? as u32,
            ),
            Guard::AnyOf(gs) => CompiledGuard::AnyOf(
                gs.iter()
                    .map(|g| CompiledGuard::compile(g, prop_index))
                    .collect::<Result<_, _>>()?,
            ),
            Guard::AllOf(gs) => CompiledGuard::AllOf(
                gs.iter()
                    .map(|g| CompiledGuard::compile(g, prop_index))
                    .collect::<Result<_, _>>()?,
            ),
        })
    }

    pub fn eval(&self, mask: u128) -> bool {
        match self {
            CompiledGuard::True => true,
            CompiledGuard::False => false,
            CompiledGuard::Prop(i) => mask & (1u128 << i) != 0,
            CompiledGuard::NotProp(i) => mask & (1u128 << i) == 0,
            CompiledGuard::AnyOf(gs) => gs.iter().any(|g| g.eval(mask)),
            CompiledGuard::AllOf(gs) => gs.iter().all(|g| g.eval(mask)),
        }
    }
}
