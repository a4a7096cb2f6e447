//! Flat-text export of a CTMC, mainly for debugging and diffing.

use super::Ctmc;
use std::fmt::Write;

/// One `src label rate dst` line per transition, followed by a labeling
/// block listing each state's atomic propositions.
pub fn export_flat(c: &Ctmc) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# ctmc {} states={}", c.name, c.num_states());
    let _ = writeln!(out, "# initial {}", c.initial);
    for t in &c.transitions {
        let _ = writeln!(out, "{} {} {} {}", t.src, c.label_name(t.label), t.rate, t.dst);
    }
    let _ = writeln!(out, "# labeling");
    for s in 0..c.num_states() as u32 {
        let mask = c.state_props[s as usize];
        if mask == 0 {
            continue;
        }
        let props: Vec<&str> = c
            .props
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1u128 << i) != 0)
            .map(|(_, p)| p.as_str())
            .collect();
        let _ = writeln!(out, "{s}: {}", props.join(" "));
    }
    out
}
