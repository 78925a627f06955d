//! Well-formedness checking: the structural side conditions plus the
//! existence of an active-clock witness, which together make a model a
//! valid automaton for composition and simulation.
//!
//! `check_structure` collects every violation of the structural
//! conditions (a)–(e); `infer_active` computes the greatest candidate for
//! the active-clock map of condition (f) and reports the first state
//! where no witness can exist; `canonicalize` synthesizes the input
//! self-loops that model sources conventionally leave implicit.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::model::{Automaton, IdSet, ModelError, Transition};
use crate::parse::ModelFile;

/// Per-state active clock sets, indexed by state.
pub type ActiveMap = Vec<IdSet>;

/// One violation of a structural condition, with enough context to point
/// at the model source.
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    /// Which condition failed: "a", "b", "c", "d", "e", or "f".
    pub condition: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transition: Option<String>,
    pub message: String,
}

/// Outcome of checking one automaton.
#[derive(Debug, Clone, Serialize)]
pub struct WellformedReport {
    pub automaton: String,
    pub well_formed: bool,
    pub violations: Vec<Violation>,
    /// Active clocks per state when condition (f) has a witness.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub active: Option<BTreeMap<String, BTreeSet<String>>>,
}

/// Check conditions (a)–(e), collecting every violation rather than
/// stopping at the first.
pub fn check_structure(a: &Automaton) -> Vec<Violation> {
    let mut out = Vec::new();

    for t in a.transitions() {
        let label = a.label(t.label);
        // (a) inputs and urgent actions fire without waiting on a clock.
        if (label.is_input() || label.urgent) && !t.trigger.is_empty() {
            out.push(Violation {
                condition: "a",
                state: Some(a.state_name(t.source).to_string()),
                transition: Some(a.transition_display(t)),
                message: format!(
                    "{} transition must have an empty trigger set",
                    if label.is_input() { "input" } else { "urgent" }
                ),
            });
        }
        // (b) a non-urgent output waits on exactly one clock.
        if label.is_output() && !label.urgent && t.trigger.len() != 1 {
            out.push(Violation {
                condition: "b",
                state: Some(a.state_name(t.source).to_string()),
                transition: Some(a.transition_display(t)),
                message: format!(
                    "non-urgent output `{}` must be triggered by exactly one clock, got {}",
                    label.name,
                    t.trigger.len()
                ),
            });
        }
    }

    for s in 0..a.state_count() {
        // (c) within a state, one clock triggers at most one transition.
        let mut by_clock: BTreeMap<usize, Vec<&Transition>> = BTreeMap::new();
        for &ti in a.outgoing(s) {
            let t = &a.transitions()[ti];
            for &c in &t.trigger {
                by_clock.entry(c).or_default().push(t);
            }
        }
        for (c, ts) in by_clock {
            if ts.len() > 1 {
                out.push(Violation {
                    condition: "c",
                    state: Some(a.state_name(s).to_string()),
                    transition: None,
                    message: format!(
                        "clock `{}` triggers {} different transitions from `{}`",
                        a.clock_name(c),
                        ts.len(),
                        a.state_name(s)
                    ),
                });
            }
        }

        let mut by_input: BTreeMap<usize, usize> = BTreeMap::new();
        for &ti in a.outgoing(s) {
            let t = &a.transitions()[ti];
            if a.label(t.label).is_input() {
                *by_input.entry(t.label).or_insert(0) += 1;
            }
        }
        for (l, label) in a.labels().iter().enumerate() {
            if !label.is_input() {
                continue;
            }
            match by_input.get(&l) {
                // (d) input enabling: every input is accepted everywhere.
                None => out.push(Violation {
                    condition: "d",
                    state: Some(a.state_name(s).to_string()),
                    transition: None,
                    message: format!(
                        "input `{}` is not enabled at `{}` (missing self-loop?)",
                        label.name,
                        a.state_name(s)
                    ),
                }),
                // (e) input determinism.
                Some(&n) if n > 1 => out.push(Violation {
                    condition: "e",
                    state: Some(a.state_name(s).to_string()),
                    transition: None,
                    message: format!(
                        "input `{}` has {} transitions from `{}`; inputs must be deterministic",
                        label.name,
                        n,
                        a.state_name(s)
                    ),
                }),
                _ => {}
            }
        }
    }
    out
}

/// Why no active-clock witness exists: the greatest candidate at `state`
/// no longer covers the clocks that trigger its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct ActiveFailure {
    pub state: String,
    pub enabling: BTreeSet<String>,
    pub active: BTreeSet<String>,
}

impl ActiveFailure {
    pub fn message(&self) -> String {
        format!(
            "no active-clock witness: state `{}` has enabling clocks {:?} but at most {:?} can be active",
            self.state, self.enabling, self.active
        )
    }
}

/// Compute the greatest per-state active-clock map satisfying the
/// invariants of condition (f), or report the first state (in state
/// order) that proves no witness exists.
///
/// Starts from all clocks (the initial state from its initial set) and
/// shrinks: stable states keep at most their enabling clocks, and a
/// transition t --(C,a,C')--> s bounds active(s) by (active(t) \ C) ∪ C'.
/// Any witness stays pointwise below every iterate, so if the fixpoint
/// fails the final enabling-coverage check, every candidate does.
pub fn infer_active(a: &Automaton) -> Result<ActiveMap, ActiveFailure> {
    let all: IdSet = (0..a.clocks().len()).collect();
    let mut active: ActiveMap = vec![all; a.state_count()];
    active[a.initial()] = a.initial_clocks().clone();

    let enabling: Vec<IdSet> = (0..a.state_count()).map(|s| a.enabling_idx(s)).collect();
    let stable: Vec<bool> = (0..a.state_count()).map(|s| a.is_stable_idx(s)).collect();

    let mut changed = true;
    while changed {
        changed = false;
        for s in 0..a.state_count() {
            if stable[s] {
                let clamped: IdSet = active[s].intersection(&enabling[s]).copied().collect();
                if clamped != active[s] {
                    active[s] = clamped;
                    changed = true;
                }
            }
        }
        for t in a.transitions() {
            let mut bound: IdSet = active[t.source].difference(&t.trigger).copied().collect();
            bound.extend(t.resets.iter().copied());
            let clamped: IdSet = active[t.target].intersection(&bound).copied().collect();
            if clamped != active[t.target] {
                active[t.target] = clamped;
                changed = true;
            }
        }
    }

    for s in 0..a.state_count() {
        if !enabling[s].is_subset(&active[s]) {
            return Err(ActiveFailure {
                state: a.state_name(s).to_string(),
                enabling: a.clock_name_set(&enabling[s]),
                active: a.clock_name_set(&active[s]),
            });
        }
    }
    Ok(active)
}

/// Re-verify a claimed active map against the raw invariants of
/// condition (f); used by tests and the composition property suite so a
/// bug in `infer_active` cannot certify itself.
pub fn verify_active(a: &Automaton, active: &ActiveMap) -> Result<(), Vec<String>> {
    let mut bad = Vec::new();
    if active.len() != a.state_count() {
        return Err(vec![format!(
            "active map has {} entries for {} states",
            active.len(),
            a.state_count()
        )]);
    }
    if !active[a.initial()].is_subset(a.initial_clocks()) {
        bad.push(format!(
            "(i) active({}) ⊄ initial clocks",
            a.initial_name()
        ));
    }
    for s in 0..a.state_count() {
        let enabling = a.enabling_idx(s);
        if !enabling.is_subset(&active[s]) {
            bad.push(format!("(ii) enabling({0}) ⊄ active({0})", a.state_name(s)));
        }
        if a.is_stable_idx(s) && active[s] != enabling {
            bad.push(format!(
                "(iii) stable state {} has active ≠ enabling",
                a.state_name(s)
            ));
        }
    }
    for t in a.transitions() {
        let mut bound: IdSet = active[t.source].difference(&t.trigger).copied().collect();
        bound.extend(t.resets.iter().copied());
        if !active[t.target].is_subset(&bound) {
            bad.push(format!(
                "(iv) {} does not justify active({})",
                a.transition_display(t),
                a.state_name(t.target)
            ));
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(bad)
    }
}

/// Add the input self-loops left implicit by the source: for every input
/// action and every state with no transition on it, a `(∅, a, ∅)`
/// self-loop. Idempotent.
pub fn canonicalize(a: &Automaton) -> Automaton {
    let inputs: Vec<usize> = (0..a.labels().len())
        .filter(|&l| a.label(l).is_input())
        .collect();
    let mut added = Vec::new();
    for s in 0..a.state_count() {
        let present: BTreeSet<usize> = a
            .outgoing(s)
            .iter()
            .map(|&ti| a.transitions()[ti].label)
            .collect();
        for &l in &inputs {
            if !present.contains(&l) {
                added.push(Transition {
                    source: s,
                    trigger: IdSet::new(),
                    label: l,
                    resets: IdSet::new(),
                    target: s,
                });
            }
        }
    }
    a.with_added_transitions(added)
}

/// Full check of one automaton: structure plus active-clock witness.
pub fn check(a: &Automaton) -> WellformedReport {
    let mut violations = check_structure(a);
    let active = match infer_active(a) {
        Ok(map) => Some(
            map.iter()
                .enumerate()
                .map(|(s, set)| (a.state_name(s).to_string(), a.clock_name_set(set)))
                .collect(),
        ),
        Err(fail) => {
            violations.push(Violation {
                condition: "f",
                state: Some(fail.state.clone()),
                transition: None,
                message: fail.message(),
            });
            None
        }
    };
    WellformedReport {
        automaton: a.name().to_string(),
        well_formed: violations.is_empty(),
        violations,
        active,
    }
}

/// The automata of a model file with `#complete-inputs` honored.
pub fn prepare(mf: &ModelFile) -> Vec<Automaton> {
    mf.automata
        .iter()
        .map(|a| {
            if a.complete_inputs_requested() {
                canonicalize(a)
            } else {
                a.clone()
            }
        })
        .collect()
}

/// Prepared automata named by the model's system line.
pub fn prepare_system(mf: &ModelFile) -> Result<Vec<Automaton>, ModelError> {
    let components = mf.system_components()?;
    Ok(components
        .into_iter()
        .map(|a| {
            if a.complete_inputs_requested() {
                canonicalize(a)
            } else {
                a.clone()
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Distribution, Kind};
    use crate::parse::parse_model;

    fn exp1() -> Distribution {
        Distribution::Exponential { rate: 1.0 }
    }

    fn i1() -> Automaton {
        Automaton::builder("I1")
            .clock("x", exp1())
            .unwrap()
            .initial("s0", &["x"])
            .transition("s0", &["x"], ("a", Kind::Output, false), &[], "s1")
            .unwrap()
            .transition("s1", &[], ("c", Kind::Output, true), &[], "s2")
            .unwrap()
            .build()
            .unwrap()
    }

    fn i3_raw() -> Automaton {
        Automaton::builder("I3")
            .clock("z", exp1())
            .unwrap()
            .initial("s6", &[])
            .transition("s6", &[], ("c", Kind::Input, true), &[], "s7")
            .unwrap()
            .transition("s6", &[], ("d", Kind::Input, true), &[], "s9")
            .unwrap()
            .transition("s7", &[], ("d", Kind::Input, true), &["z"], "s8")
            .unwrap()
            .transition("s8", &["z"], ("e", Kind::Output, false), &[], "s9")
            .unwrap()
            .build()
            .unwrap()
    }

    #[test]
    fn i1_is_well_formed() {
        let report = check(&i1());
        assert!(report.well_formed, "{:?}", report.violations);
    }

    #[test]
    fn multi_clock_trigger_violates_b() {
        let a = Automaton::builder("B")
            .clock("x", exp1())
            .unwrap()
            .clock("y", exp1())
            .unwrap()
            .initial("s0", &["x", "y"])
            .transition("s0", &["x", "y"], ("a", Kind::Output, false), &[], "s1")
            .unwrap()
            .build()
            .unwrap();
        let v = check_structure(&a);
        assert!(v.iter().any(|v| v.condition == "b"), "{v:?}");
    }

    #[test]
    fn urgent_output_with_trigger_violates_a() {
        let a = Automaton::builder("B")
            .clock("x", exp1())
            .unwrap()
            .initial("s0", &["x"])
            .transition("s0", &["x"], ("u", Kind::Output, true), &[], "s1")
            .unwrap()
            .build()
            .unwrap();
        let v = check_structure(&a);
        assert!(v.iter().any(|v| v.condition == "a"), "{v:?}");
    }

    #[test]
    fn one_clock_two_transitions_violates_c() {
        let a = Automaton::builder("B")
            .clock("x", exp1())
            .unwrap()
            .initial("s0", &["x"])
            .transition("s0", &["x"], ("a", Kind::Output, false), &[], "s1")
            .unwrap()
            .transition("s0", &["x"], ("b", Kind::Output, false), &[], "s2")
            .unwrap()
            .build()
            .unwrap();
        let v = check_structure(&a);
        assert!(v.iter().any(|v| v.condition == "c"), "{v:?}");
    }

    #[test]
    fn missing_inputs_violate_d_and_canonicalize_repairs() {
        let raw = i3_raw();
        let v = check_structure(&raw);
        let d_count = v.iter().filter(|v| v.condition == "d").count();
        // c missing at s7, s8, s9; d missing at s8, s9.
        assert_eq!(d_count, 5, "{v:?}");

        let fixed = canonicalize(&raw);
        assert_eq!(fixed.transitions().len(), raw.transitions().len() + 5);
        assert!(check(&fixed).well_formed);
        // Idempotent: nothing left to add.
        let again = canonicalize(&fixed);
        assert!(again.canonical_eq(&fixed));
    }

    #[test]
    fn nondeterministic_input_violates_e() {
        let a = Automaton::builder("B")
            .initial("s0", &[])
            .transition("s0", &[], ("a", Kind::Input, false), &[], "s1")
            .unwrap()
            .transition("s0", &[], ("a", Kind::Input, false), &[], "s2")
            .unwrap()
            .transition("s1", &[], ("a", Kind::Input, false), &[], "s1")
            .unwrap()
            .transition("s2", &[], ("a", Kind::Input, false), &[], "s2")
            .unwrap()
            .build()
            .unwrap();
        let v = check_structure(&a);
        assert!(v.iter().any(|v| v.condition == "e"), "{v:?}");
    }

    #[test]
    fn active_map_of_i1() {
        let a = i1();
        let map = infer_active(&a).unwrap();
        let named: Vec<BTreeSet<String>> = map.iter().map(|s| a.clock_name_set(s)).collect();
        assert_eq!(named[a.state_index("s0").unwrap()], BTreeSet::from(["x".to_string()]));
        assert!(named[a.state_index("s1").unwrap()].is_empty());
        assert!(named[a.state_index("s2").unwrap()].is_empty());
        verify_active(&a, &map).unwrap();
    }

    #[test]
    fn unreset_enabling_clock_has_no_witness() {
        // x triggers an output from s1 but is neither initially set on the
        // path nor reset entering s1.
        let a = Automaton::builder("B")
            .clock("x", exp1())
            .unwrap()
            .initial("s0", &[])
            .transition("s0", &[], ("u", Kind::Output, true), &[], "s1")
            .unwrap()
            .transition("s1", &["x"], ("a", Kind::Output, false), &[], "s2")
            .unwrap()
            .build()
            .unwrap();
        let err = infer_active(&a).unwrap_err();
        assert_eq!(err.state, "s1");
        assert_eq!(err.enabling, BTreeSet::from(["x".to_string()]));
        assert!(err.active.is_empty());
        let report = check(&a);
        assert!(report.violations.iter().any(|v| v.condition == "f"));
    }

    #[test]
    fn diamond_automaton_checks_out() {
        let src = r#"
clock x ~ uniform(0.0, 1.0);
clock y ~ uniform(0.0, 2.0);
automaton D {
  init s0 clocks {};
  s0 --{}, tau!!, {x}--> s1;
  s0 --{}, tau!!, {y}--> s2;
  s1 --{}, tau!!, {y}--> s3;
  s2 --{}, tau!!, {x}--> s3;
  s3 --{x}, a!, {}--> s4;
  s3 --{y}, b!, {}--> s5;
}
"#;
        let m = parse_model(src).unwrap();
        let d = &m.automata[0];
        let report = check(d);
        assert!(report.well_formed, "{:?}", report.violations);
        let active = report.active.unwrap();
        assert_eq!(
            active["s3"],
            BTreeSet::from(["x".to_string(), "y".to_string()])
        );
        assert!(active["s0"].is_empty());
        assert_eq!(active["s1"], BTreeSet::from(["x".to_string()]));
    }

    #[test]
    fn prepare_honors_the_pragma() {
        let src = r#"
clock z ~ exponential(1.0);
automaton I3 {
  #complete-inputs
  init s6 clocks {};
  s6 --{}, c??, {}--> s7;
  s6 --{}, d??, {}--> s9;
  s7 --{}, d??, {z}--> s8;
  s8 --{z}, e!, {}--> s9;
}
"#;
        let m = parse_model(src).unwrap();
        let prepared = prepare(&m);
        assert!(check(&prepared[0]).well_formed);
        assert_eq!(prepared[0].transitions().len(), 9);
    }
}
