//! Seeded random model generation for bulk testing.
//!
//! Three recipes, each sound by construction:
//!
//! - [`wellformed_pair`]: two compatible well-formed components. Enabling
//!   clocks are fixed per state before any edge exists, and every edge
//!   resets at least the enabling clocks of its target, which makes the
//!   per-state enabling sets an active-clock witness.
//! - [`confluent_pair`]: components whose urgent transitions form
//!   commuting diamonds with per-action reset sets, so the components and
//!   their composition are confluent at every state.
//! - [`closed_system`]: two or three components where every input name is
//!   an output some other component actually uses, so the composition has
//!   no dangling inputs.
//!
//! All randomness comes through the caller's generator; a fixed seed
//! reproduces the same models.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::model::{Automaton, Distribution, Kind};
use crate::wellformed::canonicalize;

fn distribution<R: Rng + ?Sized>(rng: &mut R) -> Distribution {
    match rng.gen_range(0..5) {
        0 => Distribution::Exponential {
            rate: 0.5 + 2.5 * rng.gen::<f64>(),
        },
        1 => {
            let lo = rng.gen::<f64>();
            Distribution::Uniform {
                lo,
                hi: lo + 0.5 + rng.gen::<f64>(),
            }
        }
        2 => Distribution::Weibull {
            shape: 0.6 + 2.0 * rng.gen::<f64>(),
            scale: 0.5 + rng.gen::<f64>(),
        },
        3 => Distribution::LogNormal {
            mu: rng.gen::<f64>() - 0.5,
            sigma: 0.2 + 0.8 * rng.gen::<f64>(),
        },
        _ => Distribution::Erlang {
            k: rng.gen_range(1..4),
            rate: 0.5 + 2.0 * rng.gen::<f64>(),
        },
    }
}

struct Edge {
    source: String,
    trigger: Vec<String>,
    label: String,
    kind: Kind,
    urgent: bool,
    resets: BTreeSet<String>,
    target: String,
}

/// String-level scratch model. Keeping the per-state enabling sets around
/// lets later edges (inputs wired in after the fact) pick witness-safe
/// reset sets.
struct Draft {
    name: String,
    clocks: Vec<(String, Distribution)>,
    enab: BTreeMap<String, BTreeSet<String>>,
    edges: Vec<Edge>,
    used_inputs: BTreeSet<(String, String)>,
    initial: String,
    c0: BTreeSet<String>,
}

impl Draft {
    /// Output labels this draft actually uses, with their urgency.
    fn outputs_used(&self) -> Vec<(String, bool)> {
        let mut seen: BTreeMap<String, bool> = BTreeMap::new();
        for e in &self.edges {
            if e.kind == Kind::Output {
                seen.insert(e.label.clone(), e.urgent);
            }
        }
        seen.into_iter().collect()
    }

    /// Wire one input edge for `label` at a random position, respecting
    /// input determinism (at most one use per source state).
    fn add_input<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        label: &str,
        urgent: bool,
        states: &[String],
    ) {
        let source = states[rng.gen_range(0..states.len())].clone();
        if !self
            .used_inputs
            .insert((source.clone(), label.to_string()))
        {
            return;
        }
        let target = states[rng.gen_range(0..states.len())].clone();
        let resets = self.enab.get(&target).cloned().unwrap_or_default();
        self.edges.push(Edge {
            source,
            trigger: Vec::new(),
            label: label.to_string(),
            kind: Kind::Input,
            urgent,
            resets,
            target,
        });
    }

    fn finalize(self) -> Automaton {
        // A clock the model text never mentions would not survive a
        // print/parse round trip, so it stays out of the table.
        let mut mentioned: BTreeSet<&str> = self.c0.iter().map(|s| s.as_str()).collect();
        for e in &self.edges {
            mentioned.extend(e.trigger.iter().map(|s| s.as_str()));
            mentioned.extend(e.resets.iter().map(|s| s.as_str()));
        }
        let mut b = Automaton::builder(&self.name);
        for (id, d) in &self.clocks {
            if mentioned.contains(id.as_str()) {
                b = b.clock(id, d.clone()).unwrap();
            }
        }
        let c0: Vec<&str> = self.c0.iter().map(|s| s.as_str()).collect();
        b = b.initial(&self.initial, &c0);
        for e in &self.edges {
            let trigger: Vec<&str> = e.trigger.iter().map(|s| s.as_str()).collect();
            let resets: Vec<&str> = e.resets.iter().map(|s| s.as_str()).collect();
            b = b
                .transition(
                    &e.source,
                    &trigger,
                    (&e.label, e.kind, e.urgent),
                    &resets,
                    &e.target,
                )
                .unwrap();
        }
        canonicalize(&b.build().unwrap())
    }
}

/// Random component skeleton: per-state enabling sets, one timed output
/// per enabling clock, and optional urgent bursts.
fn spine_draft<R: Rng + ?Sized>(
    rng: &mut R,
    name: &str,
    tag: &str,
    timed_labels: &[String],
    urgent_labels: &[String],
) -> (Draft, Vec<String>) {
    let n_states = rng.gen_range(2..=5);
    let states: Vec<String> = (0..n_states).map(|i| format!("q{i}")).collect();
    let n_clocks = rng.gen_range(1..=3);
    let clocks: Vec<(String, Distribution)> = (0..n_clocks)
        .map(|i| (format!("x{tag}{i}"), distribution(rng)))
        .collect();

    // Enabling sets come first; the initial state always races something
    // so the component is never a single idle state.
    let mut enab: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (i, s) in states.iter().enumerate() {
        let mut set = BTreeSet::new();
        for (c, _) in &clocks {
            if rng.gen_bool(0.4) {
                set.insert(c.clone());
            }
        }
        if i == 0 && set.is_empty() {
            set.insert(clocks[rng.gen_range(0..clocks.len())].0.clone());
        }
        enab.insert(s.clone(), set);
    }

    let mut edges = Vec::new();
    for s in &states {
        for x in &enab[s] {
            let target = states[rng.gen_range(0..states.len())].clone();
            let label = timed_labels[rng.gen_range(0..timed_labels.len())].clone();
            let mut resets = enab[&target].clone();
            if rng.gen_bool(0.25) {
                // An extra resample stays witness-safe: the target's
                // enabling clocks remain included.
                resets.insert(clocks[rng.gen_range(0..clocks.len())].0.clone());
            }
            edges.push(Edge {
                source: s.clone(),
                trigger: vec![x.clone()],
                label,
                kind: Kind::Output,
                urgent: false,
                resets,
                target,
            });
        }
    }

    if !urgent_labels.is_empty() {
        for _ in 0..rng.gen_range(0..=n_states) {
            let si = rng.gen_range(0..states.len());
            let mut ti = rng.gen_range(0..states.len());
            if ti == si {
                // No urgent self-loops; they would be trivial cycles.
                ti = (ti + 1) % states.len();
            }
            let label = urgent_labels[rng.gen_range(0..urgent_labels.len())].clone();
            edges.push(Edge {
                source: states[si].clone(),
                trigger: Vec::new(),
                label,
                kind: Kind::Output,
                urgent: true,
                resets: enab[&states[ti]].clone(),
                target: states[ti].clone(),
            });
        }
    }

    let mut c0 = enab[&states[0]].clone();
    for (c, _) in &clocks {
        if rng.gen_bool(0.2) {
            c0.insert(c.clone());
        }
    }

    let draft = Draft {
        name: name.to_string(),
        clocks,
        enab,
        edges,
        used_inputs: BTreeSet::new(),
        initial: states[0].clone(),
        c0,
    };
    (draft, states)
}

fn label_menu<R: Rng + ?Sized>(
    rng: &mut R,
    tag: &str,
    min_urgent: usize,
) -> (Vec<String>, Vec<String>) {
    let timed = (0..rng.gen_range(1..=2))
        .map(|i| format!("a{tag}{i}"))
        .collect();
    let urgent = (0..rng.gen_range(min_urgent..=2))
        .map(|i| format!("u{tag}{i}"))
        .collect();
    (timed, urgent)
}

/// Two compatible well-formed components that cross-listen to each
/// other's outputs (urgency travels with the name, so the sides agree).
pub fn wellformed_pair<R: Rng + ?Sized>(rng: &mut R) -> (Automaton, Automaton) {
    let (timed_a, urgent_a) = label_menu(rng, "A", 0);
    let (timed_b, urgent_b) = label_menu(rng, "B", 0);
    let (mut da, states_a) = spine_draft(rng, "A", "A", &timed_a, &urgent_a);
    let (mut db, states_b) = spine_draft(rng, "B", "B", &timed_b, &urgent_b);
    let menu_a = da.outputs_used();
    let menu_b = db.outputs_used();
    for (name, urgent) in &menu_b {
        if rng.gen_bool(0.5) {
            da.add_input(rng, name, *urgent, &states_a);
        }
    }
    for (name, urgent) in &menu_a {
        if rng.gen_bool(0.5) {
            db.add_input(rng, name, *urgent, &states_b);
        }
    }
    (da.finalize(), db.finalize())
}

/// One component of a confluent pair: a timed two-state cycle whose hop
/// from `q0` to `q1` runs through a diamond of urgent outputs. Reset sets
/// depend only on the action, so any two pending urgent outputs commute
/// with exactly matching resets.
fn diamond_draft<R: Rng + ?Sized>(rng: &mut R, name: &str, tag: &str) -> (Draft, Vec<String>) {
    let x = format!("x{tag}");
    let y = format!("y{tag}");
    let clocks = vec![
        (x.clone(), distribution(rng)),
        (y.clone(), distribution(rng)),
    ];
    let two = rng.gen_bool(0.6);
    let states: Vec<String> = if two {
        ["q0", "r0", "r1", "r2", "q1"]
    } else {
        ["q0", "r0", "q1", "q1", "q1"]
    }
    .iter()
    .map(|s| s.to_string())
    .collect::<BTreeSet<_>>()
    .into_iter()
    .collect();

    let mut enab: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for s in &states {
        enab.insert(s.clone(), BTreeSet::new());
    }
    enab.insert("q0".to_string(), BTreeSet::from([x.clone()]));
    enab.insert("q1".to_string(), BTreeSet::from([y.clone()]));

    let u_resets = BTreeSet::from([y.clone()]);
    let mut edges = vec![Edge {
        source: "q0".to_string(),
        trigger: vec![x.clone()],
        label: format!("a{tag}"),
        kind: Kind::Output,
        urgent: false,
        resets: BTreeSet::new(),
        target: "r0".to_string(),
    }];
    let urgent_edge = |source: &str, i: usize, target: &str| Edge {
        source: source.to_string(),
        trigger: Vec::new(),
        label: format!("u{tag}{i}"),
        kind: Kind::Output,
        urgent: true,
        resets: u_resets.clone(),
        target: target.to_string(),
    };
    if two {
        edges.push(urgent_edge("r0", 0, "r1"));
        edges.push(urgent_edge("r0", 1, "r2"));
        edges.push(urgent_edge("r1", 1, "q1"));
        edges.push(urgent_edge("r2", 0, "q1"));
    } else {
        edges.push(urgent_edge("r0", 0, "q1"));
    }
    edges.push(Edge {
        source: "q1".to_string(),
        trigger: vec![y.clone()],
        label: format!("b{tag}"),
        kind: Kind::Output,
        urgent: false,
        resets: BTreeSet::from([x.clone()]),
        target: "q0".to_string(),
    });

    let draft = Draft {
        name: name.to_string(),
        clocks,
        enab,
        edges,
        used_inputs: BTreeSet::new(),
        initial: "q0".to_string(),
        c0: BTreeSet::from([x]),
    };
    (draft, states)
}

/// Two components that are confluent at every state, as is their
/// composition. They may listen to each other's timed outputs; urgent
/// actions stay local, so urgent moves of different components commute by
/// interleaving.
pub fn confluent_pair<R: Rng + ?Sized>(rng: &mut R) -> (Automaton, Automaton) {
    let (mut da, states_a) = diamond_draft(rng, "A", "A");
    let (mut db, states_b) = diamond_draft(rng, "B", "B");
    for (name, urgent) in db.outputs_used() {
        if !urgent && rng.gen_bool(0.4) {
            da.add_input(rng, &name, false, &states_a);
        }
    }
    for (name, urgent) in da.outputs_used() {
        if !urgent && rng.gen_bool(0.4) {
            db.add_input(rng, &name, false, &states_b);
        }
    }
    (da.finalize(), db.finalize())
}

/// Two or three components whose inputs all name outputs that some other
/// component actually uses, so their composition is closed.
pub fn closed_system<R: Rng + ?Sized>(rng: &mut R) -> Vec<Automaton> {
    let n = rng.gen_range(2..=3);
    let mut drafts = Vec::new();
    let mut state_lists = Vec::new();
    for k in 0..n {
        let tag = format!("{k}");
        let (timed, urgent) = label_menu(rng, &tag, 1);
        let (d, s) = spine_draft(rng, &format!("C{k}"), &tag, &timed, &urgent);
        drafts.push(d);
        state_lists.push(s);
    }
    let menus: Vec<Vec<(String, bool)>> = drafts.iter().map(|d| d.outputs_used()).collect();
    for j in 0..n {
        for (k, menu) in menus.iter().enumerate() {
            if k == j {
                continue;
            }
            for (name, urgent) in menu {
                if rng.gen_bool(0.6) {
                    drafts[j].add_input(rng, name, *urgent, &state_lists[j]);
                }
            }
        }
    }
    drafts.into_iter().map(Draft::finalize).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{check_confluence_direct, DirectOptions, Status};
    use crate::compose::{compatible, compose, compose_many, Scope};
    use crate::wellformed;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn generated_pairs_are_wellformed_and_compatible() {
        for seed in 0..50u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let (a, b) = wellformed_pair(&mut rng);
            assert!(
                wellformed::check(&a).well_formed,
                "seed {seed}: left component ill-formed"
            );
            assert!(
                wellformed::check(&b).well_formed,
                "seed {seed}: right component ill-formed"
            );
            assert!(
                compatible(&a, &b).compatible,
                "seed {seed}: pair incompatible"
            );
            let comp = compose(&a, &b, Scope::Reachable).unwrap();
            assert!(
                wellformed::check(&comp.automaton).well_formed,
                "seed {seed}: composition ill-formed"
            );
        }
    }

    #[test]
    fn generated_confluent_pairs_stay_confluent_when_composed() {
        let opts = DirectOptions {
            potentially_reachable_only: false,
        };
        for seed in 0..30u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let (a, b) = confluent_pair(&mut rng);
            assert_eq!(check_confluence_direct(&a, &opts).status, Status::Confluent);
            assert_eq!(check_confluence_direct(&b, &opts).status, Status::Confluent);
            let comp = compose(&a, &b, Scope::Reachable).unwrap();
            let report = check_confluence_direct(&comp.automaton, &opts);
            assert_eq!(
                report.status,
                Status::Confluent,
                "seed {seed}: witnesses {:?}",
                report.witnesses
            );
        }
    }

    #[test]
    fn generated_closed_systems_have_no_dangling_inputs() {
        for seed in 0..30u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let components = closed_system(&mut rng);
            let outputs: std::collections::BTreeSet<String> = components
                .iter()
                .flat_map(|c| c.outputs())
                .map(|l| l.name.clone())
                .collect();
            for c in &components {
                for input in c.inputs() {
                    assert!(
                        outputs.contains(&input.name),
                        "seed {seed}: input `{}` of `{}` has no producer",
                        input.name,
                        c.name()
                    );
                }
            }
            compose_many(&components, Scope::Reachable)
                .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        }
    }
}
