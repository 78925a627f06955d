//! Parallel composition of compatible automata.
//!
//! Components synchronize on shared action names: an output in one
//! component pairs with the matching input (or a shared input pairs with
//! the same input elsewhere), while unshared actions and the silent
//! action `tau` interleave freely — `tau` never synchronizes even when
//! both sides use it. Triggers and resets of a synchronized transition
//! are the unions of the component sets.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::model::{Automaton, IdSet, Kind, ModelError};
use crate::wellformed::{infer_active, ActiveMap};

/// How much of the product state space to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    /// Only states reachable from the initial pair (the default).
    Reachable,
    /// The whole Cartesian product, including unreachable corners.
    Full,
}

/// One reason a pair of components cannot be composed.
#[derive(Debug, Clone, Serialize)]
pub struct Conflict {
    /// `shared-output`, `shared-clock`, or `urgency-mismatch`.
    pub kind: &'static str,
    pub detail: String,
}

/// Outcome of the pairwise compatibility check.
#[derive(Debug, Clone, Serialize)]
pub struct CompatibilityReport {
    pub left: String,
    pub right: String,
    pub compatible: bool,
    pub conflicts: Vec<Conflict>,
}

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error("components `{left}` and `{right}` are incompatible: {summary}")]
    Incompatible {
        left: String,
        right: String,
        summary: String,
        report: CompatibilityReport,
    },
    #[error("component `{automaton}` is not well-formed: {message}")]
    IllFormed { automaton: String, message: String },
    #[error("nothing to compose")]
    Empty,
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl ComposeError {
    fn incompatible(report: CompatibilityReport) -> Self {
        let summary = report
            .conflicts
            .iter()
            .map(|c| c.detail.as_str())
            .collect::<Vec<_>>()
            .join("; ");
        ComposeError::Incompatible {
            left: report.left.clone(),
            right: report.right.clone(),
            summary,
            report,
        }
    }
}

/// Check the three compatibility conditions: no shared output but `tau`,
/// disjoint clocks, and agreement on the urgency of shared actions.
pub fn compatible(a: &Automaton, b: &Automaton) -> CompatibilityReport {
    let mut conflicts = Vec::new();

    let outs_b: BTreeSet<&str> = b.outputs().map(|l| l.name.as_str()).collect();
    for l in a.outputs() {
        if !l.is_tau() && outs_b.contains(l.name.as_str()) {
            conflicts.push(Conflict {
                kind: "shared-output",
                detail: format!("both components produce output `{}`", l.name),
            });
        }
    }

    let clocks_b: BTreeSet<&str> = b.clocks().iter().map(|c| c.id.as_str()).collect();
    for c in a.clocks() {
        if clocks_b.contains(c.id.as_str()) {
            conflicts.push(Conflict {
                kind: "shared-clock",
                detail: format!("both components use clock `{}`", c.id),
            });
        }
    }

    let by_name_b: BTreeMap<&str, bool> =
        b.labels().iter().map(|l| (l.name.as_str(), l.urgent)).collect();
    for l in a.labels() {
        if let Some(&urgent_b) = by_name_b.get(l.name.as_str()) {
            if l.urgent != urgent_b {
                conflicts.push(Conflict {
                    kind: "urgency-mismatch",
                    detail: format!(
                        "action `{}` is {} in `{}` but {} in `{}`",
                        l.name,
                        if l.urgent { "urgent" } else { "non-urgent" },
                        a.name(),
                        if urgent_b { "urgent" } else { "non-urgent" },
                        b.name(),
                    ),
                });
            }
        }
    }

    CompatibilityReport {
        left: a.name().to_string(),
        right: b.name().to_string(),
        compatible: conflicts.is_empty(),
        conflicts,
    }
}

/// A composed automaton together with the per-state projections back
/// onto its components.
#[derive(Debug, Clone)]
pub struct Composition {
    pub automaton: Automaton,
    pub components: Vec<Automaton>,
    /// `projections[s][k]` is the state of component `k` in composed
    /// state `s`, as an index into that component's state table.
    pub projections: Vec<Vec<usize>>,
}

impl Composition {
    /// Wrap a single automaton as the trivial one-component composition.
    pub fn lift(a: &Automaton) -> Composition {
        Composition {
            automaton: a.clone(),
            projections: (0..a.state_count()).map(|s| vec![s]).collect(),
            components: vec![a.clone()],
        }
    }

    pub fn component_index(&self, name: &str) -> Option<usize> {
        self.components.iter().position(|c| c.name() == name)
    }

    /// The state of component `k` within composed state `s`.
    pub fn project(&self, s: usize, k: usize) -> usize {
        self.projections[s][k]
    }

    /// Active clocks of every composed state as the union of the
    /// component active maps, translated into the composed clock table.
    pub fn composed_active(&self) -> Result<ActiveMap, ComposeError> {
        let parts: Vec<ActiveMap> = self
            .components
            .iter()
            .map(|c| {
                infer_active(c).map_err(|f| ComposeError::IllFormed {
                    automaton: c.name().to_string(),
                    message: f.message(),
                })
            })
            .collect::<Result<_, _>>()?;
        let mut out = vec![IdSet::new(); self.automaton.state_count()];
        for (s, slot) in out.iter_mut().enumerate() {
            for (k, c) in self.components.iter().enumerate() {
                for &clock in &parts[k][self.projections[s][k]] {
                    slot.insert(self.automaton.clock_index(c.clock_name(clock))?);
                }
            }
        }
        Ok(out)
    }
}

/// One move of the product under construction, still in external names.
struct Mv {
    trigger: Vec<String>,
    action: String,
    kind: Kind,
    urgent: bool,
    resets: Vec<String>,
    target: (usize, usize),
}

fn product(
    a: &Automaton,
    b: &Automaton,
    scope: Scope,
) -> Result<(Automaton, Vec<(usize, usize)>), ModelError> {
    // The composed direction of each action: output wins, urgency is
    // shared (compatibility guarantees agreement where both have it).
    let mut kinds: BTreeMap<&str, (Kind, bool)> = BTreeMap::new();
    for l in a.labels().iter().chain(b.labels()) {
        let e = kinds.entry(l.name.as_str()).or_insert((l.kind, l.urgent));
        if l.is_output() {
            e.0 = Kind::Output;
        }
        e.1 = e.1 || l.urgent;
    }
    let in_a: BTreeSet<&str> = a.labels().iter().map(|l| l.name.as_str()).collect();
    let in_b: BTreeSet<&str> = b.labels().iter().map(|l| l.name.as_str()).collect();

    let clock_names = |auto: &Automaton, set: &IdSet| -> Vec<String> {
        set.iter().map(|&c| auto.clock_name(c).to_string()).collect()
    };
    let pair_name =
        |(s1, s2): (usize, usize)| format!("{}|{}", a.state_name(s1), b.state_name(s2));

    // All moves leaving one product state: the left component alone, the
    // two synchronized, then the right component alone.
    let moves = |(u1, u2): (usize, usize)| -> Vec<Mv> {
        let mut out = Vec::new();
        for &ti in a.outgoing(u1) {
            let t = &a.transitions()[ti];
            let l = a.label(t.label);
            let (kind, urgent) = kinds[l.name.as_str()];
            if l.is_tau() || !in_b.contains(l.name.as_str()) {
                out.push(Mv {
                    trigger: clock_names(a, &t.trigger),
                    action: l.name.clone(),
                    kind,
                    urgent,
                    resets: clock_names(a, &t.resets),
                    target: (t.target, u2),
                });
            } else {
                for &tj in b.outgoing(u2) {
                    let t2 = &b.transitions()[tj];
                    if b.label(t2.label).name != l.name {
                        continue;
                    }
                    let mut trigger = clock_names(a, &t.trigger);
                    trigger.extend(clock_names(b, &t2.trigger));
                    let mut resets = clock_names(a, &t.resets);
                    resets.extend(clock_names(b, &t2.resets));
                    out.push(Mv {
                        trigger,
                        action: l.name.clone(),
                        kind,
                        urgent,
                        resets,
                        target: (t.target, t2.target),
                    });
                }
            }
        }
        for &tj in b.outgoing(u2) {
            let t = &b.transitions()[tj];
            let l = b.label(t.label);
            if l.is_tau() || !in_a.contains(l.name.as_str()) {
                let (kind, urgent) = kinds[l.name.as_str()];
                out.push(Mv {
                    trigger: clock_names(b, &t.trigger),
                    action: l.name.clone(),
                    kind,
                    urgent,
                    resets: clock_names(b, &t.resets),
                    target: (u1, t.target),
                });
            }
        }
        out
    };

    let init = (a.initial(), b.initial());
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut edges: Vec<((usize, usize), Mv)> = Vec::new();
    match scope {
        Scope::Full => {
            for s1 in 0..a.state_count() {
                for s2 in 0..b.state_count() {
                    pairs.push((s1, s2));
                    edges.extend(moves((s1, s2)).into_iter().map(|m| ((s1, s2), m)));
                }
            }
        }
        Scope::Reachable => {
            let mut seen: BTreeSet<(usize, usize)> = BTreeSet::from([init]);
            let mut queue = VecDeque::from([init]);
            while let Some(p) = queue.pop_front() {
                pairs.push(p);
                for m in moves(p) {
                    if seen.insert(m.target) {
                        queue.push_back(m.target);
                    }
                    edges.push((p, m));
                }
            }
        }
    }

    let mut builder = Automaton::builder(&format!("{}_{}", a.name(), b.name()));
    for c in a.clocks().iter().chain(b.clocks()) {
        builder = builder.clock(&c.id, c.distribution.clone())?;
    }
    let init_clocks: Vec<String> = clock_names(a, a.initial_clocks())
        .into_iter()
        .chain(clock_names(b, b.initial_clocks()))
        .collect();
    let init_refs: Vec<&str> = init_clocks.iter().map(String::as_str).collect();
    builder = builder.initial(&pair_name(init), &init_refs);
    for &p in &pairs {
        builder = builder.state(&pair_name(p));
    }
    for (src, m) in &edges {
        let trigger: Vec<&str> = m.trigger.iter().map(String::as_str).collect();
        let resets: Vec<&str> = m.resets.iter().map(String::as_str).collect();
        builder = builder.transition(
            &pair_name(*src),
            &trigger,
            (&m.action, m.kind, m.urgent),
            &resets,
            &pair_name(m.target),
        )?;
    }
    let automaton = builder.build()?;

    Ok((automaton, pairs))
}

/// Compose two compatible automata.
pub fn compose(a: &Automaton, b: &Automaton, scope: Scope) -> Result<Composition, ComposeError> {
    let report = compatible(a, b);
    if !report.compatible {
        return Err(ComposeError::incompatible(report));
    }
    let (automaton, pairs) = product(a, b, scope)?;
    let mut projections = vec![Vec::new(); automaton.state_count()];
    for (s1, s2) in pairs {
        let name = format!("{}|{}", a.state_name(s1), b.state_name(s2));
        projections[automaton.state_index(&name)?] = vec![s1, s2];
    }
    Ok(Composition {
        automaton,
        components: vec![a.clone(), b.clone()],
        projections,
    })
}

/// Compose any number of components left to right, checking every pair
/// for compatibility up front so the error names the offending pair.
pub fn compose_many(components: &[Automaton], scope: Scope) -> Result<Composition, ComposeError> {
    if components.is_empty() {
        return Err(ComposeError::Empty);
    }
    for i in 0..components.len() {
        for j in i + 1..components.len() {
            let report = compatible(&components[i], &components[j]);
            if !report.compatible {
                return Err(ComposeError::incompatible(report));
            }
        }
    }
    let mut acc = Composition::lift(&components[0]);
    for c in &components[1..] {
        let step = compose(&acc.automaton, c, scope)?;
        let projections = step
            .projections
            .iter()
            .map(|p| {
                if p.is_empty() {
                    // A full-product state of the step whose left half was
                    // not a state of the accumulator cannot occur: the
                    // accumulator enumerates all of its states.
                    unreachable!("every product state projects");
                }
                let mut flat = acc.projections[p[0]].clone();
                flat.push(p[1]);
                flat
            })
            .collect();
        let mut parts = acc.components;
        parts.push(c.clone());
        acc = Composition {
            automaton: step.automaton,
            components: parts,
            projections,
        };
    }
    Ok(acc)
}
