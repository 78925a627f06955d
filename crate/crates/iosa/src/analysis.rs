//! Confluence analysis.
//!
//! Urgent transitions fire in zero time, so when several are enabled at
//! once their order is not resolved by the stochastic semantics. A model
//! is safe to simulate deterministically when every such race is
//! confluent: both orders converge on the same state with the same clock
//! resets. This module provides the direct per-state check and a
//! compositional check that works component by component, combining
//! spontaneous-enabling information, a trigger relation between urgent
//! actions, and a graph overapproximating which urgent outputs can be
//! enabled together. The compositional check answers `confluent` or
//! `inconclusive`; it never claims non-confluence.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::compose::{compose_many, ComposeError, Scope};
use crate::model::{Automaton, ModelError, Transition};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("the composed system is not closed: no component produces {inputs:?}")]
    NotClosed { inputs: Vec<String> },
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Verdict of a confluence check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Confluent,
    NotConfluent,
    Inconclusive,
}

/// Which states are reachable along plausible paths: from an unstable
/// state (an urgent output is enabled) only urgent transitions extend a
/// plausible path, because the urgent output preempts everything that
/// would have to wait on a clock.
pub fn potentially_reachable(a: &Automaton) -> Vec<bool> {
    let mut reach = vec![false; a.state_count()];
    reach[a.initial()] = true;
    let mut queue = VecDeque::from([a.initial()]);
    while let Some(s) = queue.pop_front() {
        let stable = a.is_stable_idx(s);
        for &ti in a.outgoing(s) {
            let t = &a.transitions()[ti];
            if (stable || a.label(t.label).urgent) && !reach[t.target] {
                reach[t.target] = true;
                queue.push_back(t.target);
            }
        }
    }
    reach
}

/// Two urgent transitions from one state whose orders do not provably
/// converge.
#[derive(Debug, Clone, Serialize)]
pub struct DirectWitness {
    pub state: String,
    pub pair: (String, String),
    pub left: String,
    pub right: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectReport {
    pub automaton: String,
    pub status: Status,
    pub checked_states: usize,
    pub witnesses: Vec<DirectWitness>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DirectOptions {
    /// Skip states that no plausible path reaches.
    pub potentially_reachable_only: bool,
}

/// States `t.target` can reach by one transition carrying `label` and
/// exactly `resets`.
fn closing_targets(a: &Automaton, from: usize, label: usize, resets: &crate::model::IdSet) -> BTreeSet<usize> {
    a.outgoing(from)
        .iter()
        .filter_map(|&ti| {
            let t = &a.transitions()[ti];
            (t.label == label && t.resets == *resets).then_some(t.target)
        })
        .collect()
}

/// Check whether the two urgent transitions commute: each side must be
/// able to take the other's action, with the other's reset set, and both
/// orders must meet in one common state.
fn closing_failure(a: &Automaton, t1: &Transition, t2: &Transition) -> Option<String> {
    let via_left = closing_targets(a, t1.target, t2.label, &t2.resets);
    let via_right = closing_targets(a, t2.target, t1.label, &t1.resets);
    if via_left.intersection(&via_right).next().is_some() {
        return None;
    }
    let l1 = a.label(t1.label).display();
    let l2 = a.label(t2.label).display();
    Some(if via_left.is_empty() {
        format!(
            "`{}` cannot follow with `{}` and resets {:?} from `{}`",
            l1,
            l2,
            a.clock_name_set(&t2.resets),
            a.state_name(t1.target)
        )
    } else if via_right.is_empty() {
        format!(
            "`{}` cannot follow with `{}` and resets {:?} from `{}`",
            l2,
            l1,
            a.clock_name_set(&t1.resets),
            a.state_name(t2.target)
        )
    } else {
        format!(
            "the two orders land in disjoint state sets {:?} and {:?}",
            via_left.iter().map(|&s| a.state_name(s)).collect::<Vec<_>>(),
            via_right.iter().map(|&s| a.state_name(s)).collect::<Vec<_>>(),
        )
    })
}

/// Check every pair of distinct urgent transitions at every state (or
/// only the potentially reachable ones).
pub fn check_confluence_direct(a: &Automaton, opts: &DirectOptions) -> DirectReport {
    let reach = potentially_reachable(a);
    let mut witnesses = Vec::new();
    let mut checked = 0usize;
    for s in 0..a.state_count() {
        if opts.potentially_reachable_only && !reach[s] {
            continue;
        }
        checked += 1;
        let urgent: Vec<&Transition> = a
            .outgoing(s)
            .iter()
            .map(|&ti| &a.transitions()[ti])
            .filter(|t| a.label(t.label).urgent)
            .collect();
        for i in 0..urgent.len() {
            for j in i + 1..urgent.len() {
                if let Some(reason) = closing_failure(a, urgent[i], urgent[j]) {
                    let (mut x, mut y) = (urgent[i], urgent[j]);
                    if a.label(x.label).name > a.label(y.label).name {
                        std::mem::swap(&mut x, &mut y);
                    }
                    witnesses.push(DirectWitness {
                        state: a.state_name(s).to_string(),
                        pair: (
                            a.label(x.label).name.clone(),
                            a.label(y.label).name.clone(),
                        ),
                        left: a.transition_display(x),
                        right: a.transition_display(y),
                        reason,
                    });
                }
            }
        }
    }
    DirectReport {
        automaton: a.name().to_string(),
        status: if witnesses.is_empty() {
            Status::Confluent
        } else {
            Status::NotConfluent
        },
        checked_states: checked,
        witnesses,
    }
}

/// Within one component, can the automaton diverge on the given pair of
/// urgent actions? Returns the first failing state with its transitions.
fn component_divergence(
    a: &Automaton,
    left: &str,
    right: &str,
) -> Option<(String, String, String)> {
    let l = a.label_index(left).ok()?;
    let r = a.label_index(right).ok()?;
    for s in 0..a.state_count() {
        let of = |lbl: usize| -> Vec<&Transition> {
            a.outgoing(s)
                .iter()
                .map(|&ti| &a.transitions()[ti])
                .filter(|t| t.label == lbl)
                .collect()
        };
        for t1 in of(l) {
            for t2 in of(r) {
                if std::ptr::eq(t1, t2) {
                    continue;
                }
                if closing_failure(a, t1, t2).is_some() {
                    return Some((
                        a.state_name(s).to_string(),
                        a.transition_display(t1),
                        a.transition_display(t2),
                    ));
                }
            }
        }
    }
    None
}

/// Sets of urgent outputs a component can have pending right after each
/// of its non-urgent actions, keyed by action name. Only transitions
/// along plausible paths from stable states count; candidate sets are
/// kept subset-maximal, and an action that never enables anything maps
/// to the family containing only the empty set.
pub fn spontaneously_enabled_sets(
    a: &Automaton,
) -> BTreeMap<String, BTreeSet<BTreeSet<String>>> {
    let reach = potentially_reachable(a);
    let outputs: BTreeSet<usize> = (0..a.labels().len())
        .filter(|&l| a.label(l).is_output())
        .collect();
    let mut out: BTreeMap<String, BTreeSet<BTreeSet<String>>> = BTreeMap::new();
    for (l, label) in a.labels().iter().enumerate() {
        if label.urgent {
            continue;
        }
        let mut candidates: BTreeSet<BTreeSet<String>> = BTreeSet::new();
        for t in a.transitions() {
            if t.label != l || !reach[t.source] || !reach[t.target] {
                continue;
            }
            if !a.is_stable_idx(t.source) {
                continue;
            }
            let set: BTreeSet<String> = a
                .uen_idx(t.target)
                .intersection(&outputs)
                .map(|&u| a.label(u).name.clone())
                .collect();
            candidates.insert(set);
        }
        let maximal: BTreeSet<BTreeSet<String>> = candidates
            .iter()
            .filter(|c| !candidates.iter().any(|d| *c != d && c.is_subset(d)))
            .cloned()
            .collect();
        out.insert(
            label.name.clone(),
            if maximal.is_empty() {
                BTreeSet::from([BTreeSet::new()])
            } else {
                maximal
            },
        );
    }
    out
}

/// Urgent outputs already pending at the initial state.
pub fn initial_set(a: &Automaton) -> BTreeSet<String> {
    a.uen_idx(a.initial())
        .into_iter()
        .filter(|&l| a.label(l).is_output())
        .map(|l| a.label(l).name.clone())
        .collect()
}

/// Pairs (a, b) where taking urgent `a` can newly enable urgent output
/// `b`: two consecutive urgent transitions along plausible paths, with
/// `b` not already enabled before `a` fired (unless a = b).
pub fn trigger_relation(a: &Automaton) -> BTreeSet<(String, String)> {
    let reach = potentially_reachable(a);
    let mut out = BTreeSet::new();
    for t1 in a.transitions() {
        if !a.label(t1.label).urgent || !reach[t1.source] || !reach[t1.target] {
            continue;
        }
        let already = a.uen_idx(t1.source);
        for &tj in a.outgoing(t1.target) {
            let t2 = &a.transitions()[tj];
            let l2 = a.label(t2.label);
            if !l2.urgent || !l2.is_output() || !reach[t2.target] {
                continue;
            }
            if t1.label != t2.label && already.contains(&t2.label) {
                continue;
            }
            out.insert((a.label(t1.label).name.clone(), l2.name.clone()));
        }
    }
    out
}

/// The union trigger relation of a set of components, with reachability
/// queries over its reflexive-transitive closure.
#[derive(Debug, Clone, Serialize)]
pub struct TriggerClosure {
    pub domain: BTreeSet<String>,
    pub relation: BTreeSet<(String, String)>,
}

impl TriggerClosure {
    pub fn of_components(components: &[Automaton], domain: BTreeSet<String>) -> TriggerClosure {
        let relation = components.iter().flat_map(trigger_relation).collect();
        TriggerClosure { domain, relation }
    }

    /// All `c` with `c ↝* a`, including `a` itself.
    pub fn ancestors_of(&self, a: &str) -> BTreeSet<String> {
        let mut seen: BTreeSet<String> = BTreeSet::from([a.to_string()]);
        let mut queue: VecDeque<String> = VecDeque::from([a.to_string()]);
        while let Some(cur) = queue.pop_front() {
            for (from, to) in &self.relation {
                if *to == cur && !seen.contains(from) {
                    seen.insert(from.clone());
                    queue.push_back(from.clone());
                }
            }
        }
        seen
    }

    /// A shortest chain `c ↝ … ↝ a`, as the action sequence including
    /// both ends; `[a]` when c = a.
    pub fn path(&self, c: &str, a: &str) -> Option<Vec<String>> {
        if c == a {
            return Some(vec![a.to_string()]);
        }
        let mut prev: BTreeMap<String, String> = BTreeMap::new();
        let mut queue: VecDeque<String> = VecDeque::from([c.to_string()]);
        while let Some(cur) = queue.pop_front() {
            for (from, to) in &self.relation {
                if *from == cur && !prev.contains_key(to) && *to != *c {
                    prev.insert(to.clone(), cur.clone());
                    if to == a {
                        let mut chain = vec![a.to_string()];
                        let mut at = a.to_string();
                        while let Some(p) = prev.get(&at) {
                            chain.push(p.clone());
                            at = p.clone();
                        }
                        chain.reverse();
                        return Some(chain);
                    }
                    queue.push_back(to.clone());
                }
            }
        }
        None
    }
}

/// Why a vertex is in the enabled graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VertexCause {
    /// Pending at the very start of the system.
    Initial,
    /// Spontaneously enabled right after the named non-urgent action.
    SpontaneousBy(String),
    /// Reached by firing an urgent action from another vertex.
    Fired { from: usize, action: String },
}

impl VertexCause {
    pub fn describe(&self) -> String {
        match self {
            VertexCause::Initial => "pending at the initial state".to_string(),
            VertexCause::SpontaneousBy(a) => format!("spontaneously enabled by `{a}`"),
            VertexCause::Fired { from, action } => {
                format!("after firing `{action}` from vertex {from}")
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Vertex {
    pub actions: BTreeSet<String>,
    pub layer: usize,
    pub cause: VertexCause,
}

/// Overapproximation of the sets of urgent outputs that can be pending
/// together in the composed system. Layer 0 holds the initial vertex and
/// one vertex per combination of spontaneous sets of each non-urgent
/// action; firing an urgent action from a vertex removes it and adds
/// everything it triggers, until no new vertex appears.
#[derive(Debug, Clone, Serialize)]
pub struct EnabledGraph {
    pub vertices: Vec<Vertex>,
    /// (source vertex, fired action, target vertex)
    pub edges: Vec<(usize, String, usize)>,
}

impl EnabledGraph {
    pub fn find(&self, actions: &BTreeSet<String>) -> Option<usize> {
        self.vertices.iter().position(|v| v.actions == *actions)
    }

    /// Is `set` covered by some vertex? This is the guarantee the graph
    /// gives about reachable enabled sets.
    pub fn contains_superset(&self, set: &BTreeSet<String>) -> bool {
        self.vertices.iter().any(|v| set.is_subset(&v.actions))
    }

    pub fn layer0(&self) -> impl Iterator<Item = (usize, &Vertex)> {
        self.vertices
            .iter()
            .enumerate()
            .filter(|(_, v)| v.layer == 0)
    }
}

/// Non-urgent action names across all components. The composed automaton
/// cannot be consulted for this: actions that never make it onto a
/// reachable composed transition still shape what can be enabled.
fn non_urgent_actions(components: &[Automaton]) -> BTreeSet<String> {
    components
        .iter()
        .flat_map(|c| c.labels())
        .filter(|l| !l.urgent)
        .map(|l| l.name.clone())
        .collect()
}

/// Build the enabled graph of a composition from its components.
pub fn enabled_graph(components: &[Automaton], closure: &TriggerClosure) -> EnabledGraph {
    let mut vertices: Vec<Vertex> = Vec::new();
    let push = |actions: BTreeSet<String>, layer: usize, cause: VertexCause,
                    vertices: &mut Vec<Vertex>| {
        if !vertices.iter().any(|v| v.actions == actions) {
            vertices.push(Vertex {
                actions,
                layer,
                cause,
            });
        }
    };

    let initial: BTreeSet<String> = components.iter().flat_map(initial_set).collect();
    push(initial, 0, VertexCause::Initial, &mut vertices);

    let families: Vec<BTreeMap<String, BTreeSet<BTreeSet<String>>>> =
        components.iter().map(spontaneously_enabled_sets).collect();
    let empty_family = BTreeSet::from([BTreeSet::new()]);
    for name in non_urgent_actions(components) {
        // One vertex per choice of spontaneous set in each component;
        // components that do not know the action contribute nothing.
        let choices: Vec<&BTreeSet<BTreeSet<String>>> = families
            .iter()
            .map(|f| f.get(&name).unwrap_or(&empty_family))
            .collect();
        let mut unions: Vec<BTreeSet<String>> = vec![BTreeSet::new()];
        for family in choices {
            let mut next = Vec::new();
            for partial in &unions {
                for choice in family {
                    let mut u = partial.clone();
                    u.extend(choice.iter().cloned());
                    next.push(u);
                }
            }
            unions = next;
        }
        for u in unions {
            push(u, 0, VertexCause::SpontaneousBy(name.clone()), &mut vertices);
        }
    }

    // Saturate: fire each pending action, replacing it by its triggers.
    let mut edges = Vec::new();
    let mut cursor = 0;
    while cursor < vertices.len() {
        let (actions, layer) = (vertices[cursor].actions.clone(), vertices[cursor].layer);
        for a in &actions {
            let mut target: BTreeSet<String> =
                actions.iter().filter(|x| *x != a).cloned().collect();
            target.extend(
                closure
                    .relation
                    .iter()
                    .filter(|(from, _)| from == a)
                    .map(|(_, to)| to.clone()),
            );
            let idx = match vertices.iter().position(|v| v.actions == target) {
                Some(i) => i,
                None => {
                    vertices.push(Vertex {
                        actions: target,
                        layer: layer + 1,
                        cause: VertexCause::Fired {
                            from: cursor,
                            action: a.clone(),
                        },
                    });
                    vertices.len() - 1
                }
            };
            edges.push((cursor, a.clone(), idx));
        }
        cursor += 1;
    }

    EnabledGraph { vertices, edges }
}

/// One reason the compositional check cannot certify confluence: a
/// component that can diverge on the pair, and a layer-0 vertex showing
/// how ancestors of both actions can be pending together.
#[derive(Debug, Clone, Serialize)]
pub struct CompositionalWitness {
    pub pair: (String, String),
    pub component: String,
    pub state: String,
    pub left: String,
    pub right: String,
    pub vertex: BTreeSet<String>,
    pub vertex_cause: String,
    pub chain_left: Vec<String>,
    pub chain_right: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompositionalReport {
    pub status: Status,
    pub components: Vec<String>,
    pub composed_states: usize,
    pub composed_transitions: usize,
    pub urgent_actions: BTreeSet<String>,
    pub initial_vertex: BTreeSet<String>,
    pub trigger_relation: BTreeSet<(String, String)>,
    pub vertices: Vec<Vertex>,
    pub witnesses: Vec<CompositionalWitness>,
}

/// The compositional confluence check. Works on a closed system only;
/// answers `Confluent` or `Inconclusive`, never `NotConfluent`: a pair of
/// urgent actions is only suspect when some single component can diverge
/// on it *and* the enabled graph shows ancestors of both actions pending
/// together in some layer-0 vertex.
pub fn check_compositional(components: &[Automaton]) -> Result<CompositionalReport, AnalysisError> {
    let comp = compose_many(components, Scope::Reachable)?;
    let composed = &comp.automaton;

    // Closedness of the composition is an alphabet property: every input
    // must be matched by an output somewhere. The composed automaton's
    // own label table only lists actions that occur on reachable
    // transitions, which says nothing when the system deadlocks early.
    let outputs: BTreeSet<&str> = components
        .iter()
        .flat_map(|c| c.outputs())
        .map(|l| l.name.as_str())
        .collect();
    let unmatched: Vec<String> = components
        .iter()
        .flat_map(|c| c.inputs())
        .map(|l| l.name.clone())
        .filter(|n| !outputs.contains(n.as_str()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if !unmatched.is_empty() {
        return Err(AnalysisError::NotClosed { inputs: unmatched });
    }

    let urgent: BTreeSet<String> = components
        .iter()
        .flat_map(|c| c.labels())
        .filter(|l| l.urgent)
        .map(|l| l.name.clone())
        .collect();
    let closure = TriggerClosure::of_components(components, urgent.clone());
    let graph = enabled_graph(components, &closure);

    let mut witnesses = Vec::new();
    for a in &urgent {
        for b in urgent.iter().filter(|b| *b >= a) {
            let divergence = components
                .iter()
                .find_map(|c| component_divergence(c, a, b).map(|d| (c.name().to_string(), d)));
            let Some((component, (state, left, right))) = divergence else {
                continue;
            };
            let anc_a = closure.ancestors_of(a);
            let anc_b = closure.ancestors_of(b);
            for (_, v) in graph.layer0() {
                let ca = anc_a.intersection(&v.actions).next();
                let cb = anc_b.intersection(&v.actions).next();
                let (Some(ca), Some(cb)) = (ca, cb) else {
                    continue;
                };
                witnesses.push(CompositionalWitness {
                    pair: (a.clone(), b.clone()),
                    component: component.clone(),
                    state: state.clone(),
                    left: left.clone(),
                    right: right.clone(),
                    vertex: v.actions.clone(),
                    vertex_cause: v.cause.describe(),
                    chain_left: closure.path(ca, a).unwrap_or_default(),
                    chain_right: closure.path(cb, b).unwrap_or_default(),
                });
                break;
            }
        }
    }

    Ok(CompositionalReport {
        status: if witnesses.is_empty() {
            Status::Confluent
        } else {
            Status::Inconclusive
        },
        components: components.iter().map(|c| c.name().to_string()).collect(),
        composed_states: composed.state_count(),
        composed_transitions: composed.transitions().len(),
        urgent_actions: urgent,
        initial_vertex: components.iter().flat_map(initial_set).collect(),
        trigger_relation: closure.relation.clone(),
        vertices: graph.vertices,
        witnesses,
    })
}
