//! Core automaton types: labels, clocks, transitions, and the state
//! predicates everything else is built on.
//!
//! States, clocks, and actions are interned to dense indices at
//! construction time (clocks in lexicographic order, which is also the
//! tie-break order the simulator uses); external names stay strings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Index set over one of an automaton's interned tables.
pub type IdSet = BTreeSet<usize>;

/// Name of the distinguished silent action: always an urgent output,
/// never synchronized.
pub const TAU: &str = "tau";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("automaton {automaton}: unknown state `{state}`")]
    UnknownState { automaton: String, state: String },
    #[error("automaton {automaton}: unknown clock `{clock}`")]
    UnknownClock { automaton: String, clock: String },
    #[error("automaton {automaton}: unknown action `{action}`")]
    UnknownAction { automaton: String, action: String },
    #[error(
        "automaton {automaton}: action `{action}` already used as {existing}, now used as {new}"
    )]
    ActionConflict {
        automaton: String,
        action: String,
        existing: String,
        new: String,
    },
    #[error("automaton {automaton}: `{TAU}` must be an urgent output (written `{TAU}!!`)")]
    TauMisuse { automaton: String },
    #[error("automaton {automaton}: no initial state")]
    NoInitial { automaton: String },
    #[error("clock {clock}: {reason}")]
    InvalidDistribution { clock: String, reason: String },
    #[error("automaton {automaton}: duplicate clock `{clock}`")]
    DuplicateClock { automaton: String, clock: String },
    #[error("system line names unknown automaton `{name}`")]
    UnknownComponent { name: String },
    #[error("no `system = ...;` line and the file declares {count} automata")]
    NoSystem { count: usize },
    #[error("automaton {automaton}: not expressible in model syntax: {detail}")]
    Unserializable { automaton: String, detail: String },
}

/// Direction of an action, from the owning automaton's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Kind {
    Input,
    Output,
}

/// An action label: name, direction, urgency.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Label {
    pub name: String,
    pub kind: Kind,
    pub urgent: bool,
}

impl Label {
    pub fn is_tau(&self) -> bool {
        self.name == TAU
    }

    pub fn is_output(&self) -> bool {
        self.kind == Kind::Output
    }

    pub fn is_input(&self) -> bool {
        self.kind == Kind::Input
    }

    /// Concrete-syntax suffix: `!`, `!!`, `?`, or `??`.
    pub fn suffix(&self) -> &'static str {
        match (self.kind, self.urgent) {
            (Kind::Output, false) => "!",
            (Kind::Output, true) => "!!",
            (Kind::Input, false) => "?",
            (Kind::Input, true) => "??",
        }
    }

    /// How the label reads in describing text, e.g. `c!!`.
    pub fn display(&self) -> String {
        format!("{}{}", self.name, self.suffix())
    }
}

/// Sampling distribution of a clock. All supported families have
/// continuous support contained in (0, ∞).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Distribution {
    Exponential { rate: f64 },
    Uniform { lo: f64, hi: f64 },
    Weibull { shape: f64, scale: f64 },
    LogNormal { mu: f64, sigma: f64 },
    Erlang { k: u32, rate: f64 },
}

impl Distribution {
    pub fn validate(&self, clock: &str) -> Result<(), ModelError> {
        let fail = |reason: String| ModelError::InvalidDistribution {
            clock: clock.to_string(),
            reason,
        };
        match *self {
            Distribution::Exponential { rate } => {
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err(fail(format!("exponential rate must be > 0, got {rate}")));
                }
            }
            Distribution::Uniform { lo, hi } => {
                if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
                    return Err(fail(format!(
                        "uniform bounds must satisfy 0 <= lo < hi, got ({lo}, {hi})"
                    )));
                }
            }
            Distribution::Weibull { shape, scale } => {
                if !(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()) {
                    return Err(fail(format!(
                        "weibull shape and scale must be > 0, got ({shape}, {scale})"
                    )));
                }
            }
            Distribution::LogNormal { mu, sigma } => {
                if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
                    return Err(fail(format!(
                        "lognormal needs finite mu and sigma > 0, got ({mu}, {sigma})"
                    )));
                }
            }
            Distribution::Erlang { k, rate } => {
                if k < 1 {
                    return Err(fail("erlang needs k >= 1".to_string()));
                }
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err(fail(format!("erlang rate must be > 0, got {rate}")));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Exponential { rate } => write!(f, "exponential({rate})"),
            Distribution::Uniform { lo, hi } => write!(f, "uniform({lo}, {hi})"),
            Distribution::Weibull { shape, scale } => write!(f, "weibull({shape}, {scale})"),
            Distribution::LogNormal { mu, sigma } => write!(f, "lognormal({mu}, {sigma})"),
            Distribution::Erlang { k, rate } => write!(f, "erlang({k}, {rate})"),
        }
    }
}

/// A clock together with the distribution it is resampled from.
#[derive(Debug, Clone, PartialEq)]
pub struct ClockDecl {
    pub id: String,
    pub distribution: Distribution,
}

/// One transition: source --(trigger, label, resets)--> target.
/// Index fields refer to the owning automaton's tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub source: usize,
    pub trigger: IdSet,
    pub label: usize,
    pub resets: IdSet,
    pub target: usize,
}

/// An input/output stochastic automaton with urgency.
#[derive(Debug, Clone)]
pub struct Automaton {
    name: String,
    states: Vec<String>,
    clocks: Vec<ClockDecl>,
    labels: Vec<Label>,
    transitions: Vec<Transition>,
    outgoing: Vec<Vec<usize>>,
    initial: usize,
    initial_clocks: IdSet,
    complete_inputs: bool,
}

impl Automaton {
    pub fn builder(name: &str) -> AutomatonBuilder {
        AutomatonBuilder::new(name)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn state_name(&self, idx: usize) -> &str {
        &self.states[idx]
    }

    pub fn state_index(&self, name: &str) -> Result<usize, ModelError> {
        self.states
            .binary_search_by(|s| s.as_str().cmp(name))
            .map_err(|_| ModelError::UnknownState {
                automaton: self.name.clone(),
                state: name.to_string(),
            })
    }

    pub fn clocks(&self) -> &[ClockDecl] {
        &self.clocks
    }

    pub fn clock_name(&self, idx: usize) -> &str {
        &self.clocks[idx].id
    }

    pub fn clock_index(&self, id: &str) -> Result<usize, ModelError> {
        self.clocks
            .binary_search_by(|c| c.id.as_str().cmp(id))
            .map_err(|_| ModelError::UnknownClock {
                automaton: self.name.clone(),
                clock: id.to_string(),
            })
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label(&self, idx: usize) -> &Label {
        &self.labels[idx]
    }

    pub fn label_index(&self, name: &str) -> Result<usize, ModelError> {
        self.labels
            .binary_search_by(|l| l.name.as_str().cmp(name))
            .map_err(|_| ModelError::UnknownAction {
                automaton: self.name.clone(),
                action: name.to_string(),
            })
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Indices of transitions leaving `state`, in declaration order.
    pub fn outgoing(&self, state: usize) -> &[usize] {
        &self.outgoing[state]
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn initial_name(&self) -> &str {
        &self.states[self.initial]
    }

    pub fn initial_clocks(&self) -> &IdSet {
        &self.initial_clocks
    }

    /// Whether the source asked for input self-loops to be synthesized.
    pub fn complete_inputs_requested(&self) -> bool {
        self.complete_inputs
    }

    /// Clocks that trigger output transitions from `state`.
    pub fn enabling_idx(&self, state: usize) -> IdSet {
        let mut out = IdSet::new();
        for &t in &self.outgoing[state] {
            let tr = &self.transitions[t];
            if self.labels[tr.label].is_output() {
                out.extend(tr.trigger.iter().copied());
            }
        }
        out
    }

    /// A state is stable when no urgent *output* leaves it; urgent inputs
    /// do not disturb stability.
    pub fn is_stable_idx(&self, state: usize) -> bool {
        !self.outgoing[state].iter().any(|&t| {
            let l = &self.labels[self.transitions[t].label];
            l.urgent && l.is_output()
        })
    }

    /// Urgent actions (inputs and outputs) enabled at `state`, as label
    /// indices.
    pub fn uen_idx(&self, state: usize) -> BTreeSet<usize> {
        self.outgoing[state]
            .iter()
            .map(|&t| self.transitions[t].label)
            .filter(|&l| self.labels[l].urgent)
            .collect()
    }

    pub fn enabling(&self, state: &str) -> Result<BTreeSet<String>, ModelError> {
        let s = self.state_index(state)?;
        Ok(self.clock_name_set(&self.enabling_idx(s)))
    }

    pub fn is_stable(&self, state: &str) -> Result<bool, ModelError> {
        Ok(self.is_stable_idx(self.state_index(state)?))
    }

    pub fn uen(&self, state: &str) -> Result<BTreeSet<String>, ModelError> {
        let s = self.state_index(state)?;
        Ok(self
            .uen_idx(s)
            .into_iter()
            .map(|l| self.labels[l].name.clone())
            .collect())
    }

    /// Render a clock index set with external names.
    pub fn clock_name_set(&self, set: &IdSet) -> BTreeSet<String> {
        set.iter().map(|&c| self.clocks[c].id.clone()).collect()
    }

    pub fn inputs(&self) -> impl Iterator<Item = &Label> {
        self.labels.iter().filter(|l| l.is_input())
    }

    pub fn outputs(&self) -> impl Iterator<Item = &Label> {
        self.labels.iter().filter(|l| l.is_output())
    }

    /// Closed means no input actions remain.
    pub fn is_closed(&self) -> bool {
        self.inputs().next().is_none()
    }

    /// Structural equality up to transition order (states, clocks, and
    /// labels are already canonically ordered).
    pub fn canonical_eq(&self, other: &Automaton) -> bool {
        let key = |a: &Automaton| {
            a.transitions
                .iter()
                .map(|t| {
                    (
                        t.source,
                        t.label,
                        t.trigger.clone(),
                        t.resets.clone(),
                        t.target,
                    )
                })
                .collect::<BTreeSet<_>>()
        };
        self.name == other.name
            && self.states == other.states
            && self.clocks == other.clocks
            && self.labels == other.labels
            && self.initial == other.initial
            && self.initial_clocks == other.initial_clocks
            && key(self) == key(other)
    }

    /// A copy of this automaton with extra transitions appended (already
    /// expressed over this automaton's index tables). Exact duplicates of
    /// existing transitions are dropped.
    pub(crate) fn with_added_transitions(&self, extra: Vec<Transition>) -> Automaton {
        let mut out = self.clone();
        for t in extra {
            debug_assert!(t.source < out.states.len() && t.target < out.states.len());
            if !out.transitions.contains(&t) {
                out.outgoing[t.source].push(out.transitions.len());
                out.transitions.push(t);
            }
        }
        out
    }

    /// Pretty form of one transition, e.g. `s0 --{x}, a!, {}--> s1`.
    pub fn transition_display(&self, t: &Transition) -> String {
        let set = |s: &IdSet| {
            let names: Vec<&str> = s.iter().map(|&c| self.clocks[c].id.as_str()).collect();
            format!("{{{}}}", names.join(", "))
        };
        format!(
            "{} --{}, {}, {}--> {}",
            self.states[t.source],
            set(&t.trigger),
            self.labels[t.label].display(),
            set(&t.resets),
            self.states[t.target],
        )
    }
}

/// Remaining-time valuation over an automaton's clocks, indexed in clock
/// order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Valuation(pub Vec<f64>);

#[derive(Debug)]
struct RawTransition {
    source: String,
    trigger: Vec<String>,
    action: String,
    resets: Vec<String>,
    target: String,
}

/// Accumulates model parts by name and interns them on `build`.
#[derive(Debug)]
pub struct AutomatonBuilder {
    name: String,
    clocks: BTreeMap<String, Distribution>,
    labels: BTreeMap<String, (Kind, bool)>,
    transitions: Vec<RawTransition>,
    extra_states: Vec<String>,
    initial: Option<(String, Vec<String>)>,
    complete_inputs: bool,
}

impl AutomatonBuilder {
    pub fn new(name: &str) -> Self {
        AutomatonBuilder {
            name: name.to_string(),
            clocks: BTreeMap::new(),
            labels: BTreeMap::new(),
            transitions: Vec::new(),
            extra_states: Vec::new(),
            initial: None,
            complete_inputs: false,
        }
    }

    /// Register a state that may end up with no transitions at all, such
    /// as an unreachable corner of a full product. The concrete syntax
    /// cannot express these, so they are lost on serialization.
    pub fn state(mut self, name: &str) -> Self {
        self.extra_states.push(name.to_string());
        self
    }

    pub fn clock(mut self, id: &str, distribution: Distribution) -> Result<Self, ModelError> {
        distribution.validate(id)?;
        if self
            .clocks
            .insert(id.to_string(), distribution)
            .is_some()
        {
            return Err(ModelError::DuplicateClock {
                automaton: self.name,
                clock: id.to_string(),
            });
        }
        Ok(self)
    }

    /// Register an action use. Direction and urgency are fixed at first
    /// use; later conflicting uses are errors.
    pub fn action(&mut self, name: &str, kind: Kind, urgent: bool) -> Result<(), ModelError> {
        if name == TAU && (kind != Kind::Output || !urgent) {
            return Err(ModelError::TauMisuse {
                automaton: self.name.clone(),
            });
        }
        match self.labels.get(name) {
            None => {
                self.labels.insert(name.to_string(), (kind, urgent));
                Ok(())
            }
            Some(&(k, u)) if k == kind && u == urgent => Ok(()),
            Some(&(k, u)) => Err(ModelError::ActionConflict {
                automaton: self.name.clone(),
                action: name.to_string(),
                existing: Label {
                    name: name.to_string(),
                    kind: k,
                    urgent: u,
                }
                .display(),
                new: Label {
                    name: name.to_string(),
                    kind,
                    urgent,
                }
                .display(),
            }),
        }
    }

    pub fn transition(
        mut self,
        source: &str,
        trigger: &[&str],
        action: (&str, Kind, bool),
        resets: &[&str],
        target: &str,
    ) -> Result<Self, ModelError> {
        let (name, kind, urgent) = action;
        self.action(name, kind, urgent)?;
        self.transitions.push(RawTransition {
            source: source.to_string(),
            trigger: trigger.iter().map(|s| s.to_string()).collect(),
            action: name.to_string(),
            resets: resets.iter().map(|s| s.to_string()).collect(),
            target: target.to_string(),
        });
        Ok(self)
    }

    pub fn initial(mut self, state: &str, clocks: &[&str]) -> Self {
        self.initial = Some((
            state.to_string(),
            clocks.iter().map(|s| s.to_string()).collect(),
        ));
        self
    }

    pub fn complete_inputs(mut self, on: bool) -> Self {
        self.complete_inputs = on;
        self
    }

    pub fn build(self) -> Result<Automaton, ModelError> {
        let name = self.name;
        let (init_state, init_clocks) = self.initial.ok_or(ModelError::NoInitial {
            automaton: name.clone(),
        })?;

        // Every state exists by being initial or mentioned in a transition;
        // there is no other way to declare one (see the serializer notes).
        let mut state_names: BTreeSet<String> = BTreeSet::new();
        state_names.insert(init_state.clone());
        state_names.extend(self.extra_states.iter().cloned());
        for t in &self.transitions {
            state_names.insert(t.source.clone());
            state_names.insert(t.target.clone());
        }
        let states: Vec<String> = state_names.into_iter().collect();

        let clocks: Vec<ClockDecl> = self
            .clocks
            .into_iter()
            .map(|(id, distribution)| ClockDecl { id, distribution })
            .collect();
        let labels: Vec<Label> = self
            .labels
            .into_iter()
            .map(|(n, (kind, urgent))| Label {
                name: n,
                kind,
                urgent,
            })
            .collect();

        let state_idx = |n: &str| -> Result<usize, ModelError> {
            states
                .binary_search_by(|s| s.as_str().cmp(n))
                .map_err(|_| ModelError::UnknownState {
                    automaton: name.clone(),
                    state: n.to_string(),
                })
        };
        let clock_idx = |n: &str| -> Result<usize, ModelError> {
            clocks
                .binary_search_by(|c| c.id.as_str().cmp(n))
                .map_err(|_| ModelError::UnknownClock {
                    automaton: name.clone(),
                    clock: n.to_string(),
                })
        };
        let label_idx = |n: &str| -> usize {
            labels
                .binary_search_by(|l| l.name.as_str().cmp(n))
                .expect("label registered in action()")
        };

        let mut transitions = Vec::with_capacity(self.transitions.len());
        for raw in &self.transitions {
            let t = Transition {
                source: state_idx(&raw.source)?,
                trigger: raw
                    .trigger
                    .iter()
                    .map(|c| clock_idx(c))
                    .collect::<Result<_, _>>()?,
                label: label_idx(&raw.action),
                resets: raw
                    .resets
                    .iter()
                    .map(|c| clock_idx(c))
                    .collect::<Result<_, _>>()?,
                target: state_idx(&raw.target)?,
            };
            // Exact duplicates add nothing; keep the first occurrence so
            // declaration order stays meaningful.
            if !transitions.contains(&t) {
                transitions.push(t);
            }
        }

        let initial = state_idx(&init_state)?;
        let initial_clocks: IdSet = init_clocks
            .iter()
            .map(|c| clock_idx(c))
            .collect::<Result<_, _>>()?;

        let mut outgoing = vec![Vec::new(); states.len()];
        for (i, t) in transitions.iter().enumerate() {
            outgoing[t.source].push(i);
        }

        Ok(Automaton {
            name,
            states,
            clocks,
            labels,
            transitions,
            outgoing,
            initial,
            initial_clocks,
            complete_inputs: self.complete_inputs,
        })
    }
}
