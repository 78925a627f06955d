//! Discrete-event simulation of closed systems, with confidence-interval
//! estimates for the measurement queries.
//!
//! Every clock carries an absolute expiry time. At a stable state the run
//! jumps to the earliest expiry among the enabling clocks and fires the
//! unique transition that clock triggers; at an unstable state one of the
//! pending urgent outputs fires without time passing. Which urgent output
//! goes first is left open by the model, so the simulator resolves it
//! with a configurable [`Policy`], and [`check_order_independence`]
//! compares two opposite policies to flag models whose estimates depend
//! on that choice.
//!
//! Replication `r` draws from stream `r` of a counter-based generator
//! seeded once per run, so results are reproducible bit-for-bit for a
//! given seed and policy regardless of how many worker threads execute
//! the replications.

pub mod estimate;
pub mod sample;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::compose::{compose_many, ComposeError, Composition, Scope};
use crate::model::{Automaton, ModelError};
use crate::parse::ModelFile;
use crate::query::{Predicate, Query, QueryKind};
use crate::wellformed::{check_structure, prepare_system, ActiveMap};
use estimate::{ks_statistic, Estimate};
use sample::sample;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("the system is not closed: no component produces {inputs:?}")]
    NotClosed { inputs: Vec<String> },
    #[error("component `{automaton}` is not well-formed: {message}")]
    IllFormed { automaton: String, message: String },
    #[error("query `{name}`: {reason}")]
    BadQuery { name: String, reason: String },
    #[error("invalid simulation options: {reason}")]
    InvalidOptions { reason: String },
    #[error("failed to build the worker pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How a pending set of urgent outputs is ordered when more than one is
/// ready. Estimates of confluent systems do not depend on this choice;
/// the policies exist so that claim can be tested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Least (action, target, declaration index) first.
    Sorted,
    /// Declaration order.
    Fifo,
    /// Greatest (action, target, declaration index) first.
    Reverse,
    /// Uniformly among the pending urgent outputs, consuming one draw.
    Random,
}

impl Policy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Policy::Sorted => "sorted",
            Policy::Fifo => "fifo",
            Policy::Reverse => "reverse",
            Policy::Random => "random",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Policy, String> {
        match s {
            "sorted" => Ok(Policy::Sorted),
            "fifo" => Ok(Policy::Fifo),
            "reverse" => Ok(Policy::Reverse),
            "random" => Ok(Policy::Random),
            other => Err(format!(
                "unknown policy `{other}`; expected sorted, fifo, reverse, or random"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub replications: usize,
    pub seed: u64,
    pub confidence: f64,
    pub policy: Policy,
    /// Worker threads; `None` uses the shared default pool.
    pub jobs: Option<usize>,
    /// Hard cap on events per replication, the guard against urgent
    /// cycles and queries that never resolve.
    pub max_events: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            replications: 10_000,
            seed: 1,
            confidence: 0.95,
            policy: Policy::Sorted,
            jobs: None,
            max_events: 1_000_000,
        }
    }
}

fn validate(opts: &SimOptions) -> Result<(), SimError> {
    let fail = |reason: String| Err(SimError::InvalidOptions { reason });
    if opts.replications == 0 {
        return fail("need at least one replication".to_string());
    }
    if !(opts.confidence > 0.0 && opts.confidence < 1.0) {
        return fail(format!(
            "confidence must lie strictly between 0 and 1, got {}",
            opts.confidence
        ));
    }
    if opts.max_events == 0 {
        return fail("the event budget must be positive".to_string());
    }
    Ok(())
}

/// A closed system prepared for execution: the composed automaton, an
/// active-clock map for the runtime monitor, and the component
/// projections that query predicates are evaluated against.
#[derive(Debug, Clone)]
pub struct SimSystem {
    automaton: Automaton,
    active: ActiveMap,
    components: Vec<Automaton>,
    projections: Vec<Vec<usize>>,
}

impl SimSystem {
    pub fn new(composition: &Composition) -> Result<SimSystem, SimError> {
        // Closedness is an alphabet property of the components: every
        // input must be matched by an output somewhere, or the run would
        // block on the environment.
        let outputs: BTreeSet<&str> = composition
            .components
            .iter()
            .flat_map(|c| c.outputs())
            .map(|l| l.name.as_str())
            .collect();
        let unmatched: Vec<String> = composition
            .components
            .iter()
            .flat_map(|c| c.inputs())
            .map(|l| l.name.clone())
            .filter(|n| !outputs.contains(n.as_str()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if !unmatched.is_empty() {
            return Err(SimError::NotClosed { inputs: unmatched });
        }

        // The execution loop leans on well-formedness (unique transition
        // per trigger clock, meaningful active sets), so refuse broken
        // components up front.
        for c in &composition.components {
            if let Some(v) = check_structure(c).first() {
                return Err(SimError::IllFormed {
                    automaton: c.name().to_string(),
                    message: v.message.clone(),
                });
            }
        }
        let active = composition.composed_active().map_err(|e| match e {
            ComposeError::IllFormed { automaton, message } => {
                SimError::IllFormed { automaton, message }
            }
            other => SimError::Compose(other),
        })?;

        Ok(SimSystem {
            automaton: composition.automaton.clone(),
            active,
            components: composition.components.clone(),
            projections: composition.projections.clone(),
        })
    }

    /// Prepare, compose, and wrap the system declared in a parsed model
    /// file.
    pub fn from_model(mf: &ModelFile) -> Result<SimSystem, SimError> {
        let components = prepare_system(mf)?;
        let composition = compose_many(&components, Scope::Reachable)?;
        SimSystem::new(&composition)
    }

    pub fn automaton(&self) -> &Automaton {
        &self.automaton
    }

    pub fn components(&self) -> &[Automaton] {
        &self.components
    }
}

/// Runtime invariant tallies: breaches of the timing discipline the
/// semantics guarantees, plus benign floating-point artifacts.
#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct MonitorSummary {
    /// Invariant evaluations performed.
    pub checks: u64,
    /// Genuine breaches: an active clock past its expiry, or time
    /// advancing across an urgent firing.
    pub hard_violations: u64,
    /// Two active clocks landing on the same floating-point expiry; the
    /// race semantics makes this a probability-zero event, so a handful
    /// in a long run is rounding, not a bug.
    pub float_collisions: u64,
    /// First few distinct messages, each tagged `hard:` or
    /// `float-collision:`.
    pub notes: Vec<String>,
}

impl MonitorSummary {
    const NOTE_CAP: usize = 8;

    fn hard(&mut self, msg: String) {
        self.hard_violations += 1;
        self.note(format!("hard: {msg}"));
    }

    fn collision(&mut self, msg: String) {
        self.float_collisions += 1;
        self.note(format!("float-collision: {msg}"));
    }

    fn note(&mut self, msg: String) {
        if self.notes.len() < Self::NOTE_CAP && !self.notes.contains(&msg) {
            self.notes.push(msg);
        }
    }

    fn merge(&mut self, other: &MonitorSummary) {
        self.checks += other.checks;
        self.hard_violations += other.hard_violations;
        self.float_collisions += other.float_collisions;
        for n in &other.notes {
            self.note(n.clone());
        }
    }
}

/// Compiled form of a query predicate: component-state tests resolved to
/// indices, evaluated against a composed state's projection row.
#[derive(Debug, Clone)]
enum Pred {
    At { component: usize, state: usize },
    Not(Box<Pred>),
    And(Box<Pred>, Box<Pred>),
    Or(Box<Pred>, Box<Pred>),
}

impl Pred {
    fn eval(&self, projection: &[usize]) -> bool {
        match self {
            Pred::At { component, state } => projection[*component] == *state,
            Pred::Not(p) => !p.eval(projection),
            Pred::And(a, b) => a.eval(projection) && b.eval(projection),
            Pred::Or(a, b) => a.eval(projection) || b.eval(projection),
        }
    }
}

fn compile_pred(p: &Predicate, components: &[Automaton]) -> Result<Pred, String> {
    match p {
        Predicate::At { automaton, state } => {
            let k = components
                .iter()
                .position(|c| c.name() == automaton)
                .ok_or_else(|| format!("predicate names unknown component `{automaton}`"))?;
            let s = components[k]
                .state_index(state)
                .map_err(|_| format!("component `{automaton}` has no state `{state}`"))?;
            Ok(Pred::At { component: k, state: s })
        }
        Predicate::Not(inner) => Ok(Pred::Not(Box::new(compile_pred(inner, components)?))),
        Predicate::And(a, b) => Ok(Pred::And(
            Box::new(compile_pred(a, components)?),
            Box::new(compile_pred(b, components)?),
        )),
        Predicate::Or(a, b) => Ok(Pred::Or(
            Box::new(compile_pred(a, components)?),
            Box::new(compile_pred(b, components)?),
        )),
    }
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Transient { horizon: f64 },
    Steady { horizon: f64, warmup: f64 },
    MeanTime,
}

#[derive(Debug, Clone)]
struct CompiledQuery {
    pred: Pred,
    shape: Shape,
}

fn compile_queries(sys: &SimSystem, queries: &[Query]) -> Result<Vec<CompiledQuery>, SimError> {
    queries
        .iter()
        .map(|q| {
            let bad = |reason: String| SimError::BadQuery {
                name: q.name.clone(),
                reason,
            };
            let pred = compile_pred(q.kind.predicate(), &sys.components).map_err(bad)?;
            let shape = match q.kind {
                QueryKind::TransientReach { horizon, .. } => {
                    if !(horizon > 0.0 && horizon.is_finite()) {
                        return Err(bad(format!(
                            "horizon must be positive and finite, got {horizon}"
                        )));
                    }
                    Shape::Transient { horizon }
                }
                QueryKind::SteadyFraction {
                    horizon, warmup, ..
                } => {
                    if !(horizon.is_finite() && warmup >= 0.0 && warmup < horizon) {
                        return Err(bad(format!(
                            "needs 0 <= warmup < horizon, got warmup {warmup} and horizon {horizon}"
                        )));
                    }
                    Shape::Steady { horizon, warmup }
                }
                QueryKind::MeanTimeTo { .. } => Shape::MeanTime,
            };
            Ok(CompiledQuery { pred, shape })
        })
        .collect()
}

struct Firing {
    transition: usize,
    urgent: bool,
}

/// One in-flight replication.
struct Run<'a> {
    sys: &'a SimSystem,
    state: usize,
    elapsed: f64,
    /// Absolute expiry time per clock, meaningful while the clock is
    /// active.
    expiry: Vec<f64>,
    rng: ChaCha12Rng,
    policy: Policy,
}

impl<'a> Run<'a> {
    fn start(sys: &'a SimSystem, policy: Policy, seed: u64, stream: u64) -> Run<'a> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        // Sampling every clock up front (in clock order) keeps the draw
        // sequence independent of which clocks happen to start active;
        // inactive values are never consulted before a reset overwrites
        // them.
        let expiry: Vec<f64> = sys
            .automaton
            .clocks()
            .iter()
            .map(|c| sample(&c.distribution, &mut rng))
            .collect();
        Run {
            sys,
            state: sys.automaton.initial(),
            elapsed: 0.0,
            expiry,
            rng,
            policy,
        }
    }

    fn fire(&mut self, t_idx: usize) {
        let a = &self.sys.automaton;
        let t = &a.transitions()[t_idx];
        // Reset draws happen in clock order, part of the reproducibility
        // contract.
        for &c in &t.resets {
            self.expiry[c] = self.elapsed + sample(&a.clocks()[c].distribution, &mut self.rng);
        }
        self.state = t.target;
    }

    /// Fire the next transition, or report deadlock with `None`.
    fn step(&mut self, monitor: &mut MonitorSummary) -> Option<Firing> {
        let sys = self.sys;
        let a = &sys.automaton;
        if !a.is_stable_idx(self.state) {
            let candidates: Vec<usize> = a
                .outgoing(self.state)
                .iter()
                .copied()
                .filter(|&t| {
                    let l = a.label(a.transitions()[t].label);
                    l.urgent && l.is_output()
                })
                .collect();
            let key = |t: usize| {
                let tr = &a.transitions()[t];
                (a.label(tr.label).name.as_str(), a.state_name(tr.target), t)
            };
            let pick = match self.policy {
                Policy::Fifo => candidates[0],
                Policy::Sorted => candidates.iter().copied().min_by_key(|&t| key(t)).unwrap(),
                Policy::Reverse => candidates.iter().copied().max_by_key(|&t| key(t)).unwrap(),
                Policy::Random => candidates[self.rng.gen_range(0..candidates.len())],
            };
            let before = self.elapsed;
            self.fire(pick);
            monitor.checks += 1;
            if self.elapsed != before {
                monitor.hard(format!(
                    "time advanced across the urgent firing of `{}`",
                    a.label(a.transitions()[pick].label).display()
                ));
            }
            Some(Firing {
                transition: pick,
                urgent: true,
            })
        } else {
            // Race: earliest expiry among the enabling clocks wins; exact
            // float ties break towards the lower clock index and are
            // counted by the arrival-invariant check.
            let enabling = a.enabling_idx(self.state);
            let mut best: Option<usize> = None;
            for &c in &enabling {
                match best {
                    None => best = Some(c),
                    Some(b) if self.expiry[c] < self.expiry[b] => best = Some(c),
                    Some(_) => {}
                }
            }
            let c = best?;
            monitor.checks += 1;
            if self.expiry[c] < self.elapsed {
                monitor.hard(format!(
                    "clock `{}` expired in the past at state `{}`",
                    a.clock_name(c),
                    a.state_name(self.state)
                ));
            }
            self.elapsed = self.expiry[c];
            let t = a
                .outgoing(self.state)
                .iter()
                .copied()
                .find(|&t| a.transitions()[t].trigger.contains(&c))
                .expect("an enabling clock triggers some output transition");
            self.fire(t);
            Some(Firing {
                transition: t,
                urgent: false,
            })
        }
    }

    /// Arrival invariant: active clocks sit strictly before their expiry
    /// (up to float collisions) and never past it.
    fn check_invariants(&self, monitor: &mut MonitorSummary) {
        let sys = self.sys;
        let a = &sys.automaton;
        monitor.checks += 1;
        let clocks: Vec<usize> = sys.active[self.state].iter().copied().collect();
        for (i, &c) in clocks.iter().enumerate() {
            let remaining = self.expiry[c] - self.elapsed;
            if remaining < 0.0 {
                monitor.hard(format!(
                    "active clock `{}` is {:e} past its expiry at state `{}`",
                    a.clock_name(c),
                    -remaining,
                    a.state_name(self.state)
                ));
            }
            for &d in &clocks[..i] {
                if self.expiry[c] == self.expiry[d] {
                    monitor.collision(format!(
                        "active clocks `{}` and `{}` share expiry {} at state `{}`",
                        a.clock_name(d),
                        a.clock_name(c),
                        self.expiry[c],
                        a.state_name(self.state)
                    ));
                }
            }
        }
    }
}

/// Per-replication resolution of one query.
#[derive(Debug, Clone)]
enum RepValue {
    /// A recorded outcome: indicator, fraction, or first-passage time.
    Value(f64),
    /// The run deadlocked and the event can no longer occur.
    Never,
    /// The event budget ran out before the query resolved.
    Exhausted,
}

#[derive(Debug, Clone)]
enum Progress {
    Pending,
    Done(f64),
    Never,
    Exhausted,
}

struct RepOutcome {
    values: Vec<RepValue>,
    deadlocked: bool,
    events: u64,
    monitor: MonitorSummary,
}

fn run_replication(
    sys: &SimSystem,
    queries: &[CompiledQuery],
    opts: &SimOptions,
    stream: u64,
) -> RepOutcome {
    let mut run = Run::start(sys, opts.policy, opts.seed, stream);
    let mut monitor = MonitorSummary::default();
    run.check_invariants(&mut monitor);

    let mut progress = vec![Progress::Pending; queries.len()];
    let mut acc = vec![0.0f64; queries.len()];

    // Observations at time zero.
    for (i, q) in queries.iter().enumerate() {
        let proj = &sys.projections[run.state];
        match q.shape {
            Shape::Transient { .. } if q.pred.eval(proj) => progress[i] = Progress::Done(1.0),
            Shape::MeanTime if q.pred.eval(proj) => progress[i] = Progress::Done(0.0),
            _ => {}
        }
    }

    let mut events: u64 = 0;
    let mut deadlocked = false;
    while progress.iter().any(|p| matches!(p, Progress::Pending)) {
        if events >= opts.max_events as u64 {
            for p in &mut progress {
                if matches!(p, Progress::Pending) {
                    *p = Progress::Exhausted;
                }
            }
            break;
        }
        let before = run.elapsed;
        let prev = run.state;
        match run.step(&mut monitor) {
            None => {
                // Deadlock: the current state persists forever.
                deadlocked = true;
                let proj = &sys.projections[run.state];
                for (i, q) in queries.iter().enumerate() {
                    if !matches!(progress[i], Progress::Pending) {
                        continue;
                    }
                    progress[i] = match q.shape {
                        Shape::Transient { .. } => Progress::Done(0.0),
                        Shape::MeanTime => Progress::Never,
                        Shape::Steady { horizon, warmup } => {
                            if q.pred.eval(proj) {
                                acc[i] += (horizon - run.elapsed.max(warmup)).max(0.0);
                            }
                            Progress::Done(acc[i] / (horizon - warmup))
                        }
                    };
                }
                break;
            }
            Some(_) => {
                events += 1;
                let now = run.elapsed;
                let proj_prev = &sys.projections[prev];
                let proj_now = &sys.projections[run.state];
                for (i, q) in queries.iter().enumerate() {
                    if !matches!(progress[i], Progress::Pending) {
                        continue;
                    }
                    match q.shape {
                        Shape::Transient { horizon } => {
                            if now > horizon {
                                progress[i] = Progress::Done(0.0);
                            } else if q.pred.eval(proj_now) {
                                progress[i] = Progress::Done(1.0);
                            }
                        }
                        Shape::MeanTime => {
                            if q.pred.eval(proj_now) {
                                progress[i] = Progress::Done(now);
                            }
                        }
                        Shape::Steady { horizon, warmup } => {
                            if q.pred.eval(proj_prev) {
                                let overlap = now.min(horizon) - before.max(warmup);
                                if overlap > 0.0 {
                                    acc[i] += overlap;
                                }
                            }
                            if now >= horizon {
                                progress[i] = Progress::Done(acc[i] / (horizon - warmup));
                            }
                        }
                    }
                }
                run.check_invariants(&mut monitor);
            }
        }
    }

    RepOutcome {
        values: progress
            .into_iter()
            .map(|p| match p {
                Progress::Done(v) => RepValue::Value(v),
                Progress::Never => RepValue::Never,
                Progress::Exhausted | Progress::Pending => RepValue::Exhausted,
            })
            .collect(),
        deadlocked,
        events,
        monitor,
    }
}

fn run_all(
    sys: &SimSystem,
    compiled: &[CompiledQuery],
    opts: &SimOptions,
) -> Result<Vec<RepOutcome>, SimError> {
    let reps = opts.replications;
    let one = |r: usize| run_replication(sys, compiled, opts, r as u64);
    match opts.jobs {
        Some(1) => Ok((0..reps).map(one).collect()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| SimError::ThreadPool(e.to_string()))?;
            Ok(pool.install(|| (0..reps).into_par_iter().map(one).collect()))
        }
        None => Ok((0..reps).into_par_iter().map(one).collect()),
    }
}

/// Estimate and occurrence bookkeeping for one query.
#[derive(Debug, Clone, Serialize)]
pub struct QueryResult {
    pub name: String,
    /// Display form of the query, e.g. `transient_reach(M.s1, 0.5)`.
    pub query: String,
    pub estimate: Estimate,
    /// Replications where the event occurred: reaches within the horizon
    /// for `transient_reach`, first passages for `mean_time_to`, measured
    /// runs for `steady_fraction`.
    pub occurrences: usize,
    /// Replications that deadlocked before the event (`mean_time_to`
    /// only); these contribute no sample.
    pub non_occurrences: usize,
    /// Replications cut off by the event budget before resolving.
    pub budget_exhausted: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub system: String,
    pub replications: usize,
    pub seed: u64,
    pub policy: Policy,
    pub confidence: f64,
    /// Replications that deadlocked while some query was still watching.
    /// Runs stop as soon as every query resolves, so absorption after the
    /// last resolution is not counted.
    pub deadlocked_runs: usize,
    pub total_events: u64,
    pub results: Vec<QueryResult>,
    pub monitor: MonitorSummary,
}

fn simulate_with_samples(
    sys: &SimSystem,
    queries: &[Query],
    opts: &SimOptions,
) -> Result<(SimReport, Vec<Vec<f64>>), SimError> {
    validate(opts)?;
    let compiled = compile_queries(sys, queries)?;
    let outcomes = run_all(sys, &compiled, opts)?;

    let mut monitor = MonitorSummary::default();
    let mut total_events = 0u64;
    let mut deadlocked_runs = 0usize;
    for o in &outcomes {
        monitor.merge(&o.monitor);
        total_events += o.events;
        deadlocked_runs += usize::from(o.deadlocked);
    }

    let mut results = Vec::with_capacity(queries.len());
    let mut all_samples = Vec::with_capacity(queries.len());
    for (i, q) in queries.iter().enumerate() {
        let mut samples = Vec::new();
        let mut hits = 0usize;
        let mut never = 0usize;
        let mut exhausted = 0usize;
        for o in &outcomes {
            match o.values[i] {
                RepValue::Value(v) => {
                    if v > 0.0 {
                        hits += 1;
                    }
                    samples.push(v);
                }
                RepValue::Never => never += 1,
                RepValue::Exhausted => exhausted += 1,
            }
        }
        let estimate = Estimate::from_samples(&samples, opts.confidence);
        let occurrences = match q.kind {
            QueryKind::TransientReach { .. } => hits,
            _ => samples.len(),
        };
        results.push(QueryResult {
            name: q.name.clone(),
            query: q.kind.to_string(),
            estimate,
            occurrences,
            non_occurrences: never,
            budget_exhausted: exhausted,
        });
        all_samples.push(samples);
    }

    let report = SimReport {
        system: sys.automaton.name().to_string(),
        replications: opts.replications,
        seed: opts.seed,
        policy: opts.policy,
        confidence: opts.confidence,
        deadlocked_runs,
        total_events,
        results,
        monitor,
    };
    Ok((report, all_samples))
}

/// Run `opts.replications` independent replications and estimate every
/// query.
pub fn simulate(
    sys: &SimSystem,
    queries: &[Query],
    opts: &SimOptions,
) -> Result<SimReport, SimError> {
    Ok(simulate_with_samples(sys, queries, opts)?.0)
}

/// One query's comparison between the two opposite urgent-order policies.
#[derive(Debug, Clone, Serialize)]
pub struct OrderProbe {
    pub name: String,
    pub query: String,
    /// Estimate under the `sorted` policy.
    pub forward: Estimate,
    /// Estimate under the `reverse` policy.
    pub reverse: Estimate,
    pub difference: f64,
    /// Sum of the two half-widths; a larger difference is evidence of
    /// scheduling dependence.
    pub tolerance: f64,
    /// Two-sample Kolmogorov–Smirnov statistic over the raw outcomes.
    pub ks: f64,
    /// Asymptotic rejection threshold for the KS statistic at the
    /// configured confidence.
    pub ks_critical: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderReport {
    pub system: String,
    pub replications: usize,
    pub seed: u64,
    pub confidence: f64,
    pub probes: Vec<OrderProbe>,
    /// All probes consistent: no evidence that estimates depend on the
    /// urgent scheduling order.
    pub consistent: bool,
}

/// Simulate twice with opposite urgent-order policies and compare the
/// per-query outcome distributions. Confluent systems pass (their
/// estimates agree up to sampling noise even though individual
/// trajectories differ); schedule-dependent models are flagged.
pub fn check_order_independence(
    sys: &SimSystem,
    queries: &[Query],
    opts: &SimOptions,
) -> Result<OrderReport, SimError> {
    let forward_opts = SimOptions {
        policy: Policy::Sorted,
        ..opts.clone()
    };
    let reverse_opts = SimOptions {
        policy: Policy::Reverse,
        ..opts.clone()
    };
    let (fwd, fwd_samples) = simulate_with_samples(sys, queries, &forward_opts)?;
    let (rev, rev_samples) = simulate_with_samples(sys, queries, &reverse_opts)?;

    let alpha = 1.0 - opts.confidence;
    let c_alpha = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let mut probes = Vec::with_capacity(queries.len());
    for (i, q) in queries.iter().enumerate() {
        let forward = fwd.results[i].estimate.clone();
        let reverse = rev.results[i].estimate.clone();
        let (n, m) = (fwd_samples[i].len(), rev_samples[i].len());
        let (difference, tolerance, ks, ks_critical, consistent) = if n == 0 && m == 0 {
            (0.0, 0.0, 0.0, 0.0, true)
        } else if n == 0 || m == 0 {
            (f64::INFINITY, 0.0, 1.0, 0.0, false)
        } else {
            let difference = (forward.point - reverse.point).abs();
            let tolerance = forward.half_width + reverse.half_width;
            let ks = ks_statistic(&fwd_samples[i], &rev_samples[i]);
            let ks_critical = c_alpha * (((n + m) as f64) / ((n * m) as f64)).sqrt();
            let consistent = difference <= tolerance && ks <= ks_critical;
            (difference, tolerance, ks, ks_critical, consistent)
        };
        probes.push(OrderProbe {
            name: q.name.clone(),
            query: q.kind.to_string(),
            forward,
            reverse,
            difference,
            tolerance,
            ks,
            ks_critical,
            consistent,
        });
    }
    let consistent = probes.iter().all(|p| p.consistent);
    Ok(OrderReport {
        system: sys.automaton.name().to_string(),
        replications: opts.replications,
        seed: opts.seed,
        confidence: opts.confidence,
        probes,
        consistent,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceEvent {
    pub time: f64,
    /// Display form of the fired action, e.g. `c!!`.
    pub action: String,
    pub urgent: bool,
    /// Composed state entered by the firing.
    pub state: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trace {
    pub initial: String,
    pub events: Vec<TraceEvent>,
    pub deadlocked: bool,
    pub monitor: MonitorSummary,
}

/// Record the first replication's event sequence (stream 0 of the seed),
/// up to `limit` events or deadlock.
pub fn trace(sys: &SimSystem, opts: &SimOptions, limit: usize) -> Result<Trace, SimError> {
    validate(opts)?;
    let mut run = Run::start(sys, opts.policy, opts.seed, 0);
    let mut monitor = MonitorSummary::default();
    run.check_invariants(&mut monitor);
    let a = sys.automaton();
    let mut events = Vec::new();
    let mut deadlocked = false;
    while events.len() < limit {
        match run.step(&mut monitor) {
            None => {
                deadlocked = true;
                break;
            }
            Some(firing) => {
                let t = &a.transitions()[firing.transition];
                events.push(TraceEvent {
                    time: run.elapsed,
                    action: a.label(t.label).display(),
                    urgent: firing.urgent,
                    state: a.state_name(run.state).to_string(),
                });
                run.check_invariants(&mut monitor);
            }
        }
    }
    Ok(Trace {
        initial: a.initial_name().to_string(),
        events,
        deadlocked,
        monitor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_model;

    fn load(name: &str) -> (SimSystem, Vec<Query>) {
        let path = format!("{}/models/{name}", env!("CARGO_MANIFEST_DIR"));
        let text = std::fs::read_to_string(path).unwrap();
        let mf = parse_model(&text).unwrap();
        let sys = SimSystem::from_model(&mf).unwrap();
        (sys, mf.queries)
    }

    fn opts(replications: usize, seed: u64) -> SimOptions {
        SimOptions {
            replications,
            seed,
            confidence: 0.99,
            ..SimOptions::default()
        }
    }

    fn at(automaton: &str, state: &str) -> Predicate {
        Predicate::At {
            automaton: automaton.to_string(),
            state: state.to_string(),
        }
    }

    #[test]
    fn exponential_sojourn_and_reach_statistics() {
        let (sys, queries) = load("single_exp.iosa");
        let report = simulate(&sys, &queries, &opts(4000, 7)).unwrap();

        let sojourn = &report.results[0];
        assert_eq!(sojourn.name, "sojourn");
        assert!(sojourn.estimate.covers(0.5), "{:?}", sojourn.estimate);
        assert_eq!(sojourn.occurrences, 4000);
        assert_eq!(sojourn.non_occurrences, 0);

        let reach = &report.results[1];
        let p = 1.0 - (-1.0f64).exp();
        assert!(reach.estimate.covers(p), "{:?} vs {p}", reach.estimate);
        assert!(reach.estimate.half_width < 0.05);

        // Both queries resolve at the single firing, so no run sticks
        // around to observe the absorption in s1.
        assert_eq!(report.deadlocked_runs, 0);
        assert_eq!(report.monitor.hard_violations, 0, "{:?}", report.monitor.notes);
    }

    #[test]
    fn race_probabilities_follow_the_rates() {
        let (sys, queries) = load("race_exp.iosa");
        let report = simulate(&sys, &queries, &opts(6000, 11)).unwrap();
        let x_first = &report.results[0];
        let y_first = &report.results[1];
        assert!(x_first.estimate.covers(0.25), "{:?}", x_first.estimate);
        assert!(y_first.estimate.covers(0.75), "{:?}", y_first.estimate);
        // Each replication reaches exactly one of the two branches.
        assert_eq!(x_first.occurrences + y_first.occurrences, 6000);
        assert!((x_first.estimate.point + y_first.estimate.point - 1.0).abs() < 1e-12);
        assert_eq!(report.monitor.hard_violations, 0);
    }

    #[test]
    fn alternating_renewal_busy_fraction() {
        let (sys, queries) = load("pingpong.iosa");
        let report = simulate(&sys, &queries, &opts(2000, 13)).unwrap();
        let busy = &report.results[0];
        assert!(busy.estimate.covers(2.0 / 3.0), "{:?}", busy.estimate);
        assert_eq!(busy.occurrences, 2000);
        // The renewal process never deadlocks; the horizon ends each run.
        assert_eq!(report.deadlocked_runs, 0);
        assert_eq!(report.monitor.hard_violations, 0);
    }

    #[test]
    fn absorbing_runs_extend_steady_measurement() {
        let (sys, _) = load("single_exp.iosa");
        let q = Query {
            name: "occupancy".to_string(),
            kind: QueryKind::SteadyFraction {
                predicate: at("M", "s1"),
                horizon: 10.0,
                warmup: 0.0,
            },
        };
        let report = simulate(&sys, &[q], &opts(4000, 17)).unwrap();
        // The run absorbs in s1 after an exp(2) sojourn T, so the mean
        // fraction is E[10 - min(T, 10)] / 10 = 1 - (1 - e^{-20})/20.
        let expected = 1.0 - (1.0 - (-20.0f64).exp()) / 20.0;
        let occupancy = &report.results[0];
        assert!(
            occupancy.estimate.covers(expected),
            "{:?} vs {expected}",
            occupancy.estimate
        );
    }

    #[test]
    fn predicates_at_the_initial_state_resolve_at_time_zero() {
        let (sys, _) = load("single_exp.iosa");
        let queries = [
            Query {
                name: "already".to_string(),
                kind: QueryKind::MeanTimeTo {
                    predicate: at("M", "s0"),
                },
            },
            Query {
                name: "instant".to_string(),
                kind: QueryKind::TransientReach {
                    predicate: at("M", "s0"),
                    horizon: 1e-3,
                },
            },
        ];
        let report = simulate(&sys, &queries, &opts(50, 1)).unwrap();
        assert_eq!(report.results[0].estimate.point, 0.0);
        assert_eq!(report.results[1].estimate.point, 1.0);
        // Nothing needed to fire.
        assert_eq!(report.total_events, 0);
    }

    #[test]
    fn replications_are_reproducible() {
        let (sys, queries) = load("race_exp.iosa");
        let serial = SimOptions {
            jobs: Some(1),
            ..opts(500, 23)
        };
        let parallel = opts(500, 23);
        let a = simulate(&sys, &queries, &serial).unwrap();
        let b = simulate(&sys, &queries, &parallel).unwrap();
        for (ra, rb) in a.results.iter().zip(&b.results) {
            assert_eq!(ra.estimate.point, rb.estimate.point);
            assert_eq!(ra.occurrences, rb.occurrences);
        }
        assert_eq!(a.total_events, b.total_events);
        assert_eq!(a.monitor, b.monitor);

        let c = simulate(&sys, &queries, &opts(500, 24)).unwrap();
        assert_ne!(
            a.results[0].estimate.point, c.results[0].estimate.point,
            "a different seed should move the point estimate"
        );
    }

    #[test]
    fn urgent_firings_take_no_time() {
        let (sys, _) = load("producers_consumer.iosa");
        let t = trace(&sys, &opts(1, 5), 200).unwrap();
        assert!(t.deadlocked, "the reference system absorbs after e!");
        let urgent: Vec<usize> = t
            .events
            .iter()
            .enumerate()
            .filter(|(_, e)| e.urgent)
            .map(|(i, _)| i)
            .collect();
        assert!(!urgent.is_empty(), "expected urgent firings in the trace");
        for i in urgent {
            let prev = if i == 0 { 0.0 } else { t.events[i - 1].time };
            assert_eq!(
                t.events[i].time, prev,
                "urgent firing advanced time: {:?}",
                t.events[i]
            );
        }
        assert_eq!(t.monitor.hard_violations, 0, "{:?}", t.monitor.notes);
    }

    #[test]
    fn policies_agree_on_confluent_systems() {
        let (sys, _) = load("producers_consumer.iosa");
        let queries = [
            Query {
                name: "done".to_string(),
                kind: QueryKind::TransientReach {
                    predicate: at("I3", "s9"),
                    horizon: 10.0,
                },
            },
            Query {
                name: "latency".to_string(),
                kind: QueryKind::MeanTimeTo {
                    predicate: at("I3", "s9"),
                },
            },
        ];
        let report = check_order_independence(&sys, &queries, &opts(2000, 29)).unwrap();
        for probe in &report.probes {
            assert!(
                probe.consistent,
                "{}: difference {} vs tolerance {}, ks {} vs {}",
                probe.name, probe.difference, probe.tolerance, probe.ks, probe.ks_critical
            );
        }
        assert!(report.consistent);
    }

    #[test]
    fn scheduling_dependence_is_detected() {
        let (sys, queries) = load("nonconfluent_control.iosa");
        let report = check_order_independence(&sys, &queries, &opts(400, 31)).unwrap();
        let probe = &report.probes[0];
        // `sorted` always picks u!! (into s1, hence s3); `reverse` always
        // picks v!!. The two policies estimate 1 and 0.
        assert_eq!(probe.forward.point, 1.0);
        assert_eq!(probe.reverse.point, 0.0);
        assert_eq!(probe.difference, 1.0);
        assert!(!probe.consistent);
        assert!(!report.consistent);
    }

    #[test]
    fn deadlock_without_the_event_is_a_non_occurrence() {
        let (sys, _) = load("producers_consumer.iosa");
        let q = Query {
            name: "handoff".to_string(),
            kind: QueryKind::MeanTimeTo {
                predicate: at("I3", "s8"),
            },
        };
        let report = simulate(&sys, &[q], &opts(2000, 37)).unwrap();
        let r = &report.results[0];
        // s8 is only reached when the first producer wins the race; the
        // other branch absorbs without passing through it.
        assert_eq!(r.occurrences + r.non_occurrences, 2000);
        assert!(r.occurrences > 0, "some runs should reach s8");
        assert!(r.non_occurrences > 0, "some runs should bypass s8");
        assert_eq!(r.estimate.replications, r.occurrences);
        assert_eq!(r.budget_exhausted, 0);
    }

    #[test]
    fn event_budget_exhaustion_is_reported() {
        let (sys, _) = load("loop_exp.iosa");
        let q = Query {
            name: "escape".to_string(),
            kind: QueryKind::MeanTimeTo {
                predicate: Predicate::Not(Box::new(at("M", "s0"))),
            },
        };
        let o = SimOptions {
            max_events: 50,
            ..opts(20, 41)
        };
        let report = simulate(&sys, &[q], &o).unwrap();
        let r = &report.results[0];
        assert_eq!(r.budget_exhausted, 20);
        assert_eq!(r.estimate.replications, 0);
        assert!(r.estimate.point.is_nan());
        assert_eq!(report.total_events, 20 * 50);
    }

    #[test]
    fn open_systems_are_rejected() {
        let path = format!("{}/models/open.iosa", env!("CARGO_MANIFEST_DIR"));
        let text = std::fs::read_to_string(path).unwrap();
        let mf = parse_model(&text).unwrap();
        match SimSystem::from_model(&mf) {
            Err(SimError::NotClosed { inputs }) => assert_eq!(inputs, ["d"]),
            other => panic!("expected NotClosed, got {other:?}"),
        }
    }

    #[test]
    fn bad_queries_and_options_are_rejected() {
        let (sys, _) = load("single_exp.iosa");
        let q = |kind: QueryKind| Query {
            name: "q".to_string(),
            kind,
        };

        let unknown_component = q(QueryKind::MeanTimeTo {
            predicate: at("Nope", "s0"),
        });
        assert!(matches!(
            simulate(&sys, &[unknown_component], &opts(1, 1)),
            Err(SimError::BadQuery { .. })
        ));

        let unknown_state = q(QueryKind::MeanTimeTo {
            predicate: at("M", "missing"),
        });
        assert!(matches!(
            simulate(&sys, &[unknown_state], &opts(1, 1)),
            Err(SimError::BadQuery { .. })
        ));

        let inverted = q(QueryKind::SteadyFraction {
            predicate: at("M", "s1"),
            horizon: 1.0,
            warmup: 1.0,
        });
        assert!(matches!(
            simulate(&sys, &[inverted], &opts(1, 1)),
            Err(SimError::BadQuery { .. })
        ));

        let bad_confidence = SimOptions {
            confidence: 1.0,
            ..opts(1, 1)
        };
        assert!(matches!(
            simulate(&sys, &[], &bad_confidence),
            Err(SimError::InvalidOptions { .. })
        ));
    }

    #[test]
    fn policy_names_round_trip() {
        for p in [Policy::Sorted, Policy::Fifo, Policy::Reverse, Policy::Random] {
            assert_eq!(p.as_str().parse::<Policy>().unwrap(), p);
        }
        assert!("eager".parse::<Policy>().is_err());
    }
}
