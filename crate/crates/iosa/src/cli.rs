//! Command-line front end: one thin binary over the library.
//!
//! Exit codes: `0` success, `1` the model is unusable for the requested
//! operation (ill-formed, incompatible, open), `2` the input could not be
//! read or parsed (also bad arguments), `3` the analysis itself came back
//! negative or inconclusive.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::analysis::{
    check_compositional, check_confluence_direct, AnalysisError, CompositionalReport,
    DirectOptions, DirectReport, Status,
};
use crate::compose::{compose_many, ComposeError, Composition, Scope};
use crate::model::ModelError;
use crate::parse::{parse_model_bytes, serialize_automaton, ModelFile, ParseError};
use crate::query::Query;
use crate::reduction::{normal_form, normal_form_verified, NormalForm, ReductionError};
use crate::sim::{simulate, trace, Policy, SimError, SimOptions, SimReport, SimSystem};
use crate::wellformed::{self, WellformedReport};

const EXIT_OK: i32 = 0;
const EXIT_MODEL: i32 = 1;
const EXIT_INPUT: i32 = 2;
const EXIT_ANALYSIS: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "iosa",
    version,
    about = "Toolkit for input/output stochastic automata with urgency"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    s.parse()
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check every automaton in the model for well-formedness.
    Check {
        /// Model file (`.iosa`).
        model: PathBuf,
    },
    /// Compose the declared system and print it in model syntax.
    Compose {
        model: PathBuf,
        /// Build the whole Cartesian product instead of only the states
        /// reachable from the initial one.
        #[arg(long)]
        full: bool,
    },
    /// Decide whether the declared system is confluent.
    Confluence {
        model: PathBuf,
        /// Check the composed automaton state by state instead of using
        /// the compositional criteria on the components.
        #[arg(long)]
        direct: bool,
        /// With --direct: skip states no plausible path reaches.
        #[arg(long)]
        potentially_reachable_only: bool,
        /// Keep every witness instead of only the first.
        #[arg(long)]
        all_witnesses: bool,
    },
    /// Reduce a composed state to its urgent normal form.
    Nf {
        model: PathBuf,
        /// Composed state, e.g. `s1|s4|s6`.
        state: String,
        /// Explore every urgent order instead of one deterministic
        /// descent, and fail if two distinct normal forms exist.
        #[arg(long)]
        verify_all_orders: bool,
    },
    /// Estimate the model's queries by simulation.
    Simulate {
        model: PathBuf,
        /// Estimate only this declared query (default: all of them).
        query: Option<String>,
        #[arg(long, default_value_t = 10_000)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
        /// Urgent scheduling policy: sorted, fifo, reverse, or random.
        #[arg(long, default_value = "sorted", value_parser = parse_policy)]
        policy: Policy,
        /// Worker threads (default: one per core).
        #[arg(long)]
        jobs: Option<usize>,
        /// Cap on events per replication.
        #[arg(long, default_value_t = 1_000_000)]
        max_events: usize,
        /// Simulate even when confluence cannot be certified. Without
        /// this, estimates of a non-confluent system would silently
        /// depend on the urgent scheduling policy.
        #[arg(long)]
        allow_nondeterminism: bool,
        /// Gate on the direct state-by-state check (over plausibly
        /// reachable states) instead of the compositional one.
        #[arg(long)]
        direct: bool,
        /// Include the first replication's event trace in the report.
        #[arg(long)]
        trace: bool,
    },
}

/// Terminal failure: message on stderr, nothing on stdout.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Failure {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<ParseError> for Failure {
    fn from(e: ParseError) -> Failure {
        Failure::new(EXIT_INPUT, e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Failure {
        Failure::new(EXIT_INPUT, e.to_string())
    }
}

impl From<ComposeError> for Failure {
    fn from(e: ComposeError) -> Failure {
        let code = match e {
            ComposeError::Model(_) => EXIT_INPUT,
            _ => EXIT_MODEL,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Failure {
        let code = match e {
            AnalysisError::NotClosed { .. } => EXIT_MODEL,
            AnalysisError::Compose(ComposeError::Model(_)) => EXIT_INPUT,
            AnalysisError::Compose(_) => EXIT_MODEL,
            AnalysisError::Model(_) => EXIT_INPUT,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Failure {
        let code = match e {
            SimError::NotClosed { .. } | SimError::IllFormed { .. } => EXIT_MODEL,
            SimError::BadQuery { .. } | SimError::InvalidOptions { .. } => EXIT_INPUT,
            SimError::ThreadPool(_) => EXIT_INPUT,
            SimError::Compose(ComposeError::Model(_)) | SimError::Model(_) => EXIT_INPUT,
            SimError::Compose(_) => EXIT_MODEL,
        };
        Failure::new(code, e.to_string())
    }
}

#[derive(Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Envelope {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    inputs: Vec<InputDigest>,
    duration_ms: u64,
    report: serde_json::Value,
}

struct Loaded {
    mf: ModelFile,
    digest: InputDigest,
}

fn load(path: &Path) -> Result<Loaded, Failure> {
    let bytes = std::fs::read(path)
        .map_err(|e| Failure::new(EXIT_INPUT, format!("cannot read {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let sha256 = hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    let mf = parse_model_bytes(&bytes)
        .map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", path.display())))?;
    Ok(Loaded {
        mf,
        digest: InputDigest {
            path: path.display().to_string(),
            sha256,
        },
    })
}

/// What one command hands back: a machine payload, a human rendering,
/// and the exit code.
struct Outcome {
    payload: serde_json::Value,
    text: String,
    code: i32,
}

fn compose_system(mf: &ModelFile, scope: Scope) -> Result<Composition, Failure> {
    let components = wellformed::prepare_system(mf)?;
    Ok(compose_many(&components, scope)?)
}

fn run_check(mf: &ModelFile) -> Outcome {
    let prepared = wellformed::prepare(mf);
    let reports: Vec<WellformedReport> = prepared.iter().map(wellformed::check).collect();
    let ok = reports.iter().all(|r| r.well_formed);
    let mut text = String::new();
    for r in &reports {
        if r.well_formed {
            let _ = writeln!(text, "{}: well-formed", r.automaton);
        } else {
            let _ = writeln!(text, "{}: {} violation(s)", r.automaton, r.violations.len());
            for v in &r.violations {
                let _ = writeln!(text, "  ({}) {}", v.condition, v.message);
            }
        }
    }
    Outcome {
        payload: serde_json::to_value(&reports).expect("reports serialize"),
        text,
        code: if ok { EXIT_OK } else { EXIT_MODEL },
    }
}

fn run_compose(mf: &ModelFile, full: bool) -> Result<Outcome, Failure> {
    let scope = if full { Scope::Full } else { Scope::Reachable };
    let composition = compose_system(mf, scope)?;
    let a = &composition.automaton;
    let model = serialize_automaton(a)?;
    let payload = json!({
        "name": a.name(),
        "states": a.state_count(),
        "transitions": a.transitions().len(),
        "closed": a.is_closed(),
        "model": model,
    });
    Ok(Outcome {
        payload,
        text: model,
        code: EXIT_OK,
    })
}

fn direct_text(r: &DirectReport) -> String {
    let mut text = String::new();
    let _ = writeln!(
        text,
        "status: {}",
        match r.status {
            Status::Confluent => "confluent",
            Status::NotConfluent => "not-confluent",
            Status::Inconclusive => "inconclusive",
        }
    );
    let _ = writeln!(text, "automaton: {}", r.automaton);
    let _ = writeln!(text, "checked states: {}", r.checked_states);
    for w in &r.witnesses {
        let _ = writeln!(
            text,
            "  at `{}`: ({}, {}) do not commute: {}",
            w.state, w.pair.0, w.pair.1, w.reason
        );
    }
    text
}

fn compositional_text(r: &CompositionalReport) -> String {
    let mut text = String::new();
    let _ = writeln!(
        text,
        "status: {}",
        match r.status {
            Status::Confluent => "confluent",
            Status::NotConfluent => "not-confluent",
            Status::Inconclusive => "inconclusive",
        }
    );
    let _ = writeln!(text, "components: {}", r.components.join(", "));
    let _ = writeln!(
        text,
        "composed size: {} states, {} transitions",
        r.composed_states, r.composed_transitions
    );
    let urgent: Vec<&str> = r.urgent_actions.iter().map(|s| s.as_str()).collect();
    let _ = writeln!(text, "urgent actions: {{{}}}", urgent.join(", "));
    let _ = writeln!(
        text,
        "enabled graph: {} vertices, initial {:?}",
        r.vertices.len(),
        r.initial_vertex
    );
    for w in &r.witnesses {
        let _ = writeln!(
            text,
            "  pair ({}, {}): `{}` diverges at `{}` ({} vs {}); vertex {:?} {}",
            w.pair.0, w.pair.1, w.component, w.state, w.left, w.right, w.vertex, w.vertex_cause
        );
    }
    text
}

fn run_confluence(
    mf: &ModelFile,
    direct: bool,
    potentially_reachable_only: bool,
    all_witnesses: bool,
) -> Result<Outcome, Failure> {
    if direct {
        let composition = compose_system(mf, Scope::Reachable)?;
        let opts = DirectOptions {
            potentially_reachable_only,
        };
        let mut report = check_confluence_direct(&composition.automaton, &opts);
        if !all_witnesses {
            report.witnesses.truncate(1);
        }
        let code = if report.status == Status::Confluent {
            EXIT_OK
        } else {
            EXIT_ANALYSIS
        };
        Ok(Outcome {
            payload: serde_json::to_value(&report).expect("report serializes"),
            text: direct_text(&report),
            code,
        })
    } else {
        let components = wellformed::prepare_system(mf)?;
        let mut report = check_compositional(&components)?;
        if !all_witnesses {
            report.witnesses.truncate(1);
        }
        let code = if report.status == Status::Confluent {
            EXIT_OK
        } else {
            EXIT_ANALYSIS
        };
        Ok(Outcome {
            payload: serde_json::to_value(&report).expect("report serializes"),
            text: compositional_text(&report),
            code,
        })
    }
}

fn normal_form_text(nf: &NormalForm) -> String {
    format!(
        "normal form of `{}`: {}\npath: [{}]\n",
        nf.from,
        nf.config,
        nf.path.join(", ")
    )
}

fn run_nf(mf: &ModelFile, state: &str, verify_all_orders: bool) -> Result<Outcome, Failure> {
    let composition = compose_system(mf, Scope::Reachable)?;
    let result = if verify_all_orders {
        normal_form_verified(&composition.automaton, state)
    } else {
        normal_form(&composition.automaton, state)
    };
    match result {
        Ok(nf) => Ok(Outcome {
            payload: json!({ "status": "normal-form", "normal_form": nf }),
            text: normal_form_text(&nf),
            code: EXIT_OK,
        }),
        Err(ReductionError::Zeno { from, cycle }) => Ok(Outcome {
            payload: json!({ "status": "zeno", "from": from, "cycle": cycle }),
            text: format!(
                "urgent cycle from `{from}`: {} (time cannot advance)\n",
                cycle.join(" -> ")
            ),
            code: EXIT_ANALYSIS,
        }),
        Err(ReductionError::DistinctNormalForms { from, left, right }) => Ok(Outcome {
            payload: json!({
                "status": "divergent",
                "from": from,
                "left": *left,
                "right": *right,
            }),
            text: format!(
                "distinct normal forms from `{from}`:\n  {} via [{}]\n  {} via [{}]\n",
                left.config,
                left.path.join(", "),
                right.config,
                right.path.join(", ")
            ),
            code: EXIT_ANALYSIS,
        }),
        Err(ReductionError::NotClosed { automaton, inputs }) => Err(Failure::new(
            EXIT_MODEL,
            format!("automaton `{automaton}` is open (inputs {inputs:?})"),
        )),
        Err(ReductionError::Model(e)) => Err(Failure::new(EXIT_INPUT, e.to_string())),
    }
}

fn sim_text(report: &SimReport) -> String {
    let mut text = String::new();
    let _ = writeln!(
        text,
        "system {}: {} replications, seed {}, policy {}, {:.0}% confidence",
        report.system,
        report.replications,
        report.seed,
        report.policy,
        report.confidence * 100.0
    );
    for r in &report.results {
        let _ = writeln!(
            text,
            "  {} = {:.6} +- {:.6}  ({}, n={}, occurrences={}, non-occurrences={}, cut-off={})",
            r.name,
            r.estimate.point,
            r.estimate.half_width,
            r.query,
            r.estimate.replications,
            r.occurrences,
            r.non_occurrences,
            r.budget_exhausted
        );
    }
    let _ = writeln!(
        text,
        "events: {} total, {} run(s) deadlocked while a query was pending",
        report.total_events, report.deadlocked_runs
    );
    let _ = writeln!(
        text,
        "monitor: {} checks, {} hard violation(s), {} float collision(s)",
        report.monitor.checks, report.monitor.hard_violations, report.monitor.float_collisions
    );
    for note in &report.monitor.notes {
        let _ = writeln!(text, "  note: {note}");
    }
    text
}

#[allow(clippy::too_many_arguments)]
fn run_simulate(
    mf: &ModelFile,
    query: Option<&str>,
    opts: &SimOptions,
    allow_nondeterminism: bool,
    direct: bool,
    with_trace: bool,
) -> Result<Outcome, Failure> {
    let queries: Vec<Query> = match query {
        None => mf.queries.clone(),
        Some(name) => {
            let q = mf
                .queries
                .iter()
                .find(|q| q.name == name)
                .ok_or_else(|| {
                    Failure::new(EXIT_INPUT, format!("no query named `{name}` in the model"))
                })?;
            vec![q.clone()]
        }
    };
    if queries.is_empty() {
        return Err(Failure::new(
            EXIT_INPUT,
            "the model declares no queries; add `query <name> = ...;` lines",
        ));
    }

    let composition = compose_system(mf, Scope::Reachable)?;

    // Simulation resolves urgent races with a scheduling policy, so the
    // estimates are only trustworthy when the system is confluent (or the
    // caller explicitly accepts the risk).
    if !allow_nondeterminism {
        if direct {
            let gate = check_confluence_direct(
                &composition.automaton,
                &DirectOptions {
                    potentially_reachable_only: true,
                },
            );
            if gate.status != Status::Confluent {
                return Ok(Outcome {
                    payload: json!({ "refused": "not confluent", "gate": gate }),
                    text: format!(
                        "refusing to simulate: the direct check is {} over the plausible \
                         states;\nrerun with --allow-nondeterminism to accept \
                         policy-dependent estimates\n{}",
                        match gate.status {
                            Status::NotConfluent => "not-confluent",
                            _ => "inconclusive",
                        },
                        direct_text(&gate)
                    ),
                    code: EXIT_ANALYSIS,
                });
            }
        } else {
            let components = wellformed::prepare_system(mf)?;
            let gate = check_compositional(&components)?;
            if gate.status != Status::Confluent {
                return Ok(Outcome {
                    payload: json!({ "refused": "not certified confluent", "gate": gate }),
                    text: format!(
                        "refusing to simulate: the compositional check is inconclusive;\n\
                         rerun with --direct for a state-level check or \
                         --allow-nondeterminism to accept policy-dependent estimates\n{}",
                        compositional_text(&gate)
                    ),
                    code: EXIT_ANALYSIS,
                });
            }
        }
    }

    let sys = SimSystem::new(&composition)?;
    let report = simulate(&sys, &queries, opts)?;
    let mut payload = serde_json::to_value(&report).expect("report serializes");
    let mut text = sim_text(&report);
    if with_trace {
        let t = trace(&sys, opts, opts.max_events.min(10_000))?;
        let _ = writeln!(text, "trace (replication 0) from {}:", t.initial);
        for e in &t.events {
            let _ = writeln!(
                text,
                "  t={:<12.6} {}{} -> {}",
                e.time,
                e.action,
                if e.urgent { "  [urgent]" } else { "" },
                e.state
            );
        }
        if t.deadlocked {
            let _ = writeln!(text, "  (deadlock)");
        }
        payload["trace"] = serde_json::to_value(&t).expect("trace serializes");
    }
    Ok(Outcome {
        payload,
        text,
        code: EXIT_OK,
    })
}

fn dispatch(command: &Command) -> Result<(Outcome, &'static str, InputDigest), Failure> {
    match command {
        Command::Check { model } => {
            let loaded = load(model)?;
            Ok((run_check(&loaded.mf), "check", loaded.digest))
        }
        Command::Compose { model, full } => {
            let loaded = load(model)?;
            Ok((run_compose(&loaded.mf, *full)?, "compose", loaded.digest))
        }
        Command::Confluence {
            model,
            direct,
            potentially_reachable_only,
            all_witnesses,
        } => {
            let loaded = load(model)?;
            Ok((
                run_confluence(
                    &loaded.mf,
                    *direct,
                    *potentially_reachable_only,
                    *all_witnesses,
                )?,
                "confluence",
                loaded.digest,
            ))
        }
        Command::Nf {
            model,
            state,
            verify_all_orders,
        } => {
            let loaded = load(model)?;
            Ok((
                run_nf(&loaded.mf, state, *verify_all_orders)?,
                "nf",
                loaded.digest,
            ))
        }
        Command::Simulate {
            model,
            query,
            reps,
            seed,
            confidence,
            policy,
            jobs,
            max_events,
            allow_nondeterminism,
            direct,
            trace,
        } => {
            let loaded = load(model)?;
            let opts = SimOptions {
                replications: *reps,
                seed: *seed,
                confidence: *confidence,
                policy: *policy,
                jobs: *jobs,
                max_events: *max_events,
            };
            Ok((
                run_simulate(
                    &loaded.mf,
                    query.as_deref(),
                    &opts,
                    *allow_nondeterminism,
                    *direct,
                    *trace,
                )?,
                "simulate",
                loaded.digest,
            ))
        }
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let started = Instant::now();
    match dispatch(&cli.command) {
        Ok((outcome, command, digest)) => {
            match cli.format {
                Format::Text => print!("{}", outcome.text),
                Format::Json => {
                    let envelope = Envelope {
                        tool: "iosa",
                        version: env!("CARGO_PKG_VERSION"),
                        command,
                        inputs: vec![digest],
                        duration_ms: started.elapsed().as_millis() as u64,
                        report: outcome.payload,
                    };
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&envelope).expect("envelope serializes")
                    );
                }
            }
            outcome.code
        }
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            failure.code
        }
    }
}
