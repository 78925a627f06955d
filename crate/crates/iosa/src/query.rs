//! Measurement queries attached to a model: what the simulator estimates.

use std::fmt;

use serde::Serialize;

/// Boolean observation over component-state membership, e.g.
/// `I3.s9 && !I1.s2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Predicate {
    /// `<automaton>.<state>`: the named component is in the named state.
    At { automaton: String, state: String },
    Not(Box<Predicate>),
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
}

impl Predicate {
    fn level(&self) -> u8 {
        match self {
            Predicate::Or(..) => 1,
            Predicate::And(..) => 2,
            Predicate::Not(_) => 3,
            Predicate::At { .. } => 4,
        }
    }

    fn fmt_at_level(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let mine = self.level();
        if mine < min {
            write!(f, "(")?;
        }
        match self {
            Predicate::At { automaton, state } => write!(f, "{automaton}.{state}")?,
            Predicate::Not(p) => {
                // A nested negation must be parenthesized: `!!` would
                // lex as the urgent-output suffix, not as two bangs.
                write!(f, "!")?;
                p.fmt_at_level(f, 4)?;
            }
            Predicate::And(a, b) => {
                a.fmt_at_level(f, 2)?;
                write!(f, " && ")?;
                b.fmt_at_level(f, 3)?;
            }
            Predicate::Or(a, b) => {
                a.fmt_at_level(f, 1)?;
                write!(f, " || ")?;
                b.fmt_at_level(f, 2)?;
            }
        }
        if mine < min {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_at_level(f, 0)
    }
}

/// The three supported estimation targets.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QueryKind {
    /// P(predicate holds at some time ≤ horizon).
    TransientReach { predicate: Predicate, horizon: f64 },
    /// Long-run fraction of time the predicate holds, time-averaged over
    /// `horizon` after discarding `warmup`.
    SteadyFraction {
        predicate: Predicate,
        horizon: f64,
        warmup: f64,
    },
    /// Mean first-passage time to the predicate.
    MeanTimeTo { predicate: Predicate },
}

impl QueryKind {
    pub fn predicate(&self) -> &Predicate {
        match self {
            QueryKind::TransientReach { predicate, .. } => predicate,
            QueryKind::SteadyFraction { predicate, .. } => predicate,
            QueryKind::MeanTimeTo { predicate } => predicate,
        }
    }
}

impl fmt::Display for QueryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryKind::TransientReach { predicate, horizon } => {
                write!(f, "transient_reach({predicate}, {horizon})")
            }
            QueryKind::SteadyFraction {
                predicate,
                horizon,
                warmup,
            } => {
                if *warmup == 0.0 {
                    write!(f, "steady_fraction({predicate}, {horizon})")
                } else {
                    write!(f, "steady_fraction({predicate}, {horizon}, {warmup})")
                }
            }
            QueryKind::MeanTimeTo { predicate } => write!(f, "mean_time_to({predicate})"),
        }
    }
}

/// A named query as written in a model file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Query {
    pub name: String,
    pub kind: QueryKind,
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "query {} = {};", self.name, self.kind)
    }
}
