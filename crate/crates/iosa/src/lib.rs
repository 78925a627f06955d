//! Input/output stochastic automata with urgency: modeling language,
//! well-formedness checks, parallel composition, confluence analysis,
//! urgent normal forms, and statistical simulation.
//!
//! The `examples/` directory is the front door, one program per
//! capability:
//!
//! - `check_wellformed`: parse a model and audit every condition.
//! - `compose_system`: compose a three-component system and print it.
//! - `confluence_direct`: state-by-state commutation of urgent pairs.
//! - `confluence_compositional`: certify confluence without composing.
//! - `normal_forms`: reduce unstable states to their urgent normal form.
//! - `simulate_race`: estimate reachability queries with confidence
//!   intervals.
//! - `order_independence`: show estimates do not depend on the urgent
//!   scheduling policy when the system is confluent — and catch a
//!   system where they do.
//!
//! The same functionality ships as one thin binary (`iosa check`,
//! `compose`, `confluence`, `nf`, `simulate`).

pub mod analysis;
pub mod cli;
pub mod compose;
pub mod model;
pub mod modelgen;
pub mod parse;
pub mod query;
pub mod reduction;
pub mod sim;
pub mod wellformed;
