//! Estimate a model's queries by discrete-event simulation and print
//! each estimate with its confidence interval, plus one sample trace.
//!
//! ```text
//! cargo run --release --example simulate_race [-- path/to/model.iosa]
//! ```

use iosa::parse::parse_model;
use iosa::sim::{simulate, trace, SimOptions, SimSystem};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let default = concat!(env!("CARGO_MANIFEST_DIR"), "/models/race_exp.iosa").to_string();
    let path = std::env::args().nth(1).unwrap_or(default);

    let model = parse_model(&std::fs::read_to_string(&path)?)?;
    let system = SimSystem::from_model(&model)?;
    let options = SimOptions {
        replications: 20_000,
        seed: 7,
        ..SimOptions::default()
    };

    let report = simulate(&system, &model.queries, &options)?;
    println!(
        "{}: {} replications, seed {}, {:.0}% confidence",
        report.system,
        report.replications,
        report.seed,
        report.confidence * 100.0
    );
    for r in &report.results {
        println!(
            "  {} = {:.4} +- {:.4}   ({})",
            r.name, r.estimate.point, r.estimate.half_width, r.query
        );
    }
    println!(
        "monitor: {} checks, {} hard violation(s)",
        report.monitor.checks, report.monitor.hard_violations
    );

    let t = trace(&system, &options, 20)?;
    println!("sample trace from {}:", t.initial);
    for e in &t.events {
        println!(
            "  t={:<10.4} {}{} -> {}",
            e.time,
            e.action,
            if e.urgent { " [urgent]" } else { "" },
            e.state
        );
    }
    if t.deadlocked {
        println!("  (deadlock)");
    }
    Ok(())
}
