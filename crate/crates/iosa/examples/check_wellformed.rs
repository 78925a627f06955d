//! Audit every automaton in a model against the six well-formedness
//! conditions and print the violations, if any, with the inferred
//! active-clock witness for the healthy ones.
//!
//! ```text
//! cargo run --example check_wellformed [-- path/to/model.iosa]
//! ```

use iosa::parse::parse_model;
use iosa::wellformed::{check, prepare};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let default = concat!(env!("CARGO_MANIFEST_DIR"), "/models/incomplete_inputs.iosa").to_string();
    let path = std::env::args().nth(1).unwrap_or(default);

    let model = parse_model(&std::fs::read_to_string(&path)?)?;
    for automaton in prepare(&model) {
        let report = check(&automaton);
        if report.well_formed {
            println!("{}: well-formed", report.automaton);
            if let Some(active) = &report.active {
                for (state, clocks) in active {
                    let names: Vec<&str> = clocks.iter().map(|c| c.as_str()).collect();
                    println!("  active({state}) = {{{}}}", names.join(", "));
                }
            }
        } else {
            println!(
                "{}: {} violation(s)",
                report.automaton,
                report.violations.len()
            );
            for v in &report.violations {
                println!("  ({}) {}", v.condition, v.message);
            }
        }
    }
    Ok(())
}
