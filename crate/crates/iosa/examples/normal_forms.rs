//! Reduce every state of a closed system to its urgent normal form: the
//! stable configuration reached once all pending urgent transitions have
//! fired, with the clocks they reset accumulated along the way.
//!
//! ```text
//! cargo run --example normal_forms [-- path/to/model.iosa]
//! ```

use iosa::compose::{compose_many, Scope};
use iosa::parse::parse_model;
use iosa::reduction::{normal_forms_all, ReductionError};
use iosa::wellformed::prepare_system;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let default = concat!(env!("CARGO_MANIFEST_DIR"), "/models/urgent_diamond.iosa").to_string();
    let path = std::env::args().nth(1).unwrap_or(default);

    let model = parse_model(&std::fs::read_to_string(&path)?)?;
    let components = prepare_system(&model)?;
    let composed = compose_many(&components, Scope::Reachable)?;

    for (state, outcome) in normal_forms_all(&composed.automaton)? {
        match outcome {
            Ok(nf) if nf.path.is_empty() => println!("{state}: stable"),
            Ok(nf) => println!("{state}: {} via [{}]", nf.config, nf.path.join(", ")),
            Err(ReductionError::Zeno { cycle, .. }) => {
                println!("{state}: urgent cycle {} — time cannot advance", cycle.join(" -> "));
            }
            Err(e) => println!("{state}: {e}"),
        }
    }
    Ok(())
}
