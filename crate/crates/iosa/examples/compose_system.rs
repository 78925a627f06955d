//! Compose the components of a model into one automaton and print it in
//! canonical form.
//!
//! ```text
//! cargo run --example compose_system [-- path/to/model.iosa]
//! ```

use iosa::compose::{compose_many, Scope};
use iosa::parse::{parse_model, serialize_automaton};
use iosa::wellformed::prepare_system;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let default = concat!(env!("CARGO_MANIFEST_DIR"), "/models/producers_consumer.iosa").to_string();
    let path = std::env::args().nth(1).unwrap_or(default);

    let model = parse_model(&std::fs::read_to_string(&path)?)?;
    let components = prepare_system(&model)?;
    let composed = compose_many(&components, Scope::Reachable)?;

    eprintln!(
        "composed {} components: {} states, {} transitions",
        composed.components.len(),
        composed.automaton.state_count(),
        composed.automaton.transitions().len(),
    );
    print!("{}", serialize_automaton(&composed.automaton)?);
    Ok(())
}
