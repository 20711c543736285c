//! Builds a scenario from inline TOML and reports what the loader derived.

use freqctl::analysis::find_equilibrium;
use freqctl::scenario::Scenario;

const TWO_BUS: &str = r#"
schema_version = 1
description = "generator feeding a flexible load"

[[bus]]
kind = "generator"
id = 1
inertia = 2.0

[[bus]]
kind = "load"
id = 2
load_step = 0.25

[[line]]
from = 1
to = 2
susceptance = 4.0

[[block]]
type = "turbine_governor"
bus = 1
tau_g = 0.3
tau_b = 0.6
droop = { type = "linear", gain = 3.0 }

[[block]]
type = "dynamic_oslc"
bus = 2
cost = { type = "quadratic", alpha = 4.0, min = -0.1, max = 0.1 }

[[block]]
type = "uncontrollable_load"
bus = 2
damping = 0.5

[simulation]
t_end = 20.0
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sc = Scenario::from_toml(TWO_BUS, "two_bus")?;
    println!("{}: {} buses, {} blocks, dt = {}", sc.name, sc.system.model.buses.len(), sc.system.blocks.len(), sc.sim.dt);
    println!("omega* = {:.6}", find_equilibrium(&sc.system)?.omega_star);

    match Scenario::from_toml(&TWO_BUS.replace("schema_version = 1", "schema_version = 2"), "bad") {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
