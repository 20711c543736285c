//! Load step on the three-bus reference network, written as CSV to stdout.
//!
//! Pass a scenario path to simulate another network.

use freqctl::report::trajectory_csv;
use freqctl::scenario::Scenario;
use freqctl::simulator::SimConfig;
use freqctl::studies::step_response;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/ref3bus.toml").to_string());
    let sc = Scenario::from_path(path.as_ref())?;
    let cfg = SimConfig { t_end: 20.0, sample_every: 500, ..sc.sim.clone() };
    let run = step_response(&sc.system, &cfg, true)?;
    print!("{}", trajectory_csv(&run.outcome.trajectory));
    eprintln!(
        "omega* = {:.6}, final deviation {:.2e}, error: {:?}",
        run.equilibrium.omega_star,
        run.final_deviation(),
        run.outcome.error
    );
    Ok(())
}
