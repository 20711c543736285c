//! Steady-state frequency with and without controllable demand.

use freqctl::analysis::steady_state_comparison;
use freqctl::scenario::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for name in ["ref3bus", "mesh9", "deadband"] {
        let path = format!("{}/scenarios/{name}.toml", env!("CARGO_MANIFEST_DIR"));
        let sc = Scenario::from_path(path.as_ref())?;
        let (with, without) = steady_state_comparison(&sc.system)?;
        println!(
            "{name:<9} with {with:+.6}  without {without:+.6}  drop reduced by {:.1}%",
            100.0 * (1.0 - with.abs() / without.abs())
        );
    }
    Ok(())
}
