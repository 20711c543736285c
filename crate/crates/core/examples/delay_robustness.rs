//! Static and dynamic demand control behind a communication delay: the
//! passivity verdict next to what the simulation actually does.

use freqctl::scenario::Scenario;
use freqctl::studies::{delay_sweep, CONVERGENCE_TOL};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sc = Scenario::from_path(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/delay.toml").as_ref())?;
    let delays = [0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.08];
    let rows = delay_sweep(&sc.system, &sc.sim, &delays, 1.0, CONVERGENCE_TOL)?;
    println!("{:>6}  {:<8} {:<14} {:>8}  passive", "delay", "law", "outcome", "margin");
    for r in rows {
        println!(
            "{:>6.3}  {:<8} {:<14} {:>+8.4}  {}",
            r.delay,
            r.law.name(),
            r.verdict.name(),
            r.passivity_margin.unwrap_or(f64::NAN),
            r.passive
        );
    }
    Ok(())
}
