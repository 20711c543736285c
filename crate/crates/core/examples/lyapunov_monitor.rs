//! Tracks the network Lyapunov function and its parts along a simulation.

use freqctl::analysis::{check_monotone_values, find_equilibrium, Lyapunov};
use freqctl::scenario::Scenario;
use freqctl::simulator::{simulate, SimConfig};
use freqctl::studies::pre_step_state;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sc = Scenario::from_path(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/mesh9.toml").as_ref())?;
    let eq = find_equilibrium(&sc.system)?;
    let v = Lyapunov::new(&sc.system, &eq)?;
    let cfg = SimConfig { t_end: 10.0, sample_every: 10, ..sc.sim.clone() };
    let traj = simulate(&sc.system, &cfg, &pre_step_state(&sc.system)?, Some(&v))?;

    println!("{:>6} {:>12} {:>12} {:>12} {:>12}", "t", "kinetic", "potential", "storage", "total");
    for s in traj.samples.iter().step_by(100) {
        let b = v.value(&s.state);
        let storage: f64 = b.storages.iter().sum();
        println!("{:>6.2} {:>12.3e} {:>12.3e} {:>12.3e} {:>12.3e}", s.state.t, b.v_f, b.v_p, storage, b.total);
    }
    let values: Vec<f64> = traj.samples.iter().map(|s| s.v.unwrap()).collect();
    let report = check_monotone_values(&traj.times(), &values);
    println!("nonincreasing: {} (largest step increase {:.1e})", report.passed, report.max_increase);
    Ok(())
}
