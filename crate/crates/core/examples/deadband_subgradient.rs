//! A deadband demand whose optimum sits on the kink of its cost.

use freqctl::analysis::oslc_problem;
use freqctl::oslc::{solve, verify_kkt};
use freqctl::scenario::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sc = Scenario::from_path(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/deadband.toml").as_ref())?;
    let problem = oslc_problem(&sc.system).ok_or("blocks do not imply costs")?;
    let sol = solve(&problem)?;
    println!("nu = {:.6}", sol.nu);
    for (cost, d) in problem.demands.iter().zip(&sol.d_c) {
        let (lo, hi) = cost.subdifferential(*d);
        println!("  demand {d:+.5}: subdifferential [{lo:+.4}, {hi:+.4}] contains nu: {}", lo <= sol.nu && sol.nu <= hi);
    }
    let kkt = verify_kkt(&problem, &sol, 1e-10);
    println!("subgradient KKT passed: {}", kkt.passed());
    println!("derivative equality would hold: {} (gap {:.4})", kkt.derivative_equality_holds(), kkt.derivative_gap);
    Ok(())
}
