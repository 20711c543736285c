//! Optimal supply and load control: two generators, two flexible loads and
//! a frequency-dependent load sharing a unit load step.

use freqctl::controllers::CostFunction;
use freqctl::oslc::{generalized_inverse, solve, verify_kkt, OslcProblem};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = OslcProblem {
        generators: vec![CostFunction::quadratic(1.0)?.with_bounds(0.0, 0.4)?, CostFunction::quadratic(2.0)?],
        demands: vec![CostFunction::quadratic(5.0)?, CostFunction::quadratic(10.0)?.with_bounds(-0.05, 0.05)?],
        dampings: vec![1.0],
        load_steps: vec![1.0],
    };
    let sol = solve(&problem)?;
    println!("multiplier nu = {:.6} ({:?})", sol.nu, sol.status);
    println!("generation  {:?}", sol.p_m);
    println!("flex demand {:?}", sol.d_c);
    println!("damping     {:?}", sol.d_u);
    println!("upper-bound multipliers on generation {:?}", sol.lambda_plus);

    let kkt = verify_kkt(&problem, &sol, 1e-10);
    println!("KKT max residual {:.1e}, passed {}", kkt.max_residual(), kkt.passed());

    // the same dispatch read off the clipped marginal-cost inverses
    let g = generalized_inverse(&problem.generators[1]);
    println!("second generator from its inverse: {:.6}", g.eval(-sol.nu));
    Ok(())
}
