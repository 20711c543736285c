//! Static characteristics and a step response of each controller block.

use freqctl::controllers::{
    make_deadband_droop, make_dynamic_oslc, make_static_oslc, make_turbine_governor, make_uncontrollable_load,
    CostFunction, Droop,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cost = CostFunction::quadratic(2.0)?.with_bounds(-0.1, 0.1)?;
    let blocks = [
        ("static OSLC", make_static_oslc(cost.clone())?),
        ("dynamic OSLC", make_dynamic_oslc(cost)?),
        ("turbine-governor", make_turbine_governor(0.5, 1.0, Droop::Linear { gain: 4.0 })?),
        ("deadband demand", make_deadband_droop(0.02, 0.1, 1.5)?),
        ("frequency-dependent load", make_uncontrollable_load(0.8)?),
    ];

    // u = -omega is the block input
    let inputs = [-0.3, -0.1, -0.05, 0.0, 0.05, 0.1, 0.3];
    print!("{:<26}", "u");
    for u in inputs {
        print!("{u:>9.2}");
    }
    println!();
    for (name, block) in &blocks {
        print!("{name:<26}");
        for u in inputs {
            print!("{:>9.4}", block.static_characteristic(u));
        }
        println!();
    }

    println!("\nturbine-governor output after a step u = -0.05:");
    let mut tg = blocks[2].1.clone();
    for k in 1..=3000 {
        let y = tg.step(-0.05, 1e-3)?;
        if k % 500 == 0 {
            println!("  t = {:.1} s  p^M = {y:+.5}", k as f64 * 1e-3);
        }
    }
    Ok(())
}
