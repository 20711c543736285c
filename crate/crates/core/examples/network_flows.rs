//! Line flows, bus mismatches and the phase angles of a post-step equilibrium.

use freqctl::analysis::find_equilibrium;
use freqctl::network::{line_flow, Bus, Line, NetworkModel};
use freqctl::scenario::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = NetworkModel::new(
        vec![Bus::generator(1, 1.0), Bus::load(2), Bus::load(3)],
        vec![Line::new(1, 2, 1.0), Line::new(2, 3, 2.0).with_nominal_flow(0.1)],
    );
    model.validate_topology()?;
    println!("tree: {}", model.is_tree());

    let eta = [std::f64::consts::FRAC_PI_6, 0.0];
    let flows: Vec<f64> = model.lines.iter().zip(eta).map(|(l, e)| line_flow(l, e)).collect();
    println!("flows at eta = (pi/6, 0): {flows:?}");
    for bus in [1, 2, 3] {
        println!("  bus {bus} mismatch with zero supply: {:+.4}", model.bus_mismatch(bus, 0.0, &flows)?);
    }

    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/mesh9.toml");
    let sc = Scenario::from_path(path.as_ref())?;
    let eq = find_equilibrium(&sc.system)?;
    println!("\nmesh9 equilibrium (tree: {}), omega* = {:.6}", eq.is_tree, eq.omega_star);
    for (l, (e, f)) in sc.system.model.lines.iter().zip(eq.eta.iter().zip(&eq.flows)) {
        println!("  {:>2} -> {:<2} eta = {:+.5} rad  flow = {:+.5}", l.from, l.to, e, f);
    }
    Ok(())
}
