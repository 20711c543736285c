mod common;

use freqctl::analysis::{equilibrium_residuals, find_equilibrium, oslc_problem};
use freqctl::controllers::{
    make_dynamic_oslc, make_static_oslc, make_turbine_governor, make_uncontrollable_load, CostFunction, Droop,
};
use freqctl::network::{Bus, Line, NetworkModel};
use freqctl::oslc;
use freqctl::simulator::{simulate, SimConfig};
use freqctl::studies::pre_step_state;
use freqctl::system::{PlacedBlock, PowerSystem};
use proptest::prelude::*;

fn final_omega(system: &PowerSystem, dt: f64, t_end: f64) -> Vec<f64> {
    let cfg = SimConfig { dt, t_end, sample_every: usize::MAX / 2, ..SimConfig::default() };
    let init = pre_step_state(system).unwrap();
    simulate(system, &cfg, &init, None).unwrap().last().omega.clone()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn rk4_error_shrinks_sixteenfold() {
    let sys = common::scenario("tg_droop").system;
    let reference = final_omega(&sys, 0.05 / 16.0, 2.0);
    let coarse = max_diff(&final_omega(&sys, 0.05, 2.0), &reference);
    let fine = max_diff(&final_omega(&sys, 0.025, 2.0), &reference);
    let ratio = coarse / fine;
    assert!((ratio - 16.0).abs() < 0.2 * 16.0, "ratio {ratio} (errors {coarse:e}, {fine:e})");
}

#[test]
fn flipping_line_orientation_mirrors_angles_only() {
    for name in ["ref3bus", "mesh9"] {
        let sc = common::scenario(name);
        let mut flipped = sc.system.clone();
        for l in &mut flipped.model.lines {
            *l = l.flipped();
        }
        let cfg = SimConfig { t_end: 5.0, sample_every: 50, ..sc.sim.clone() };
        let a = simulate(&sc.system, &cfg, &pre_step_state(&sc.system).unwrap(), None).unwrap();
        let b = simulate(&flipped, &cfg, &pre_step_state(&flipped).unwrap(), None).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert!(max_diff(&x.omega, &y.omega) < 1e-9, "{name}");
            let neg: Vec<f64> = y.state.eta.iter().map(|e| -e).collect();
            assert!(max_diff(&x.state.eta, &neg) < 1e-9, "{name}");
            assert!(max_diff(&x.d_c, &y.d_c) < 1e-9, "{name}");
        }
    }
}

#[test]
fn repeated_runs_are_identical() {
    let sc = common::scenario("mesh9");
    let cfg = SimConfig { t_end: 2.0, ..sc.sim.clone() };
    let init = pre_step_state(&sc.system).unwrap();
    let a = simulate(&sc.system, &cfg, &init, None).unwrap();
    let b = simulate(&sc.system, &cfg, &init, None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn zero_load_step_stays_flat() {
    let mut sys = common::scenario("ref3bus").system;
    for b in &mut sys.model.buses {
        b.load_step = 0.0;
    }
    let cfg = SimConfig { t_end: 5.0, ..SimConfig::default() };
    let traj = simulate(&sys, &cfg, &pre_step_state(&sys).unwrap(), None).unwrap();
    for s in &traj.samples {
        assert!(s.omega.iter().all(|w| w.abs() < 1e-14));
    }
}

/// Random tree: bus 0 is a generator; each later bus attaches to an earlier one.
#[derive(Debug, Clone)]
struct Tree {
    parents: Vec<usize>,
    generator: Vec<bool>,
    gains: Vec<f64>,
    dampings: Vec<f64>,
    alphas: Vec<f64>,
    dynamic: Vec<bool>,
    steps: Vec<f64>,
}

impl Tree {
    fn system(&self) -> PowerSystem {
        let n = self.generator.len();
        let buses = (0..n)
            .map(|i| {
                let b = if self.generator[i] { Bus::generator(i as u32 + 1, 0.5 + 0.1 * i as f64) } else { Bus::load(i as u32 + 1) };
                b.with_load_step(self.steps[i])
            })
            .collect();
        let lines = (1..n).map(|i| Line::new(self.parents[i - 1] as u32 + 1, i as u32 + 1, 4.0)).collect();
        let mut blocks = Vec::new();
        for i in 0..n {
            let bus = i as u32 + 1;
            blocks.push(PlacedBlock::new(bus, make_uncontrollable_load(self.dampings[i]).unwrap()));
            if self.generator[i] {
                let tg = make_turbine_governor(0.4, 0.6, Droop::Linear { gain: self.gains[i] }).unwrap();
                blocks.push(PlacedBlock::new(bus, tg));
            }
            let cost = CostFunction::quadratic(self.alphas[i]).unwrap().with_bounds(-0.3, 0.3).unwrap();
            let demand = if self.dynamic[i] { make_dynamic_oslc(cost) } else { make_static_oslc(cost) };
            blocks.push(PlacedBlock::new(bus, demand.unwrap()));
        }
        PowerSystem::new(NetworkModel::new(buses, lines), blocks)
    }
}

fn tree() -> impl Strategy<Value = Tree> {
    (2usize..7).prop_flat_map(|n| {
        (
            (1..n).map(|i| 0..i).collect::<Vec<_>>(),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(0.5..4.0f64, n),
            prop::collection::vec(0.2..2.0f64, n),
            prop::collection::vec(1.0..10.0f64, n),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(-0.3..0.3f64, n),
        )
            .prop_map(|(parents, mut generator, gains, dampings, alphas, dynamic, steps)| {
                generator[0] = true;
                Tree { parents, generator, gains, dampings, alphas, dynamic, steps }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn equilibrium_frequency_is_the_balance_multiplier(t in tree()) {
        let sys = t.system();
        let eq = find_equilibrium(&sys).unwrap();
        let sol = oslc::solve(&oslc_problem(&sys).unwrap()).unwrap();
        prop_assert!((eq.omega_star - sol.nu).abs() < 1e-10);
        for (name, r) in equilibrium_residuals(&sys, &eq) {
            prop_assert!(r < 1e-10, "{name}: {r}");
        }
    }

    #[test]
    fn orientation_does_not_change_the_equilibrium(t in tree()) {
        let sys = t.system();
        let mut flipped = sys.clone();
        for l in &mut flipped.model.lines {
            *l = l.flipped();
        }
        let a = find_equilibrium(&sys).unwrap();
        let b = find_equilibrium(&flipped).unwrap();
        prop_assert!((a.omega_star - b.omega_star).abs() < 1e-12);
        for (x, y) in a.eta.iter().zip(&b.eta) {
            prop_assert!((x + y).abs() < 1e-9);
        }
    }
}
