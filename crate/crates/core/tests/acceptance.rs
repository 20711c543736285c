//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

mod common;

use std::time::{Duration, Instant};

use common::grid::{grid_oracle, Instance, Spec, H};
use freqctl::analysis::{find_equilibrium, oslc_problem, steady_state_comparison};
use freqctl::cli::{execute, Cli, Command, ScenarioArg};
use freqctl::controllers::{
    make_static_oslc, make_turbine_governor, make_uncontrollable_load, BlockKind, CostFunction, Droop, Role,
};
use freqctl::network::{Bus, Line, NetworkModel};
use freqctl::oslc::{self, verify_kkt};
use freqctl::passivity::{max_gain_ratio, tg_min_real};
use freqctl::simulator::{simulate, SimConfig};
use freqctl::studies::{delay_sweep, pre_step_state, step_response, OslcLaw, RunVerdict, CONVERGENCE_TOL};
use freqctl::system::{PlacedBlock, PowerSystem};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn random_system(rng: &mut StdRng) -> PowerSystem {
    let n = rng.gen_range(2..7);
    let mut buses = vec![Bus::generator(1, 1.0)];
    let mut lines = Vec::new();
    let mut blocks = Vec::new();
    for i in 1..n {
        let id = i as u32 + 1;
        buses.push(if rng.gen_bool(0.5) { Bus::generator(id, 0.5) } else { Bus::load(id) });
        lines.push(Line::new(rng.gen_range(1..=i) as u32, id, 5.0));
    }
    for b in &mut buses {
        b.load_step = rng.gen_range(-0.3..0.3);
    }
    for b in &buses {
        blocks.push(PlacedBlock::new(b.id, make_uncontrollable_load(rng.gen_range(0.2..2.0)).unwrap()));
        if b.is_generator() {
            let tg = make_turbine_governor(0.5, 0.5, Droop::Linear { gain: rng.gen_range(0.5..4.0) }).unwrap();
            blocks.push(PlacedBlock::new(b.id, tg));
        }
        if rng.gen_bool(0.7) {
            let cost = CostFunction::quadratic(rng.gen_range(0.5..10.0)).unwrap().with_bounds(-1.0, 1.0).unwrap();
            blocks.push(PlacedBlock::new(b.id, make_static_oslc(cost).unwrap()));
        }
    }
    if !blocks.iter().any(|pb| pb.block.role() == Role::ControllableDemand) {
        let cost = CostFunction::quadratic(1.0).unwrap().with_bounds(-1.0, 1.0).unwrap();
        blocks.push(PlacedBlock::new(1, make_static_oslc(cost).unwrap()));
    }
    PowerSystem::new(NetworkModel::new(buses, lines), blocks)
}

fn criterion_1() -> Outcome {
    let (with, without) = steady_state_comparison(&common::scenario("ref3bus").system).unwrap();
    let reference = (with + 1.0 / 3.0).abs() < 1e-10 && (without + 0.5).abs() < 1e-10;
    let mut violations = 0;
    for seed in 0..100 {
        let sys = random_system(&mut StdRng::seed_from_u64(seed));
        let (w, wo) = steady_state_comparison(&sys).unwrap();
        let p_l = sys.model.total_load_step();
        let strict = p_l.abs() < 1e-12 || w.abs() < wo.abs();
        if w.abs() > wo.abs() || !strict {
            violations += 1;
        }
    }
    outcome(reference && violations == 0, format!("ref3bus=({with:.12}, {without:.12}), random violations={violations}/100"))
}

fn criterion_2() -> Outcome {
    let mut worst_nu: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    let mut checked = Vec::new();
    for name in common::SCENARIOS {
        let sys = common::scenario(name).system;
        let Some(problem) = oslc_problem(&sys) else { continue };
        let eq = find_equilibrium(&sys).unwrap();
        let sol = oslc::solve(&problem).unwrap();
        worst_nu = worst_nu.max((eq.omega_star - sol.nu).abs());
        worst_kkt = worst_kkt.max(verify_kkt(&problem, &sol, 1e-10).max_residual());
        checked.push(name);
    }
    outcome(
        worst_nu < 1e-10 && worst_kkt < 1e-10 && !checked.is_empty(),
        format!("scenarios={checked:?} max|omega*-nu|={worst_nu:e} max kkt residual={worst_kkt:e}"),
    )
}

fn random_spec(rng: &mut StdRng) -> Spec {
    let grid = |x: f64| (x / H).round() * H;
    Spec {
        alpha: rng.gen_range(0.5..5.0),
        kink: rng.gen_bool(0.5).then(|| (rng.gen_range(-0.3..0.3), rng.gen_range(0.05..1.0))),
        lower: grid(rng.gen_range(-0.5..-0.05)),
        upper: grid(rng.gen_range(0.05..0.5)),
    }
}

fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let rng = &mut StdRng::seed_from_u64(1000 + seed);
        let n_g = rng.gen_range(1..=3);
        let n_d = rng.gen_range(0..=3);
        let inst = Instance {
            generators: (0..n_g).map(|_| random_spec(rng)).collect(),
            demands: (0..n_d).map(|_| random_spec(rng)).collect(),
            damping: rng.gen_range(0.1..2.0),
            load: rng.gen_range(-1000..=1000),
        };
        let sol = oslc::solve(&inst.problem()).unwrap();
        let (p_m, d_c, d_u) = grid_oracle(&inst);
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        worst = worst.max(diff(&sol.p_m, &p_m)).max(diff(&sol.d_c, &d_c)).max((sol.d_u[0] - d_u).abs());
    }
    outcome(worst <= 2e-3, format!("50 instances, max coordinate gap to grid optimum={worst:e}"))
}

fn criterion_4() -> Outcome {
    let sc = common::scenario("mesh9");
    let run = step_response(&sc.system, &sc.sim, false).unwrap();
    let last = run.outcome.trajectory.last();
    let mut marginal = Vec::new();
    let (mut cheap, mut dear) = (Vec::new(), Vec::new());
    for (k, pb) in sc.system.blocks.iter().enumerate() {
        let BlockKind::DynamicOslc { cost } = pb.block.kind() else { continue };
        let d = last.state.blocks[k][0];
        if d <= cost.lower() + 1e-9 || d >= cost.upper() - 1e-9 {
            continue;
        }
        marginal.push(cost.derivative_left(d));
        match cost.curvature(d) {
            Some(a) if (a - 5.0).abs() < 1e-12 => cheap.push(d),
            Some(a) if (a - 10.0).abs() < 1e-12 => dear.push(d),
            _ => {}
        }
    }
    let spread = marginal.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - marginal.iter().cloned().fold(f64::INFINITY, f64::min);
    let worst_ratio = cheap
        .iter()
        .flat_map(|c| dear.iter().map(move |d| (c / d - 2.0).abs()))
        .fold(0.0, f64::max);
    outcome(
        run.outcome.error.is_none() && marginal.len() == 6 && spread < 1e-4 && worst_ratio < 1e-3,
        format!("unsaturated={} marginal spread={spread:e} max |ratio-2|={worst_ratio:e}", marginal.len()),
    )
}

fn criterion_5() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for name in common::SCENARIOS {
        let sc = common::scenario(name);
        let run = step_response(&sc.system, &sc.sim, true).unwrap();
        let mono = run.monotone.as_ref();
        let pass = run.converged(CONVERGENCE_TOL)
            && run.outcome.trajectory.last().state.t >= 60.0 - 1e-9
            && mono.is_some_and(|m| m.passed);
        ok &= pass;
        lines.push(format!(
            "{name}: dev={:.1e} dV+max={:.1e}",
            run.final_deviation(),
            mono.map_or(f64::NAN, |m| m.max_increase)
        ));
    }
    outcome(ok, lines.join("; "))
}

fn criterion_6() -> Outcome {
    let at_one = max_gain_ratio(1.0);
    let at_small = max_gain_ratio(0.01);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        for j in 0..20 {
            let tg = 10f64.powf(-2.0 + 4.0 * i as f64 / 19.0);
            let tb = 10f64.powf(-2.0 + 4.0 * j as f64 / 19.0);
            let (v, _) = tg_min_real(tg, tb).unwrap();
            worst = worst.max((v - common::tg_brute_min(tg, tb)).abs());
        }
    }
    outcome(
        (at_one - 8.0).abs() < 1e-9 && worst < 1e-8 && at_small > 100.0,
        format!("ratio(1)={at_one:.12} ratio(0.01)={at_small:.3} max closed-form gap={worst:e}"),
    )
}

fn criterion_7() -> Outcome {
    let sc = common::scenario("delay");
    let rows = delay_sweep(&sc.system, &sc.sim, &[0.05], 1.0, CONVERGENCE_TOL).unwrap();
    let row = |law| rows.iter().find(|r| r.law == law).unwrap();
    let (s, d) = (row(OslcLaw::Static), row(OslcLaw::Dynamic));
    let diverged = matches!(s.verdict, RunVerdict::Diverged { t } if t < sc.sim.t_end);
    let pass = diverged && d.verdict == RunVerdict::Converged && !s.passive && d.passive && s.agrees() && d.agrees();
    outcome(
        pass,
        format!(
            "static: {:?} margin={:.4}; dynamic: {} margin={:.4}",
            s.verdict,
            s.passivity_margin.unwrap_or(f64::NAN),
            d.verdict.name(),
            d.passivity_margin.unwrap_or(f64::NAN)
        ),
    )
}

fn criterion_8() -> Outcome {
    let sc = common::scenario("deadband");
    let problem = oslc_problem(&sc.system).unwrap();
    let sol = oslc::solve(&problem).unwrap();
    let kkt = verify_kkt(&problem, &sol, 1e-10);
    let run = step_response(&sc.system, &sc.sim, false).unwrap();
    let last = run.outcome.trajectory.last();
    // per-bus totals from the OSLC solution, in block order
    let n = sc.system.model.buses.len();
    let (mut p_m, mut d_c) = (vec![0.0; n], vec![0.0; n]);
    let (mut g, mut d) = (0, 0);
    for pb in &sc.system.blocks {
        let i = sc.system.model.bus_index(pb.bus).unwrap();
        match pb.block.role() {
            Role::Generation => {
                p_m[i] += sol.p_m[g];
                g += 1;
            }
            Role::ControllableDemand => {
                d_c[i] += sol.d_c[d];
                d += 1;
            }
            Role::UncontrollableDemand => {}
        }
    }
    let gap = p_m
        .iter()
        .zip(&last.p_m)
        .chain(d_c.iter().zip(&last.d_c))
        .map(|(a, b)| (a - b).abs())
        .chain(last.omega.iter().map(|w| (w - sol.nu).abs()))
        .fold(0.0, f64::max);
    outcome(
        kkt.passed() && !kkt.derivative_equality_holds() && gap < 1e-3,
        format!(
            "kkt residual={:e} derivative gap={:.4} steady-state gap={gap:e}",
            kkt.max_residual(),
            kkt.derivative_gap
        ),
    )
}

fn criterion_9() -> Outcome {
    let sys = common::scenario("tg_droop").system;
    let run = |dt: f64| {
        let cfg = SimConfig { dt, t_end: 2.0, sample_every: usize::MAX / 2, ..SimConfig::default() };
        simulate(&sys, &cfg, &pre_step_state(&sys).unwrap(), None).unwrap().last().omega.clone()
    };
    let reference = run(0.05 / 16.0);
    let err = |v: Vec<f64>| v.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let ratio = err(run(0.05)) / err(run(0.025));
    let order_ok = (ratio - 16.0).abs() <= 0.2 * 16.0;

    let sc = common::scenario("mesh9");
    let mut flipped = sc.system.clone();
    for l in &mut flipped.model.lines {
        *l = l.flipped();
    }
    let cfg = SimConfig { t_end: 10.0, ..sc.sim.clone() };
    let a = simulate(&sc.system, &cfg, &pre_step_state(&sc.system).unwrap(), None).unwrap();
    let b = simulate(&flipped, &cfg, &pre_step_state(&flipped).unwrap(), None).unwrap();
    let mut flip_gap: f64 = 0.0;
    for (x, y) in a.samples.iter().zip(&b.samples) {
        for (u, v) in x.omega.iter().zip(&y.omega) {
            flip_gap = flip_gap.max((u - v).abs());
        }
        for (u, v) in x.state.eta.iter().zip(&y.state.eta) {
            flip_gap = flip_gap.max((u + v).abs());
        }
    }

    let cli = |threads: usize| {
        let c = Cli {
            command: Command::Simulate(ScenarioArg { scenario: common::scenario_path("ref3bus") }),
            out: ".".into(),
            seed: None,
            threads: Some(threads),
        };
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| execute(&c).unwrap())
    };
    let identical = cli(1) == cli(1) && cli(1) == cli(4);
    outcome(
        order_ok && flip_gap < 1e-9 && identical,
        format!("order ratio={ratio:.2} flip gap={flip_gap:e} identical artifacts={identical}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        ("demand control lowers the frequency drop", criterion_1, Duration::from_secs(1)),
        ("equilibrium frequency equals the OSLC multiplier", criterion_2, Duration::from_secs(1)),
        ("OSLC matches grid search", criterion_3, Duration::from_secs(30)),
        ("marginal costs equalize on mesh9", criterion_4, Duration::from_secs(10)),
        ("convergence and Lyapunov decrease", criterion_5, Duration::from_secs(30)),
        ("turbine-governor passivity closed forms", criterion_6, Duration::from_secs(5)),
        ("delay contrast", criterion_7, Duration::from_secs(20)),
        ("subgradient optimality at a kink", criterion_8, Duration::from_secs(10)),
        ("numerical hygiene", criterion_9, Duration::from_secs(20)),
    ];
    let mut failed = 0;
    for (k, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let elapsed = start.elapsed();
        let pass = o.passed && elapsed <= *limit;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {} {}: {} ({}; {:.2}s of {}s)",
            k + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
