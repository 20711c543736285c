use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};

use super::AnalysisError;
use crate::controllers::Role;
use crate::network::{line_flow, BusId, NetworkModel, Topology};
use crate::numeric::decreasing_root;
use crate::oslc::OslcProblem;
use crate::simulator::SimState;
use crate::system::PowerSystem;

/// Residual bound for every equilibrium condition.
const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSolution {
    pub omega_star: f64,
    pub bus_ids: Vec<BusId>,
    pub eta: Vec<f64>,
    pub flows: Vec<f64>,
    pub p_m: Vec<f64>,
    pub d_c: Vec<f64>,
    pub d_u: Vec<f64>,
    pub block_states: Vec<Vec<f64>>,
    pub block_outputs: Vec<f64>,
    /// Flows are unique on trees; on meshed networks this is one solution.
    pub is_tree: bool,
    /// The aggregate balance vanished on an interval of frequencies.
    pub degenerate: bool,
    pub max_residual: f64,
}

impl EquilibriumSolution {
    /// The equilibrium as a simulator state at `t = 0`.
    pub fn to_state(&self, system: &PowerSystem) -> SimState {
        let n_gen = system.model.buses.iter().filter(|b| b.is_generator()).count();
        SimState {
            t: 0.0,
            eta: self.eta.clone(),
            omega_gen: vec![self.omega_star; n_gen],
            omega_load: Vec::new(),
            blocks: self.block_states.clone(),
        }
    }
}

fn aggregate_balance(system: &PowerSystem, omega: f64) -> f64 {
    let supply: f64 = system
        .blocks
        .iter()
        .map(|pb| pb.block.supply_sign() * pb.block.static_characteristic(-omega))
        .sum();
    supply - system.model.total_load_step()
}

/// Newton residual `P_b + inflow_b(theta)` for buses 1.., bus 0 pinned.
fn angle_residual(model: &NetworkModel, topo: &Topology, inj: &[f64], theta: &[f64]) -> DVector<f64> {
    let flows: Vec<f64> = model
        .lines
        .iter()
        .zip(&topo.ends)
        .map(|(l, &(i, j))| line_flow(l, theta[i] - theta[j]))
        .collect();
    DVector::from_iterator(inj.len() - 1, (1..inj.len()).map(|b| inj[b] + topo.inflow(b, &flows)))
}

fn angle_jacobian(model: &NetworkModel, topo: &Topology, theta: &[f64]) -> DMatrix<f64> {
    let n = theta.len();
    let mut full = DMatrix::zeros(n, n);
    for (l, &(i, j)) in model.lines.iter().zip(&topo.ends) {
        let c = l.susceptance * (theta[i] - theta[j]).cos();
        full[(i, i)] -= c;
        full[(i, j)] += c;
        full[(j, i)] += c;
        full[(j, j)] -= c;
    }
    full.view((1, 1), (n - 1, n - 1)).into_owned()
}

fn newton_angles(
    model: &NetworkModel,
    topo: &Topology,
    inj: &[f64],
    start: &[f64],
) -> Option<(Vec<f64>, f64)> {
    let mut theta = start.to_vec();
    let mut r = angle_residual(model, topo, inj, &theta);
    let mut norm = r.amax();
    for _ in 0..100 {
        if norm < 1e-14 {
            break;
        }
        let jac = angle_jacobian(model, topo, &theta);
        let step = jac.lu().solve(&r)?;
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let mut trial = theta.clone();
            for b in 1..theta.len() {
                trial[b] -= scale * step[b - 1];
            }
            let tr = angle_residual(model, topo, inj, &trial);
            if tr.amax() < norm {
                theta = trial;
                r = tr;
                norm = r.amax();
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if !improved {
            break;
        }
    }
    theta.iter().all(|t| t.is_finite()).then_some((theta, norm))
}

fn secure(topo: &Topology, theta: &[f64]) -> bool {
    topo.ends.iter().all(|&(i, j)| (theta[i] - theta[j]).abs() < FRAC_PI_2)
}

fn solve_angles(model: &NetworkModel, topo: &Topology, inj: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    let n = inj.len();
    if n == 1 {
        return Ok(vec![0.0]);
    }
    let zero = vec![0.0; n];
    if let Some((theta, res)) = newton_angles(model, topo, inj, &zero) {
        if res < RESIDUAL_TOL * 0.01 && secure(topo, &theta) {
            return Ok(theta);
        }
    }
    // homotopy in the injection level from the flat start
    let mut theta = zero;
    let mut last = f64::INFINITY;
    for k in 1..=10 {
        let lambda = k as f64 / 10.0;
        let scaled: Vec<f64> = inj.iter().map(|p| lambda * p).collect();
        match newton_angles(model, topo, &scaled, &theta) {
            Some((t, res)) => {
                theta = t;
                last = res;
            }
            None => return Err(AnalysisError::AngleSolveFailed { residual: last }),
        }
    }
    if last < RESIDUAL_TOL * 0.01 {
        Ok(theta)
    } else {
        Err(AnalysisError::AngleSolveFailed { residual: last })
    }
}

/// Equilibrium of the closed loop: common frequency from the aggregate
/// static balance, then phase angles from the per-bus injections.
pub fn find_equilibrium(system: &PowerSystem) -> Result<EquilibriumSolution, AnalysisError> {
    system.validate_placement()?;
    let model = &system.model;
    let root = decreasing_root(|w| aggregate_balance(system, w), 1e12).ok_or(AnalysisError::BalanceInfeasible)?;
    let omega = root.value;
    let u = -omega;

    let n_bus = model.buses.len();
    let topo = Topology::new(model);
    let bus_of = system.block_bus_indices();
    let block_states: Vec<Vec<f64>> = system.blocks.iter().map(|pb| pb.block.equilibrium_state(u)).collect();
    let block_outputs: Vec<f64> = system.blocks.iter().map(|pb| pb.block.static_characteristic(u)).collect();
    let (mut p_m, mut d_c, mut d_u) = (vec![0.0; n_bus], vec![0.0; n_bus], vec![0.0; n_bus]);
    for (k, pb) in system.blocks.iter().enumerate() {
        let b = bus_of[k];
        match pb.block.role() {
            Role::Generation => p_m[b] += block_outputs[k],
            Role::ControllableDemand => d_c[b] += block_outputs[k],
            Role::UncontrollableDemand => d_u[b] += block_outputs[k],
        }
    }
    let injections: Vec<f64> =
        (0..n_bus).map(|b| -model.buses[b].load_step + p_m[b] - d_c[b] - d_u[b]).collect();
    let theta = solve_angles(model, &topo, &injections)?;
    let eta: Vec<f64> = topo.ends.iter().map(|&(i, j)| theta[i] - theta[j]).collect();
    for (l, &e) in model.lines.iter().zip(&eta) {
        if e.abs() >= FRAC_PI_2 {
            return Err(AnalysisError::SecurityViolated { from: l.from, to: l.to, eta: e });
        }
    }
    let flows = model.lines.iter().zip(&eta).map(|(l, &e)| line_flow(l, e)).collect();
    let mut eq = EquilibriumSolution {
        omega_star: omega,
        bus_ids: model.buses.iter().map(|b| b.id).collect(),
        eta,
        flows,
        p_m,
        d_c,
        d_u,
        block_states,
        block_outputs,
        is_tree: model.is_tree(),
        degenerate: root.plateau,
        max_residual: 0.0,
    };
    let residuals = equilibrium_residuals(system, &eq);
    for (condition, residual) in &residuals {
        if !(*residual < RESIDUAL_TOL) {
            return Err(AnalysisError::ResidualTooLarge { condition: condition.clone(), residual: *residual });
        }
    }
    eq.max_residual = residuals.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(eq)
}

/// Independent re-check of the equilibrium conditions, recomputed from the
/// model rather than taken from the solver.
pub fn equilibrium_residuals(system: &PowerSystem, eq: &EquilibriumSolution) -> Vec<(String, f64)> {
    let model = &system.model;
    let u = -eq.omega_star;
    let flows: Vec<f64> = model.lines.iter().zip(&eq.eta).map(|(l, &e)| line_flow(l, e)).collect();
    let mut out = Vec::new();
    let flow_law = flows.iter().zip(&eq.flows).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    out.push(("line flow law".to_string(), flow_law));

    let mut gen_balance: f64 = 0.0;
    let mut load_balance: f64 = 0.0;
    for bus in &model.buses {
        let supply: f64 = system
            .blocks_at(bus.id)
            .map(|(k, pb)| pb.block.supply_sign() * pb.block.output(&eq.block_states[k], u))
            .sum();
        let m = model.bus_mismatch(bus.id, supply, &flows).map(f64::abs).unwrap_or(f64::INFINITY);
        if bus.is_generator() {
            gen_balance = gen_balance.max(m);
        } else {
            load_balance = load_balance.max(m);
        }
    }
    out.push(("generator bus balance".to_string(), gen_balance));
    out.push(("load bus balance".to_string(), load_balance));

    let mut drift: f64 = 0.0;
    let mut output: f64 = 0.0;
    for (k, pb) in system.blocks.iter().enumerate() {
        let x = &eq.block_states[k];
        let mut f = vec![0.0; x.len()];
        pb.block.drift(x, u, &mut f);
        drift = f.iter().fold(drift, |a, v| a.max(v.abs()));
        output = output.max((pb.block.output(x, u) - eq.block_outputs[k]).abs());
    }
    out.push(("block state equilibrium".to_string(), drift));
    out.push(("block output".to_string(), output));

    let du: f64 = system
        .blocks
        .iter()
        .filter_map(|pb| pb.block.damping())
        .map(|d| d * eq.omega_star)
        .sum::<f64>()
        - eq.d_u.iter().sum::<f64>();
    out.push(("uncontrollable demand".to_string(), du.abs()));
    out
}

/// OSLC problem whose optimal control laws are the system's blocks, when
/// every generation and controllable demand block implies a cost.
pub fn oslc_problem(system: &PowerSystem) -> Option<OslcProblem> {
    let mut p = OslcProblem { generators: vec![], demands: vec![], dampings: vec![], load_steps: vec![] };
    for pb in &system.blocks {
        match pb.block.role() {
            Role::Generation => p.generators.push(pb.block.implied_cost()?),
            Role::ControllableDemand => p.demands.push(pb.block.implied_cost()?),
            Role::UncontrollableDemand => p.dampings.push(pb.block.damping()?),
        }
    }
    p.load_steps = system.model.buses.iter().map(|b| b.load_step).collect();
    Some(p)
}

/// Equilibrium frequency with all controllable demand enabled, then removed.
pub fn steady_state_comparison(system: &PowerSystem) -> Result<(f64, f64), AnalysisError> {
    if !system.has_role(Role::ControllableDemand) {
        return Err(AnalysisError::NoControllableDemand);
    }
    let with = find_equilibrium(system)?.omega_star;
    let without = find_equilibrium(&system.without_controllable_demand())?.omega_star;
    Ok((with, without))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::*;
    use crate::network::{Bus, Line};
    use crate::system::PlacedBlock;
    use std::f64::consts::PI;

    #[test]
    fn nominal_is_zero() {
        let model = NetworkModel::new(vec![Bus::generator(1, 1.0), Bus::load(2)], vec![Line::new(1, 2, 1.0)]);
        let sys = PowerSystem::new(
            model,
            vec![
                PlacedBlock::new(1, make_uncontrollable_load(1.0).unwrap()),
                PlacedBlock::new(2, make_uncontrollable_load(1.0).unwrap()),
            ],
        );
        let eq = find_equilibrium(&sys).unwrap();
        assert_eq!(eq.omega_star, 0.0);
        assert_eq!(eq.eta, vec![0.0]);
    }

    #[test]
    fn transfer_of_one_half() {
        // generator with fixed supply 0.5 (steep droop pinned by load) feeding a load bus
        let model = NetworkModel::new(
            vec![Bus::generator(1, 1.0).with_load_step(-0.5), Bus::load(2).with_load_step(0.5)],
            vec![Line::new(1, 2, 1.0)],
        );
        let sys = PowerSystem::new(
            model,
            vec![
                PlacedBlock::new(1, make_uncontrollable_load(1.0).unwrap()),
                PlacedBlock::new(2, make_uncontrollable_load(1.0).unwrap()),
            ],
        );
        let eq = find_equilibrium(&sys).unwrap();
        assert_eq!(eq.omega_star, 0.0);
        assert!((eq.eta[0] - PI / 6.0).abs() < 1e-12);
    }

    #[test]
    fn insecure_transfer_rejected() {
        let model = NetworkModel::new(
            vec![Bus::generator(1, 1.0).with_load_step(-2.0), Bus::load(2).with_load_step(2.0)],
            vec![Line::new(1, 2, 1.0)],
        );
        let sys = PowerSystem::new(
            model,
            vec![
                PlacedBlock::new(1, make_uncontrollable_load(1.0).unwrap()),
                PlacedBlock::new(2, make_uncontrollable_load(1.0).unwrap()),
            ],
        );
        assert!(find_equilibrium(&sys).is_err());
    }
}
