//! Fixed-step integration of the swing-equation network with controller
//! blocks. Load-bus frequencies are eliminated algebraically at every stage.

use thiserror::Error;

use crate::analysis::Lyapunov;
use crate::controllers::{ControllerBlock, Role};
use crate::network::{line_flow, BusId, Topology};
use crate::system::{PowerSystem, SystemError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("initial state does not match the system: {0}")]
    Dimension(String),
    #[error("algebraic solve for load bus {bus} failed at t={t} (residual {residual})")]
    AlgebraicSolveFailed { bus: BusId, t: f64, residual: f64 },
    #[error("state became non-finite or exceeded the divergence threshold at t={t}")]
    NonFiniteState { t: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Zero-order hold period on controllable-demand inputs; 0 means continuous.
    pub control_hold: f64,
    pub algebraic_tol: f64,
    pub algebraic_max_iter: usize,
    /// States larger than this in magnitude count as divergence.
    pub divergence_threshold: f64,
    /// Fictitious inertia turning load-bus balances into ODEs. Debugging aid.
    pub load_inertia: Option<f64>,
    /// Record every n-th step.
    pub sample_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 60.0,
            control_hold: 0.0,
            algebraic_tol: 1e-12,
            algebraic_max_iter: 50,
            divergence_threshold: 1e6,
            load_inertia: None,
            sample_every: 1,
        }
    }
}

impl SimConfig {
    /// Number of steps and hold length in steps.
    fn resolve(&self) -> Result<(usize, usize), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= self.dt) || !self.t_end.is_finite() {
            return bad(format!("t_end {} must be at least dt {}", self.t_end, self.dt));
        }
        if !(self.algebraic_tol > 0.0) || self.algebraic_max_iter == 0 {
            return bad("algebraic tolerance and iteration cap must be positive".into());
        }
        if !(self.divergence_threshold > 0.0) || self.sample_every == 0 {
            return bad("divergence threshold and sample stride must be positive".into());
        }
        if let Some(m) = self.load_inertia {
            if !(m > 0.0 && m.is_finite()) {
                return bad(format!("load inertia must be positive, got {m}"));
            }
        }
        let steps = (self.t_end / self.dt + 1e-9).floor() as usize;
        let hold = if self.control_hold > 0.0 {
            let ratio = self.control_hold / self.dt;
            let n = ratio.round();
            if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
                return bad(format!("control hold {} must be a multiple of dt {}", self.control_hold, self.dt));
            }
            n as usize
        } else if self.control_hold == 0.0 {
            0
        } else {
            return bad(format!("control hold must be nonnegative, got {}", self.control_hold));
        };
        Ok((steps, hold))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    /// Phase differences, one per line.
    pub eta: Vec<f64>,
    /// Frequency deviations of generator buses in bus order.
    pub omega_gen: Vec<f64>,
    /// Load-bus frequencies; only present when load inertia is regularized.
    pub omega_load: Vec<f64>,
    /// Controller block states in block order.
    pub blocks: Vec<Vec<f64>>,
}

impl SimState {
    /// Pre-step nominal operating point: zero deviations, blocks at rest.
    pub fn nominal(system: &PowerSystem) -> Self {
        let n_gen = system.model.buses.iter().filter(|b| b.is_generator()).count();
        Self {
            t: 0.0,
            eta: vec![0.0; system.model.lines.len()],
            omega_gen: vec![0.0; n_gen],
            omega_load: Vec::new(),
            blocks: system.blocks.iter().map(|pb| pb.block.equilibrium_state(0.0)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub state: SimState,
    /// Frequency at every bus, including solved load buses.
    pub omega: Vec<f64>,
    pub flows: Vec<f64>,
    /// Per-bus mechanical power, controllable demand and uncontrollable demand.
    pub p_m: Vec<f64>,
    pub d_c: Vec<f64>,
    pub d_u: Vec<f64>,
    pub v: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub bus_ids: Vec<BusId>,
    pub line_ends: Vec<(BusId, BusId)>,
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.state.t).collect()
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn lyapunov(&self) -> Option<Vec<f64>> {
        self.samples.iter().map(|s| s.v).collect()
    }
}

/// Outcome of a run: the trajectory up to the end or up to the failure.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub trajectory: Trajectory,
    pub error: Option<SimError>,
}

impl SimOutcome {
    pub fn into_result(self) -> Result<Trajectory, SimError> {
        match self.error {
            None => Ok(self.trajectory),
            Some(e) => Err(e),
        }
    }
}

struct Evaluation {
    omega: Vec<f64>,
    flows: Vec<f64>,
    outputs: Vec<f64>,
}

struct Engine<'a> {
    sys: &'a PowerSystem,
    cfg: &'a SimConfig,
    topo: Topology,
    block_bus: Vec<usize>,
    offsets: Vec<usize>,
    gen_slot: Vec<Option<usize>>,
    n_eta: usize,
    n_gen: usize,
    n_load_dyn: usize,
    blocks: Vec<ControllerBlock>,
    held: Vec<Option<f64>>,
    load_seed: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn new(sys: &'a PowerSystem, cfg: &'a SimConfig, hold_active: bool) -> Result<Self, SimError> {
        let held: Vec<Option<f64>> = sys
            .blocks
            .iter()
            .map(|pb| (hold_active && pb.block.role() == Role::ControllableDemand).then_some(0.0))
            .collect();
        if cfg.load_inertia.is_some() {
            sys.validate_placement()?;
        } else {
            let indirect: Vec<bool> = held.iter().map(Option::is_some).collect();
            sys.validate_with(&indirect)?;
        }
        let topo = sys.topology();
        let n_bus = sys.model.buses.len();
        let mut gen_slot = vec![None; n_bus];
        for (k, &b) in topo.generators.iter().enumerate() {
            gen_slot[b] = Some(k);
        }
        let n_eta = sys.model.lines.len();
        let n_gen = topo.generators.len();
        let n_load_dyn = if cfg.load_inertia.is_some() { topo.loads.len() } else { 0 };
        let mut offsets = Vec::with_capacity(sys.blocks.len());
        let mut off = n_eta + n_gen + n_load_dyn;
        for pb in &sys.blocks {
            offsets.push(off);
            off += pb.block.state_dim();
        }
        Ok(Self {
            block_bus: sys.block_bus_indices(),
            blocks: sys.blocks.iter().map(|pb| pb.block.clone()).collect(),
            load_seed: vec![0.0; topo.loads.len()],
            sys,
            cfg,
            topo,
            offsets,
            gen_slot,
            n_eta,
            n_gen,
            n_load_dyn,
            held,
        })
    }

    fn dim(&self) -> usize {
        self.offsets.last().map_or(self.n_eta + self.n_gen + self.n_load_dyn, |&o| {
            o + self.blocks.last().map_or(0, ControllerBlock::state_dim)
        })
    }

    fn flatten(&self, s: &SimState) -> Result<Vec<f64>, SimError> {
        if s.eta.len() != self.n_eta || s.omega_gen.len() != self.n_gen || s.blocks.len() != self.blocks.len() {
            return Err(SimError::Dimension("line, generator or block count differs".into()));
        }
        let mut x = Vec::with_capacity(self.dim());
        x.extend_from_slice(&s.eta);
        x.extend_from_slice(&s.omega_gen);
        if self.n_load_dyn > 0 {
            if s.omega_load.is_empty() {
                x.extend(std::iter::repeat(0.0).take(self.n_load_dyn));
            } else if s.omega_load.len() == self.n_load_dyn {
                x.extend_from_slice(&s.omega_load);
            } else {
                return Err(SimError::Dimension("load frequency count differs".into()));
            }
        }
        for (b, xs) in self.blocks.iter().zip(&s.blocks) {
            if xs.len() != b.state_dim() {
                return Err(SimError::Dimension("block state dimension differs".into()));
            }
            x.extend_from_slice(xs);
        }
        Ok(x)
    }

    fn unflatten(&self, t: f64, x: &[f64]) -> SimState {
        let g0 = self.n_eta;
        let l0 = g0 + self.n_gen;
        SimState {
            t,
            eta: x[..g0].to_vec(),
            omega_gen: x[g0..l0].to_vec(),
            omega_load: x[l0..l0 + self.n_load_dyn].to_vec(),
            blocks: self
                .blocks
                .iter()
                .zip(&self.offsets)
                .map(|(b, &o)| x[o..o + b.state_dim()].to_vec())
                .collect(),
        }
    }

    /// Block input and whether it follows the bus frequency instantaneously.
    fn block_input(&self, k: usize, t: f64) -> Option<f64> {
        if let Some(line) = self.blocks[k].delay_line() {
            Some(line.value_at(t))
        } else {
            self.held[k]
        }
    }

    fn block_state<'x>(&self, k: usize, x: &'x [f64]) -> &'x [f64] {
        &x[self.offsets[k]..self.offsets[k] + self.blocks[k].state_dim()]
    }

    fn solve_load(&mut self, load: usize, t: f64, x: &[f64], inflow: f64) -> Result<f64, SimError> {
        let bus_index = self.topo.loads[load];
        let bus = &self.sys.model.buses[bus_index];
        let mut fixed = bus.load_step;
        let mut direct: Vec<usize> = Vec::new();
        for k in 0..self.blocks.len() {
            if self.block_bus[k] != bus_index {
                continue;
            }
            match self.block_input(k, t) {
                Some(u) => fixed += self.blocks[k].output(self.block_state(k, x), u),
                None if self.blocks[k].is_memoryless() => direct.push(k),
                None => fixed += self.blocks[k].output(self.block_state(k, x), 0.0),
            }
        }
        // residual is decreasing in omega
        let residual = |w: f64| -> (f64, f64) {
            let mut r = inflow - fixed;
            let mut slope = 0.0;
            for &k in &direct {
                let (y, (_, right)) = self.blocks[k].memoryless_response(w).expect("memoryless");
                r -= y;
                slope -= right;
            }
            (r, slope)
        };
        let tol = self.cfg.algebraic_tol * (1.0 + inflow.abs() + fixed.abs());
        let mut w = self.load_seed[load];
        let mut last = f64::INFINITY;
        for _ in 0..self.cfg.algebraic_max_iter {
            let (r, slope) = residual(w);
            last = r;
            if r.abs() < tol {
                self.load_seed[load] = w;
                return Ok(w);
            }
            if slope >= 0.0 {
                break;
            }
            let next = w - r / slope;
            if !next.is_finite() {
                break;
            }
            w = next;
        }
        // bisection on a geometrically grown bracket around the seed
        let seed = self.load_seed[load];
        let mut h = 1e-6 * (1.0 + seed.abs());
        let (mut lo, mut hi) = (seed - h, seed + h);
        let mut grow = 0;
        while residual(lo).0 < 0.0 || residual(hi).0 > 0.0 {
            h *= 2.0;
            if residual(lo).0 < 0.0 {
                lo = seed - h;
            }
            if residual(hi).0 > 0.0 {
                hi = seed + h;
            }
            grow += 1;
            if grow > 200 {
                return Err(SimError::AlgebraicSolveFailed { bus: bus.id, t, residual: last });
            }
        }
        loop {
            let mid = 0.5 * (lo + hi);
            let (r, _) = residual(mid);
            if r.abs() < tol {
                self.load_seed[load] = mid;
                return Ok(mid);
            }
            if mid <= lo || mid >= hi {
                return Err(SimError::AlgebraicSolveFailed { bus: bus.id, t, residual: r });
            }
            if r > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }

    fn evaluate(&mut self, t: f64, x: &[f64], dx: Option<&mut [f64]>) -> Result<Evaluation, SimError> {
        if x.iter().any(|v| !(v.abs() <= self.cfg.divergence_threshold)) {
            return Err(SimError::NonFiniteState { t });
        }
        let model = &self.sys.model;
        let flows: Vec<f64> = model.lines.iter().zip(&x[..self.n_eta]).map(|(l, &e)| line_flow(l, e)).collect();
        let n_bus = model.buses.len();
        let mut omega = vec![0.0; n_bus];
        let mut inflow = vec![0.0; n_bus];
        for b in 0..n_bus {
            inflow[b] = self.topo.inflow(b, &flows);
            if let Some(g) = self.gen_slot[b] {
                omega[b] = x[self.n_eta + g];
            }
        }
        for l in 0..self.topo.loads.len() {
            let b = self.topo.loads[l];
            omega[b] = if self.n_load_dyn > 0 {
                x[self.n_eta + self.n_gen + l]
            } else {
                self.solve_load(l, t, x, inflow[b])?
            };
        }
        let mut outputs = vec![0.0; self.blocks.len()];
        let mut supply = vec![0.0; n_bus];
        let mut inputs = vec![0.0; self.blocks.len()];
        for k in 0..self.blocks.len() {
            let b = self.block_bus[k];
            let u = self.block_input(k, t).unwrap_or(-omega[b]);
            inputs[k] = u;
            outputs[k] = self.blocks[k].output(self.block_state(k, x), u);
            supply[b] += self.blocks[k].supply_sign() * outputs[k];
        }
        if let Some(dx) = dx {
            for (e, &(i, j)) in self.topo.ends.iter().enumerate() {
                dx[e] = omega[i] - omega[j];
            }
            for (g, &b) in self.topo.generators.iter().enumerate() {
                let m = model.buses[b].inertia().expect("generator");
                dx[self.n_eta + g] = (-model.buses[b].load_step + supply[b] + inflow[b]) / m;
            }
            if let Some(m) = self.cfg.load_inertia {
                for (l, &b) in self.topo.loads.iter().enumerate() {
                    dx[self.n_eta + self.n_gen + l] = (-model.buses[b].load_step + supply[b] + inflow[b]) / m;
                }
            }
            for k in 0..self.blocks.len() {
                let o = self.offsets[k];
                let n = self.blocks[k].state_dim();
                self.blocks[k].drift(&x[o..o + n], inputs[k], &mut dx[o..o + n]);
            }
        }
        Ok(Evaluation { omega, flows, outputs })
    }

    fn sample(&self, t: f64, x: &[f64], ev: Evaluation, lyapunov: Option<&Lyapunov>) -> Sample {
        let n_bus = self.sys.model.buses.len();
        let (mut p_m, mut d_c, mut d_u) = (vec![0.0; n_bus], vec![0.0; n_bus], vec![0.0; n_bus]);
        for (k, &y) in ev.outputs.iter().enumerate() {
            let b = self.block_bus[k];
            match self.blocks[k].role() {
                Role::Generation => p_m[b] += y,
                Role::ControllableDemand => d_c[b] += y,
                Role::UncontrollableDemand => d_u[b] += y,
            }
        }
        let state = self.unflatten(t, x);
        let v = lyapunov.map(|l| l.value(&state).total);
        Sample { state, omega: ev.omega, flows: ev.flows, p_m, d_c, d_u, v }
    }

    fn start_of_step(&mut self, t: f64, omega: &[f64], refresh_hold: bool) {
        for k in 0..self.blocks.len() {
            let raw = -omega[self.block_bus[k]];
            if refresh_hold {
                if let Some(h) = self.held[k].as_mut() {
                    *h = raw;
                }
            }
            let signal = self.held[k].unwrap_or(raw);
            if let Some(line) = self.blocks[k].delay_line_mut() {
                line.record(t, signal);
            }
        }
    }
}

/// Integrates from `initial` with classical RK4. On failure the returned
/// outcome holds the trajectory up to the last accepted step.
pub fn simulate_outcome(
    system: &PowerSystem,
    config: &SimConfig,
    initial: &SimState,
    lyapunov: Option<&Lyapunov>,
) -> Result<SimOutcome, SimError> {
    let (steps, hold_steps) = config.resolve()?;
    let mut eng = Engine::new(system, config, hold_steps > 0)?;
    let mut x = eng.flatten(initial)?;
    let n = x.len();
    let dt = config.dt;
    let t0 = initial.t;
    let mut trajectory = Trajectory {
        bus_ids: system.model.buses.iter().map(|b| b.id).collect(),
        line_ends: system.model.lines.iter().map(|l| (l.from, l.to)).collect(),
        samples: Vec::with_capacity(steps / config.sample_every + 2),
    };
    let fail = |trajectory: Trajectory, e: SimError| Ok(SimOutcome { trajectory, error: Some(e) });

    let mut current = match eng.evaluate(t0, &x, None) {
        Ok(ev) => ev,
        Err(e) => return fail(trajectory, e),
    };
    if hold_steps > 0 {
        eng.start_of_step(t0, &current.omega.clone(), true);
        current = match eng.evaluate(t0, &x, None) {
            Ok(ev) => ev,
            Err(e) => return fail(trajectory, e),
        };
    }
    let mut omega_now = current.omega.clone();
    trajectory.samples.push(eng.sample(t0, &x, current, lyapunov));

    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for step in 0..steps {
        let t = t0 + step as f64 * dt;
        let refresh = hold_steps > 0 && step % hold_steps == 0 && step > 0;
        eng.start_of_step(t, &omega_now, refresh);
        let stage = (|| -> Result<(), SimError> {
            eng.evaluate(t, &x, Some(&mut k1))?;
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * dt * k1[i];
            }
            eng.evaluate(t + 0.5 * dt, &tmp, Some(&mut k2))?;
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * dt * k2[i];
            }
            eng.evaluate(t + 0.5 * dt, &tmp, Some(&mut k3))?;
            for i in 0..n {
                tmp[i] = x[i] + dt * k3[i];
            }
            eng.evaluate(t + dt, &tmp, Some(&mut k4))?;
            Ok(())
        })();
        if let Err(e) = stage {
            return fail(trajectory, e);
        }
        for i in 0..n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        project_block_states(&eng, &mut x);
        let t_next = t0 + (step + 1) as f64 * dt;
        match eng.evaluate(t_next, &x, None) {
            Ok(ev) => {
                omega_now.clone_from(&ev.omega);
                if (step + 1) % config.sample_every == 0 || step + 1 == steps {
                    trajectory.samples.push(eng.sample(t_next, &x, ev, lyapunov));
                }
            }
            Err(e) => return fail(trajectory, e),
        }
    }
    Ok(SimOutcome { trajectory, error: None })
}

/// Keeps projected block states inside their bounds after a full step.
fn project_block_states(eng: &Engine<'_>, x: &mut [f64]) {
    for (k, b) in eng.blocks.iter().enumerate() {
        if let crate::controllers::BlockKind::DynamicOslc { cost } = b.kind() {
            let o = eng.offsets[k];
            x[o] = x[o].clamp(cost.lower(), cost.upper());
        }
    }
}

pub fn simulate(
    system: &PowerSystem,
    config: &SimConfig,
    initial: &SimState,
    lyapunov: Option<&Lyapunov>,
) -> Result<Trajectory, SimError> {
    simulate_outcome(system, config, initial, lyapunov)?.into_result()
}

/// Frequencies of the load buses (in bus order) at `state`.
pub fn solve_load_frequencies(system: &PowerSystem, state: &SimState, config: &SimConfig) -> Result<Vec<f64>, SimError> {
    let mut eng = Engine::new(system, config, false)?;
    let x = eng.flatten(state)?;
    let ev = eng.evaluate(state.t, &x, None)?;
    Ok(eng.topo.loads.iter().map(|&b| ev.omega[b]).collect())
}

/// Time derivative of the state, with every block fed its bus frequency directly.
pub fn rhs(system: &PowerSystem, state: &SimState, config: &SimConfig) -> Result<SimState, SimError> {
    let mut eng = Engine::new(system, config, false)?;
    let x = eng.flatten(state)?;
    let mut dx = vec![0.0; x.len()];
    eng.evaluate(state.t, &x, Some(&mut dx))?;
    Ok(eng.unflatten(state.t, &dx))
}

/// Wraps a block with a pure input delay.
pub fn with_delay(block: ControllerBlock, delay: f64) -> ControllerBlock {
    block.with_delay(delay)
}
