use nalgebra::{DMatrix, DVector};

use super::{ControllerError, CostFunction, Deadband, DelayLine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Generation,
    ControllableDemand,
    UncontrollableDemand,
}

/// Static power command `p^c` of a turbine-governor as a function of `u = -omega`.
#[derive(Debug, Clone, PartialEq)]
pub enum Droop {
    Linear { gain: f64 },
    Deadband(Deadband),
    /// `p^c = clip((C')^{-1}(u))`, the optimal generation law for cost `C`.
    Cost(CostFunction),
}

impl Droop {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Droop::Linear { gain } => gain * u,
            Droop::Deadband(db) => db.eval(u),
            Droop::Cost(c) => c.response(u),
        }
    }

    /// One-sided slopes `(left, right)` in `u`.
    pub fn slopes(&self, u: f64) -> (f64, f64) {
        match self {
            Droop::Linear { gain } => (*gain, *gain),
            Droop::Deadband(db) => db.slopes(u),
            Droop::Cost(c) => c.response_slopes(u),
        }
    }

    /// Sector bound `K` with `0 <= (p^c(u) - p^c(v)) / (u - v) <= K`.
    pub fn sector_gain(&self) -> f64 {
        match self {
            Droop::Linear { gain } => *gain,
            Droop::Deadband(db) => db.slope,
            Droop::Cost(c) => c.max_response_slope(),
        }
    }

    /// Cost whose clipped derivative inverse is this droop, if any.
    pub fn implied_cost(&self) -> Option<CostFunction> {
        match self {
            Droop::Linear { gain } if *gain > 0.0 => CostFunction::quadratic(1.0 / gain).ok(),
            Droop::Linear { .. } => None,
            Droop::Deadband(db) => Some(CostFunction::deadband(db)),
            Droop::Cost(c) => Some(c.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockKind {
    /// `d^c = clip((C_d')^{-1}(omega))`.
    StaticOslc { cost: CostFunction },
    /// `d' = -(C_d'(d) - omega)`, projected onto the demand bounds.
    DynamicOslc { cost: CostFunction },
    /// Valve `alpha' = (p^c(u) - alpha)/tau_g`, power `p^M' = (alpha - p^M)/tau_b`.
    TurbineGovernor { tau_g: f64, tau_b: f64, droop: Droop },
    /// `d^c = DB(omega)`.
    DeadbandDemand(Deadband),
    /// `d^u = D omega`.
    UncontrollableLoad { damping: f64 },
}

/// Linearization `x' = A x + b u`, `y = c.x + d u` around an operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerBlock {
    kind: BlockKind,
    state: Vec<f64>,
    delay: Option<DelayLine>,
    clock: f64,
}

impl ControllerBlock {
    pub(crate) fn new(kind: BlockKind) -> Self {
        let dim = match &kind {
            BlockKind::DynamicOslc { .. } => 1,
            BlockKind::TurbineGovernor { .. } => 2,
            _ => 0,
        };
        Self { kind, state: vec![0.0; dim], delay: None, clock: 0.0 }
    }

    /// Wraps the block with a pure input delay. Panics if `delay` is negative.
    pub fn with_delay(mut self, delay: f64) -> Self {
        self.delay = if delay > 0.0 { Some(DelayLine::new(delay)) } else { None };
        self
    }

    pub fn with_state(mut self, state: Vec<f64>) -> Self {
        assert_eq!(state.len(), self.state.len(), "state dimension mismatch");
        self.state = state;
        self
    }

    pub fn kind(&self) -> &BlockKind {
        &self.kind
    }

    pub fn role(&self) -> Role {
        match self.kind {
            BlockKind::TurbineGovernor { .. } => Role::Generation,
            BlockKind::UncontrollableLoad { .. } => Role::UncontrollableDemand,
            _ => Role::ControllableDemand,
        }
    }

    /// `+1` for generation, `-1` for demand: the block's contribution to net supply.
    pub fn supply_sign(&self) -> f64 {
        if self.role() == Role::Generation {
            1.0
        } else {
            -1.0
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state.len()
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn delay(&self) -> f64 {
        self.delay.as_ref().map_or(0.0, DelayLine::delay)
    }

    pub fn delay_line(&self) -> Option<&DelayLine> {
        self.delay.as_ref()
    }

    pub(crate) fn delay_line_mut(&mut self) -> Option<&mut DelayLine> {
        self.delay.as_mut()
    }

    pub fn is_memoryless(&self) -> bool {
        self.state.is_empty()
    }

    /// Output, and its one-sided slopes in omega, of a memoryless block.
    pub fn memoryless_response(&self, omega: f64) -> Option<(f64, (f64, f64))> {
        match &self.kind {
            BlockKind::StaticOslc { cost } => Some((cost.response(omega), cost.response_slopes(omega))),
            BlockKind::DeadbandDemand(db) => Some((db.eval(omega), db.slopes(omega))),
            BlockKind::UncontrollableLoad { damping } => Some((damping * omega, (*damping, *damping))),
            _ => None,
        }
    }

    /// State derivative `f(x, u)`.
    pub fn drift(&self, x: &[f64], u: f64, out: &mut [f64]) {
        match &self.kind {
            BlockKind::DynamicOslc { cost } => {
                let d = x[0];
                let mut rate = -u - cost.derivative_right(d);
                if (d >= cost.upper() && rate > 0.0) || (d <= cost.lower() && rate < 0.0) {
                    rate = 0.0;
                }
                out[0] = rate;
            }
            BlockKind::TurbineGovernor { tau_g, tau_b, droop } => {
                out[0] = (droop.eval(u) - x[0]) / tau_g;
                out[1] = (x[0] - x[1]) / tau_b;
            }
            _ => {}
        }
    }

    /// Readout `g(x, u)`.
    pub fn output(&self, x: &[f64], u: f64) -> f64 {
        match &self.kind {
            BlockKind::DynamicOslc { .. } => x[0],
            BlockKind::TurbineGovernor { .. } => x[1],
            _ => self.memoryless_response(-u).map(|(y, _)| y).unwrap_or(0.0),
        }
    }

    /// Closed-form equilibrium state `k_x(u)` for a constant input.
    pub fn equilibrium_state(&self, u: f64) -> Vec<f64> {
        match &self.kind {
            BlockKind::DynamicOslc { cost } => vec![cost.response(-u)],
            BlockKind::TurbineGovernor { droop, .. } => {
                let p = droop.eval(u);
                vec![p, p]
            }
            _ => Vec::new(),
        }
    }

    /// `k_y(u) = g(k_x(u), u)`.
    pub fn static_characteristic(&self, u: f64) -> f64 {
        self.output(&self.equilibrium_state(u), u)
    }

    /// Integrates the block under constant input until `|f| < 1e-10` and
    /// returns the settled output.
    pub fn settle(&self, u: f64, dt: f64, max_steps: usize) -> Result<f64, ControllerError> {
        let mut block = self.clone();
        block.delay = None;
        let mut rate = vec![0.0; block.state_dim()];
        for _ in 0..max_steps {
            block.drift(&block.state, u, &mut rate);
            if rate.iter().all(|r| r.abs() < 1e-10) {
                return Ok(block.output(&block.state, u));
            }
            block.step(u, dt)?;
        }
        Err(ControllerError::NoConvergence { steps: max_steps })
    }

    /// Advances the block by one RK4 step of length `dt` under input `u`
    /// applied at the current block time and returns the output at the end
    /// of the step.
    pub fn step(&mut self, u: f64, dt: f64) -> Result<f64, ControllerError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ControllerError::InvalidStep(dt));
        }
        let t0 = self.clock;
        if let Some(line) = &mut self.delay {
            line.record(t0, u);
        }
        let input = |t: f64| self.delay.as_ref().map_or(u, |l| l.value_at(t));
        let n = self.state.len();
        if n > 0 {
            let x0 = self.state.clone();
            let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            let mut tmp = vec![0.0; n];
            self.drift(&x0, input(t0), &mut k1);
            for i in 0..n {
                tmp[i] = x0[i] + 0.5 * dt * k1[i];
            }
            self.drift(&tmp, input(t0 + 0.5 * dt), &mut k2);
            for i in 0..n {
                tmp[i] = x0[i] + 0.5 * dt * k2[i];
            }
            self.drift(&tmp, input(t0 + 0.5 * dt), &mut k3);
            for i in 0..n {
                tmp[i] = x0[i] + dt * k3[i];
            }
            self.drift(&tmp, input(t0 + dt), &mut k4);
            for i in 0..n {
                tmp[i] = x0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if let BlockKind::DynamicOslc { cost } = &self.kind {
                tmp[0] = tmp[0].clamp(cost.lower(), cost.upper());
            }
            if tmp.iter().any(|v| !v.is_finite()) {
                return Err(ControllerError::NonFiniteState { t: t0 + dt });
            }
            self.state = tmp;
        }
        self.clock = t0 + dt;
        let u_end = input(self.clock);
        Ok(self.output(&self.state, u_end))
    }

    /// Jacobians of `(f, g)` at `(x, u)`. Refused where the block has a kink.
    pub fn linearize(&self, x: &[f64], u: f64) -> Result<Linearization, ControllerError> {
        let kink = || ControllerError::NotDifferentiable { input: u };
        match &self.kind {
            BlockKind::DynamicOslc { cost } => {
                let d = x[0];
                let curvature = cost.curvature(d).ok_or_else(kink)?;
                let unconstrained = cost.inverse_derivative(-u);
                let inside = d > cost.lower() && d < cost.upper();
                let b = if inside {
                    -1.0
                } else if unconstrained > cost.upper() || unconstrained < cost.lower() {
                    0.0
                } else {
                    return Err(kink());
                };
                Ok(Linearization {
                    a: DMatrix::from_element(1, 1, -curvature),
                    b: DVector::from_element(1, b),
                    c: DVector::from_element(1, 1.0),
                    d: 0.0,
                })
            }
            BlockKind::TurbineGovernor { tau_g, tau_b, droop } => {
                let (l, r) = droop.slopes(u);
                if l != r {
                    return Err(kink());
                }
                Ok(Linearization {
                    a: DMatrix::from_row_slice(2, 2, &[-1.0 / tau_g, 0.0, 1.0 / tau_b, -1.0 / tau_b]),
                    b: DVector::from_vec(vec![l / tau_g, 0.0]),
                    c: DVector::from_vec(vec![0.0, 1.0]),
                    d: 0.0,
                })
            }
            _ => {
                let (_, (l, r)) = self.memoryless_response(-u).expect("memoryless block");
                if l != r {
                    return Err(kink());
                }
                Ok(Linearization {
                    a: DMatrix::zeros(0, 0),
                    b: DVector::zeros(0),
                    c: DVector::zeros(0),
                    d: -l,
                })
            }
        }
    }

    /// Linearization at the block equilibrium for constant input `u`.
    pub fn linearize_at_equilibrium(&self, u: f64) -> Result<Linearization, ControllerError> {
        self.linearize(&self.equilibrium_state(u), u)
    }

    /// Cost whose optimal response this block implements, if any.
    pub fn implied_cost(&self) -> Option<CostFunction> {
        match &self.kind {
            BlockKind::StaticOslc { cost } | BlockKind::DynamicOslc { cost } => Some(cost.clone()),
            BlockKind::TurbineGovernor { droop, .. } => droop.implied_cost(),
            BlockKind::DeadbandDemand(db) => Some(CostFunction::deadband(db)),
            BlockKind::UncontrollableLoad { .. } => None,
        }
    }

    pub fn damping(&self) -> Option<f64> {
        match self.kind {
            BlockKind::UncontrollableLoad { damping } => Some(damping),
            _ => None,
        }
    }
}

/// Decentralized check that the demand at a load bus pins down its
/// frequency at `omega`: either the direct frequency sensitivity of the
/// memoryless outputs is nonzero, or the sum of state-mediated
/// sensitivities is positive.
pub fn check_assumption4(blocks: &[ControllerBlock], omega: f64) -> bool {
    let direct: f64 = blocks
        .iter()
        .filter(|b| b.delay.is_none())
        .filter_map(|b| b.memoryless_response(omega))
        .map(|(_, (l, r))| l.min(r))
        .sum();
    if direct != 0.0 {
        return true;
    }
    let mut indirect = 0.0;
    for b in blocks.iter().filter(|b| !b.is_memoryless()) {
        let u = -omega;
        match b.linearize_at_equilibrium(u) {
            // df/domega = -b
            Ok(lin) => indirect += -lin.c.dot(&lin.b),
            Err(_) => return false,
        }
    }
    indirect > 0.0
}

#[cfg(test)]
mod tests {
    use super::super::*;

    fn quad(alpha: f64, lo: f64, hi: f64) -> CostFunction {
        CostFunction::quadratic(alpha).unwrap().with_bounds(lo, hi).unwrap()
    }

    #[test]
    fn static_oslc_examples() {
        let b = make_static_oslc(quad(5.0, -1.0, 1.0)).unwrap();
        assert!((b.static_characteristic(-0.1) - 0.02).abs() < 1e-15);
        assert_eq!(b.static_characteristic(-10.0), 1.0);
        assert_eq!(b.static_characteristic(0.0), 0.0);
        let mut s = b.clone();
        assert!((s.step(-0.1, 0.3).unwrap() - 0.02).abs() < 1e-15);
        assert!(make_static_oslc(CostFunction::quadratic(5.0).unwrap()).is_err());
    }

    #[test]
    fn uncontrollable_load_examples() {
        let b = make_uncontrollable_load(1.5).unwrap();
        assert!((b.static_characteristic(-0.2) - 0.3).abs() < 1e-15);
        assert_eq!(make_uncontrollable_load(1.0).unwrap().static_characteristic(0.0), 0.0);
        assert!(matches!(make_uncontrollable_load(0.0), Err(ControllerError::InvalidDamping(_))));
    }

    #[test]
    fn dynamic_oslc_converges_to_static_law() {
        let mut b = make_dynamic_oslc(quad(5.0, -1.0, 1.0)).unwrap();
        let mut y = 0.0;
        for _ in 0..2000 {
            y = b.step(-0.1, 0.01).unwrap();
        }
        assert!((y - 0.02).abs() < 1e-12);

        let b = make_dynamic_oslc(quad(5.0, -1.0, 1.0)).unwrap().with_state(vec![0.02]);
        let mut f = [1.0];
        b.drift(b.state(), -0.1, &mut f);
        assert!(f[0].abs() < 1e-15);
    }

    #[test]
    fn dynamic_oslc_free_decay() {
        // d' = -5 d from 0.1, exact solution 0.1 e^{-5t}
        let mut b = make_dynamic_oslc(quad(5.0, -1.0, 1.0)).unwrap().with_state(vec![0.1]);
        let mut prev = 0.1;
        for k in 1..=100 {
            let y = b.step(0.0, 0.01).unwrap();
            assert!(y < prev);
            prev = y;
            let exact = 0.1 * (-5.0 * 0.01 * k as f64).exp();
            assert!((y - exact).abs() < 1e-7);
        }
    }

    #[test]
    fn dynamic_oslc_rejects_kinks() {
        let db = Deadband::new(0.01, 0.05, 10.0).unwrap();
        assert!(make_dynamic_oslc(CostFunction::deadband(&db)).is_err());
    }

    #[test]
    fn turbine_governor_examples() {
        let tg = make_turbine_governor(0.5, 0.5, Droop::Linear { gain: 10.0 }).unwrap();
        assert!((tg.static_characteristic(0.05) - 0.5).abs() < 1e-15);

        let mut rest = tg.clone();
        for _ in 0..100 {
            assert_eq!(rest.step(0.0, 0.01).unwrap(), 0.0);
        }

        let mut b = tg.clone();
        let mut peak: f64 = 0.0;
        let mut y = 0.0;
        for _ in 0..3000 {
            y = b.step(0.05, 0.01).unwrap();
            peak = peak.max(y);
        }
        assert!(peak <= 0.5 + 1e-12);
        assert!((y - 0.5).abs() < 1e-9);
        assert!(make_turbine_governor(0.0, 1.0, Droop::Linear { gain: 1.0 }).is_err());
    }

    #[test]
    fn deadband_block_examples() {
        let b = make_deadband_droop(0.01, 0.05, 10.0).unwrap();
        assert_eq!(b.static_characteristic(-0.005), 0.0);
        assert!((b.static_characteristic(-0.03) - 0.2).abs() < 1e-12);
        assert!((b.static_characteristic(-1.0) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn assumption4_examples() {
        let oslc = make_static_oslc(quad(5.0, -1.0, 1.0)).unwrap();
        let load = make_uncontrollable_load(1.0).unwrap();
        let db = make_deadband_droop(0.01, 0.05, 10.0).unwrap();
        assert!(check_assumption4(&[oslc, load.clone()], 0.0));
        assert!(check_assumption4(&[db.clone(), load], 0.0));
        assert!(!check_assumption4(&[db], 0.0));
        let dynamic = make_dynamic_oslc(quad(5.0, -1.0, 1.0)).unwrap();
        assert!(check_assumption4(&[dynamic], 0.0));
    }

    #[test]
    fn settle_matches_closed_form() {
        let tg = make_turbine_governor(0.3, 0.7, Droop::Linear { gain: 4.0 }).unwrap();
        let y = tg.settle(0.1, 0.01, 100_000).unwrap();
        assert!((y - 0.4).abs() < 1e-9);
        assert!(matches!(tg.settle(0.1, 0.01, 3), Err(ControllerError::NoConvergence { .. })));
    }

    #[test]
    fn delayed_static_block_shifts_sinusoid() {
        let tau = 0.05;
        let dt = 1e-3;
        let mut b = make_static_oslc(quad(2.0, -10.0, 10.0)).unwrap().with_delay(tau);
        for k in 0..2000 {
            let t = k as f64 * dt;
            let y = b.step(t.sin(), dt).unwrap();
            let t1 = t + dt;
            let expected = if t1 < tau { 0.0 } else { -(t1 - tau).sin() / 2.0 };
            assert!((y - expected).abs() < 1e-6, "t={t1}: {y} vs {expected}");
        }
    }

    #[test]
    fn delayed_lag_is_time_shifted() {
        let tau = 0.05;
        let dt = 1e-3;
        let mut plain = make_dynamic_oslc(quad(5.0, -1.0, 1.0)).unwrap();
        let mut delayed = plain.clone().with_delay(tau);
        let shift = (tau / dt).round() as usize;
        let mut reference = Vec::new();
        let mut shifted = Vec::new();
        for _ in 0..1000 {
            reference.push(plain.step(-0.1, dt).unwrap());
            shifted.push(delayed.step(-0.1, dt).unwrap());
        }
        for k in 0..shift - 1 {
            assert_eq!(shifted[k], 0.0);
        }
        for k in shift + 5..1000 {
            assert!((shifted[k] - reference[k - shift]).abs() < 1e-4, "k={k}");
        }
    }
}
