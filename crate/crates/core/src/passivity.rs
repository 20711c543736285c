//! Frequency-domain passivity margins of linearized blocks, turbine-governor
//! closed forms, and the delay robustness test.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::controllers::{ControllerBlock, ControllerError, Linearization};
use crate::network::BusId;
use crate::numeric::golden_min;
use crate::system::PowerSystem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PassivityError {
    #[error("transfer function denominator is not Hurwitz")]
    UnstableTransferFunction,
    #[error("invalid time constants tau_g={tau_g}, tau_b={tau_b}")]
    InvalidTimeConstant { tau_g: f64, tau_b: f64 },
    #[error("invalid transfer function: {0}")]
    InvalidTransferFunction(String),
    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),
    #[error("linearization unavailable: {0}")]
    LinearizationUnavailable(#[from] ControllerError),
}

/// Rational function with ascending coefficients, an input delay and a
/// constant (undelayed) feedthrough addend.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
    pub delay: f64,
    pub feedthrough: f64,
}

fn trim(mut p: Vec<f64>) -> Vec<f64> {
    while p.len() > 1 && *p.last().unwrap() == 0.0 {
        p.pop();
    }
    p
}

fn poly_eval(p: &[f64], s: Complex64) -> Complex64 {
    p.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

/// Routh-Hurwitz test on ascending coefficients.
fn is_hurwitz(p: &[f64]) -> bool {
    let desc: Vec<f64> = p.iter().rev().cloned().collect();
    let n = desc.len();
    if n <= 1 {
        return desc.first().map_or(false, |c| *c != 0.0);
    }
    let width = n.div_ceil(2);
    let mut rows = vec![vec![0.0; width + 1], vec![0.0; width + 1]];
    for (k, &c) in desc.iter().enumerate() {
        rows[k % 2][k / 2] = c;
    }
    for r in 2..n {
        let (prev2, prev) = (&rows[r - 2], &rows[r - 1]);
        if prev[0] == 0.0 {
            return false;
        }
        let mut next = vec![0.0; width + 1];
        for k in 0..width {
            next[k] = (prev[0] * prev2[k + 1] - prev2[0] * prev[k + 1]) / prev[0];
        }
        rows.push(next);
    }
    let sign = rows[0][0].signum();
    rows.iter().take(n).all(|r| r[0] != 0.0 && r[0].signum() == sign)
}

impl TransferFunction {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self, PassivityError> {
        let (num, den) = (trim(num), trim(den));
        if num.is_empty() || den.is_empty() || num.iter().chain(&den).any(|c| !c.is_finite()) {
            return Err(PassivityError::InvalidTransferFunction("coefficients must be finite and nonempty".into()));
        }
        if *den.last().unwrap() == 0.0 {
            return Err(PassivityError::InvalidTransferFunction("denominator is zero".into()));
        }
        if num.len() > den.len() {
            return Err(PassivityError::InvalidTransferFunction("numerator degree exceeds denominator degree".into()));
        }
        Ok(Self { num, den, delay: 0.0, feedthrough: 0.0 })
    }

    pub fn gain(k: f64) -> Self {
        Self { num: vec![k], den: vec![1.0], delay: 0.0, feedthrough: 0.0 }
    }

    /// `1 / ((tau_g s + 1)(tau_b s + 1))`, from power command to mechanical power.
    pub fn turbine_governor(tau_g: f64, tau_b: f64) -> Self {
        Self { num: vec![1.0], den: vec![1.0, tau_g + tau_b, tau_g * tau_b], delay: 0.0, feedthrough: 0.0 }
    }

    pub fn with_delay(mut self, delay: f64) -> Self {
        self.delay = delay;
        self
    }

    pub fn with_feedthrough(mut self, d: f64) -> Self {
        self.feedthrough = d;
        self
    }

    /// Multiplies the rational part (not the feedthrough) by `k`.
    pub fn scaled(mut self, k: f64) -> Self {
        self.num.iter_mut().for_each(|c| *c *= k);
        self
    }

    /// `c (sI - A)^{-1} b + d` via the Faddeev-LeVerrier recursion.
    pub fn from_linearization(lin: &Linearization) -> Self {
        let n = lin.a.nrows();
        let mut den = vec![0.0; n + 1];
        den[n] = 1.0;
        let mut num = vec![0.0; n + 1];
        let mut m = DMatrix::<f64>::zeros(n, n);
        for k in 1..=n {
            m = &lin.a * &m + DMatrix::identity(n, n) * den[n - k + 1];
            num[n - k] += lin.c.dot(&(&m * &lin.b));
            den[n - k] = -(&lin.a * &m).trace() / k as f64;
        }
        for (nu, de) in num.iter_mut().zip(&den) {
            *nu += lin.d * de;
        }
        Self { num: trim(num), den, delay: 0.0, feedthrough: 0.0 }
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly_eval(&self.num, s) / poly_eval(&self.den, s)
    }
}

/// Anything with a frequency response and a stability verdict.
pub trait FrequencyResponse {
    fn response(&self, w: f64) -> Complex64;
    fn is_stable(&self) -> bool;
}

impl FrequencyResponse for TransferFunction {
    fn response(&self, w: f64) -> Complex64 {
        let s = Complex64::new(0.0, w);
        self.eval(s) * Complex64::from_polar(1.0, -w * self.delay) + self.feedthrough
    }

    fn is_stable(&self) -> bool {
        is_hurwitz(&self.den)
    }
}

/// Parallel connection, e.g. all blocks at one bus.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TfSum(pub Vec<TransferFunction>);

impl FrequencyResponse for TfSum {
    fn response(&self, w: f64) -> Complex64 {
        self.0.iter().map(|t| t.response(w)).sum()
    }

    fn is_stable(&self) -> bool {
        self.0.iter().all(FrequencyResponse::is_stable)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    pub w_min: f64,
    pub w_max: f64,
    pub points: usize,
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self { w_min: 1e-3, w_max: 1e4, points: 2048 }
    }
}

impl FrequencyGrid {
    fn validate(&self) -> Result<(), PassivityError> {
        if !(self.w_min > 0.0 && self.w_max > self.w_min && self.w_max.is_finite() && self.points >= 3) {
            return Err(PassivityError::InvalidGrid(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let (a, b) = (self.w_min.ln(), self.w_max.ln());
        (0..self.points)
            .map(|k| (a + (b - a) * k as f64 / (self.points - 1) as f64).exp())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassivityReport {
    /// Infimum of the real part over the scanned frequencies.
    pub margin: f64,
    pub worst_frequency: f64,
    pub stable: bool,
    pub grid: FrequencyGrid,
}

impl PassivityReport {
    pub fn passed(&self) -> bool {
        self.stable && self.margin > 0.0
    }
}

/// Infimum of `Re H(jw)` on a log grid, refined by golden-section search
/// around the three lowest local minima.
pub fn isp_margin(h: &impl FrequencyResponse, grid: FrequencyGrid) -> Result<PassivityReport, PassivityError> {
    grid.validate()?;
    if !h.is_stable() {
        return Err(PassivityError::UnstableTransferFunction);
    }
    let ws = grid.frequencies();
    let re: Vec<f64> = ws.iter().map(|&w| h.response(w).re).collect();
    let mut minima: Vec<usize> = (0..ws.len())
        .filter(|&i| (i == 0 || re[i] <= re[i - 1]) && (i + 1 == ws.len() || re[i] <= re[i + 1]))
        .collect();
    minima.sort_by(|&a, &b| re[a].total_cmp(&re[b]).then(a.cmp(&b)));
    let (mut best_w, mut best) = (ws[minima[0]], re[minima[0]]);
    for &i in minima.iter().take(3) {
        let lo = ws[i.saturating_sub(1)].ln();
        let hi = ws[(i + 1).min(ws.len() - 1)].ln();
        if hi <= lo {
            continue;
        }
        let (lw, v) = golden_min(|lw| h.response(lw.exp()).re, lo, hi, 1e-12);
        if v < best {
            best = v;
            best_w = lw.exp();
        }
    }
    Ok(PassivityReport { margin: best, worst_frequency: best_w, stable: true, grid })
}

fn check_taus(tau_g: f64, tau_b: f64) -> Result<(), PassivityError> {
    let ok = |t: f64| t > 0.0 && t.is_finite();
    if ok(tau_g) && ok(tau_b) {
        Ok(())
    } else {
        Err(PassivityError::InvalidTimeConstant { tau_g, tau_b })
    }
}

/// Minimum of `Re T(jw)` for the turbine-governor lag cascade and the
/// frequency where it occurs.
pub fn tg_min_real(tau_g: f64, tau_b: f64) -> Result<(f64, f64), PassivityError> {
    check_taus(tau_g, tau_b)?;
    let (sum, prod) = (tau_g + tau_b, tau_g * tau_b);
    let root = prod.sqrt();
    let value = -prod / (sum * sum + 2.0 * sum * root);
    let w = ((sum + root) / prod.powf(1.5)).sqrt();
    Ok((value, w))
}

/// Largest droop-to-damping ratio `K/D` keeping `K T(jw) + D` positive
/// real, for `a = tau_b / tau_g`.
pub fn max_gain_ratio(a: f64) -> f64 {
    match tg_min_real(1.0, a) {
        Ok((v, _)) => -1.0 / v,
        Err(_) => f64::NAN,
    }
}

/// Small-gain certificate for a sector-bounded droop through the unit-gain
/// turbine-governor: holds iff `K < D`.
pub fn l2_small_gain_certificate(k: f64, d: f64) -> bool {
    k >= 0.0 && k < d
}

/// Midpoint storage coefficients `(beta, gamma)` for
/// `W = beta/2 (p^M - p^M*)^2 + gamma/2 (alpha - alpha*)^2`, chosen inside
/// `0 < beta < gamma tau_b / tau_g` and `gamma < 2 (D - K) tau_g / K^2`.
/// `None` when the small-gain condition fails or `K = 0`.
pub fn remark_storage_coefficients(k: f64, d: f64, tau_g: f64, tau_b: f64) -> Option<(f64, f64)> {
    if !l2_small_gain_certificate(k, d) || k == 0.0 || check_taus(tau_g, tau_b).is_err() {
        return None;
    }
    let gamma = (d - k) * tau_g / (k * k);
    let beta = 0.5 * gamma * tau_b / tau_g;
    Some((beta, gamma))
}

/// Supply-side transfer function from `-omega` of a block linearized at
/// its equilibrium for input `u`: the block's own delay is kept, demand
/// outputs are negated.
pub fn supply_transfer_function(block: &ControllerBlock, u: f64) -> Result<TransferFunction, PassivityError> {
    let lin = block.linearize_at_equilibrium(u)?;
    Ok(TransferFunction::from_linearization(&lin).scaled(block.supply_sign()).with_delay(block.delay()))
}

/// Tests `inf Re(K G(jw) e^{-jw delay}) > -D`, i.e. whether the delayed
/// block keeps the bus passive given damping `D`. The reported margin is
/// the infimum plus `D`.
pub fn delay_passivity_check(
    block: &ControllerBlock,
    u: f64,
    delay: f64,
    damping: f64,
    gain: f64,
    grid: FrequencyGrid,
) -> Result<PassivityReport, PassivityError> {
    let tf = supply_transfer_function(block, u)?.scaled(gain).with_delay(delay).with_feedthrough(damping);
    isp_margin(&tf, grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusPassivity {
    pub bus: BusId,
    pub report: Option<PassivityReport>,
    pub note: String,
}

/// Margin of the summed supply linearizations at every bus with blocks.
pub fn bus_passivity(system: &PowerSystem, omega_star: f64, grid: FrequencyGrid) -> Vec<BusPassivity> {
    let mut out = Vec::new();
    for bus in &system.model.buses {
        let blocks: Vec<&ControllerBlock> = system.blocks_at(bus.id).map(|(_, pb)| &pb.block).collect();
        if blocks.is_empty() {
            continue;
        }
        let tfs: Result<Vec<TransferFunction>, PassivityError> =
            blocks.iter().map(|b| supply_transfer_function(b, -omega_star)).collect();
        let active = blocks.iter().filter(|b| b.damping().is_none()).count();
        let (report, note) = match tfs {
            Ok(tfs) => match isp_margin(&TfSum(tfs), grid) {
                Ok(r) => {
                    let note = if active > 1 { "composed" } else { "single" };
                    (Some(r), note.to_string())
                }
                Err(e) => (None, e.to_string()),
            },
            Err(e) => (None, e.to_string()),
        };
        out.push(BusPassivity { bus: bus.id, report, note });
    }
    out
}
