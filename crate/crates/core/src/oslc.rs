//! Optimal supply and load control: separable convex costs, box constraints
//! and one power balance constraint, solved through its scalar multiplier.

use thiserror::Error;

use crate::controllers::CostFunction;
use crate::numeric::decreasing_root;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OslcError {
    #[error("balance cannot be met: supply range [{min_supply}, {max_supply}] excludes the required {required}")]
    Infeasible { min_supply: f64, max_supply: f64, required: f64 },
    #[error("balance residual {residual} exceeds tolerance")]
    ToleranceNotMet { residual: f64 },
    #[error("uncontrollable damping {0} must be nonnegative")]
    InvalidDamping(f64),
}

/// Generalized inverse of a convex cost's derivative.
#[derive(Debug, Clone, Copy)]
pub struct GeneralizedInverse<'a> {
    cost: &'a CostFunction,
}

impl<'a> GeneralizedInverse<'a> {
    pub fn cost(&self) -> &'a CostFunction {
        self.cost
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.cost.inverse_derivative(x)
    }

    /// Set-valued inverse of the map, i.e. the subdifferential of the cost at `d`.
    pub fn preimage(&self, d: f64) -> (f64, f64) {
        self.cost.subdifferential(d)
    }
}

/// Costs are validated on construction, so this cannot fail.
pub fn generalized_inverse(cost: &CostFunction) -> GeneralizedInverse<'_> {
    GeneralizedInverse { cost }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OslcProblem {
    /// Generation costs `C_j(p^M_j)` with bounds on `p^M_j`.
    pub generators: Vec<CostFunction>,
    /// Controllable demand costs `C_dj(d^c_j)` with bounds on `d^c_j`.
    pub demands: Vec<CostFunction>,
    /// Uncontrollable load dampings, `h_j(z) = D_j z`.
    pub dampings: Vec<f64>,
    /// Uncontrollable load steps `p^L_j`.
    pub load_steps: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiplierStatus {
    Unique,
    /// The balance map is flat at zero over an interval of multipliers;
    /// the midpoint was returned.
    DegenerateMultiplier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OslcSolution {
    pub p_m: Vec<f64>,
    pub d_c: Vec<f64>,
    pub d_u: Vec<f64>,
    /// Balance multiplier, equal to the steady state frequency deviation.
    pub nu: f64,
    pub lambda_plus: Vec<f64>,
    pub lambda_minus: Vec<f64>,
    pub mu_plus: Vec<f64>,
    pub mu_minus: Vec<f64>,
    pub status: MultiplierStatus,
}

impl OslcProblem {
    pub fn total_damping(&self) -> f64 {
        self.dampings.iter().sum()
    }

    /// Supply minus demand at multiplier `nu`; nonincreasing in `nu`.
    pub fn balance(&self, nu: f64) -> f64 {
        let supply: f64 = self.generators.iter().map(|c| c.response(-nu)).sum();
        let demand: f64 = self.demands.iter().map(|c| c.response(nu)).sum();
        supply - demand - self.total_damping() * nu - self.load_steps.iter().sum::<f64>()
    }

    pub fn objective(&self, p_m: &[f64], d_c: &[f64], d_u: &[f64]) -> f64 {
        let g: f64 = self.generators.iter().zip(p_m).map(|(c, &p)| c.value(p)).sum();
        let d: f64 = self.demands.iter().zip(d_c).map(|(c, &x)| c.value(x)).sum();
        let u: f64 = self
            .dampings
            .iter()
            .zip(d_u)
            .map(|(&damp, &x)| if damp > 0.0 { x * x / (2.0 * damp) } else { 0.0 })
            .sum();
        g + d + u
    }

    fn validate(&self) -> Result<(), OslcError> {
        for &d in &self.dampings {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(OslcError::InvalidDamping(d));
            }
        }
        Ok(())
    }
}

/// Largest multiplier magnitude searched when some responses are unbounded.
const NU_LIMIT: f64 = 1e12;

fn infeasible(problem: &OslcProblem) -> OslcError {
    let required: f64 = problem.load_steps.iter().sum();
    let min_supply = problem.generators.iter().map(|c| c.lower()).sum::<f64>()
        - problem.demands.iter().map(|c| c.upper()).sum::<f64>();
    let max_supply = problem.generators.iter().map(|c| c.upper()).sum::<f64>()
        - problem.demands.iter().map(|c| c.lower()).sum::<f64>();
    OslcError::Infeasible { min_supply, max_supply, required }
}

pub fn solve(problem: &OslcProblem) -> Result<OslcSolution, OslcError> {
    problem.validate()?;
    let root = decreasing_root(|nu| problem.balance(nu), NU_LIMIT).ok_or_else(|| infeasible(problem))?;
    let nu = root.value;
    let status = if root.plateau { MultiplierStatus::DegenerateMultiplier } else { MultiplierStatus::Unique };

    let p_m: Vec<f64> = problem.generators.iter().map(|c| c.response(-nu)).collect();
    let d_c: Vec<f64> = problem.demands.iter().map(|c| c.response(nu)).collect();
    let d_u: Vec<f64> = problem.dampings.iter().map(|&d| d * nu).collect();
    let residual = problem.balance(nu);
    let scale = 1.0 + problem.load_steps.iter().map(|p| p.abs()).sum::<f64>();
    if residual.abs() > 1e-9 * scale {
        return Err(OslcError::ToleranceNotMet { residual });
    }

    let mut lambda_plus = Vec::new();
    let mut lambda_minus = Vec::new();
    for c in &problem.generators {
        lambda_plus.push(if c.upper().is_finite() { (-c.derivative_left(c.upper()) - nu).max(0.0) } else { 0.0 });
        lambda_minus.push(if c.lower().is_finite() { (nu + c.derivative_right(c.lower())).max(0.0) } else { 0.0 });
    }
    let mut mu_plus = Vec::new();
    let mut mu_minus = Vec::new();
    for c in &problem.demands {
        mu_plus.push(if c.upper().is_finite() { (nu - c.derivative_left(c.upper())).max(0.0) } else { 0.0 });
        mu_minus.push(if c.lower().is_finite() { (c.derivative_right(c.lower()) - nu).max(0.0) } else { 0.0 });
    }
    Ok(OslcSolution { p_m, d_c, d_u, nu, lambda_plus, lambda_minus, mu_plus, mu_minus, status })
}

pub fn predicted_frequency(problem: &OslcProblem) -> Result<f64, OslcError> {
    solve(problem).map(|s| s.nu)
}

/// Per-condition KKT residuals. Stationarity is measured as the distance
/// of the required value to the subdifferential interval.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    pub stationarity_generation: f64,
    pub stationarity_demand: f64,
    pub stationarity_uncontrollable: f64,
    pub balance: f64,
    pub primal_feasibility: f64,
    pub dual_feasibility: f64,
    pub complementary_slackness: f64,
    /// Smallest mismatch between the required value and either one-sided
    /// derivative over all controllable variables. Nonzero when the optimum
    /// sits on a kink with the required value strictly inside the
    /// subdifferential, so derivative equality cannot hold there.
    pub derivative_gap: f64,
    pub tol: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.stationarity_generation,
            self.stationarity_demand,
            self.stationarity_uncontrollable,
            self.balance,
            self.primal_feasibility,
            self.dual_feasibility,
            self.complementary_slackness,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_residual() < self.tol
    }

    /// Whether stationarity expressed with derivatives would hold.
    pub fn derivative_equality_holds(&self) -> bool {
        self.derivative_gap < self.tol
    }
}

fn interval_distance(v: f64, (lo, hi): (f64, f64)) -> f64 {
    if v < lo {
        lo - v
    } else if v > hi {
        v - hi
    } else {
        0.0
    }
}

fn derivative_mismatch(v: f64, (lo, hi): (f64, f64)) -> f64 {
    (v - lo).abs().min((v - hi).abs())
}

pub fn verify_kkt(problem: &OslcProblem, s: &OslcSolution, tol: f64) -> KktReport {
    let mut report = KktReport {
        stationarity_generation: 0.0,
        stationarity_demand: 0.0,
        stationarity_uncontrollable: 0.0,
        balance: 0.0,
        primal_feasibility: 0.0,
        dual_feasibility: 0.0,
        complementary_slackness: 0.0,
        derivative_gap: 0.0,
        tol,
    };
    let dims_ok = s.p_m.len() == problem.generators.len()
        && s.lambda_plus.len() == problem.generators.len()
        && s.lambda_minus.len() == problem.generators.len()
        && s.d_c.len() == problem.demands.len()
        && s.mu_plus.len() == problem.demands.len()
        && s.mu_minus.len() == problem.demands.len()
        && s.d_u.len() == problem.dampings.len();
    if !dims_ok {
        report.primal_feasibility = f64::INFINITY;
        return report;
    }

    let mut gap: f64 = 0.0;
    let nu = s.nu;
    for (j, c) in problem.generators.iter().enumerate() {
        let p = s.p_m[j];
        let (lp, lm) = (s.lambda_plus[j], s.lambda_minus[j]);
        let target = -nu - lp + lm;
        let sub = c.subdifferential(p);
        report.stationarity_generation = report.stationarity_generation.max(interval_distance(target, sub));
        gap = gap.max(derivative_mismatch(target, sub));
        report.primal_feasibility = report.primal_feasibility.max((c.lower() - p).max(p - c.upper()).max(0.0));
        report.dual_feasibility = report.dual_feasibility.max((-lp).max(-lm).max(0.0));
        let slack_hi = if c.upper().is_finite() { lp * (c.upper() - p) } else { lp };
        let slack_lo = if c.lower().is_finite() { lm * (p - c.lower()) } else { lm };
        report.complementary_slackness = report.complementary_slackness.max(slack_hi.abs()).max(slack_lo.abs());
    }
    for (j, c) in problem.demands.iter().enumerate() {
        let d = s.d_c[j];
        let (mp, mm) = (s.mu_plus[j], s.mu_minus[j]);
        let target = nu - mp + mm;
        let sub = c.subdifferential(d);
        report.stationarity_demand = report.stationarity_demand.max(interval_distance(target, sub));
        gap = gap.max(derivative_mismatch(target, sub));
        report.primal_feasibility = report.primal_feasibility.max((c.lower() - d).max(d - c.upper()).max(0.0));
        report.dual_feasibility = report.dual_feasibility.max((-mp).max(-mm).max(0.0));
        let slack_hi = if c.upper().is_finite() { mp * (c.upper() - d) } else { mp };
        let slack_lo = if c.lower().is_finite() { mm * (d - c.lower()) } else { mm };
        report.complementary_slackness = report.complementary_slackness.max(slack_hi.abs()).max(slack_lo.abs());
    }
    for (j, &damp) in problem.dampings.iter().enumerate() {
        // h^{-1}(d^u) = nu, i.e. d^u = D nu
        report.stationarity_uncontrollable = report.stationarity_uncontrollable.max((s.d_u[j] - damp * nu).abs());
    }
    let supply: f64 = s.p_m.iter().sum::<f64>() - s.d_c.iter().sum::<f64>() - s.d_u.iter().sum::<f64>();
    report.balance = (supply - problem.load_steps.iter().sum::<f64>()).abs();
    report.derivative_gap = gap;
    report
}
