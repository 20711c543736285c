use nalgebra::{DMatrix, DVector};

use super::{certify_tg_storage, AnalysisError, EquilibriumSolution};
use crate::controllers::{BlockKind, Droop};
use crate::simulator::{SimState, Trajectory};
use crate::system::PowerSystem;

/// Allowed per-step increase of the Lyapunov value.
pub const MONOTONE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub enum Storage {
    /// Memoryless blocks store nothing.
    Memoryless,
    /// `1/2 (x - x*)^T P (x - x*)`.
    Quadratic { p: DMatrix<f64>, center: Vec<f64> },
}

impl Storage {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Storage::Memoryless => 0.0,
            Storage::Quadratic { p, center } => {
                let z = DVector::from_iterator(x.len(), x.iter().zip(center).map(|(a, b)| a - b));
                0.5 * z.dot(&(p * &z))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovBreakdown {
    pub v_f: f64,
    pub v_p: f64,
    pub storages: Vec<f64>,
    pub total: f64,
}

/// Network Lyapunov function around an equilibrium: kinetic energy, line
/// potential energy and the block storage functions.
#[derive(Debug, Clone, PartialEq)]
pub struct Lyapunov {
    omega_star: f64,
    inertias: Vec<f64>,
    lines: Vec<(f64, f64)>,
    storages: Vec<Storage>,
}

impl Lyapunov {
    pub fn new(system: &PowerSystem, eq: &EquilibriumSolution) -> Result<Self, AnalysisError> {
        let mut storages = Vec::with_capacity(system.blocks.len());
        for (k, pb) in system.blocks.iter().enumerate() {
            let none = AnalysisError::NoStorageAvailable { block: k };
            if pb.block.delay() > 0.0 {
                return Err(none);
            }
            let storage = match pb.block.kind() {
                BlockKind::DynamicOslc { .. } => {
                    Storage::Quadratic { p: DMatrix::identity(1, 1), center: eq.block_states[k].clone() }
                }
                BlockKind::TurbineGovernor { tau_g, tau_b, droop } => {
                    let sharing = system
                        .blocks_at(pb.bus)
                        .filter(|(_, o)| matches!(o.block.kind(), BlockKind::TurbineGovernor { .. }))
                        .count();
                    let damping = system.damping_at(pb.bus) / sharing as f64;
                    let gain = droop.sector_gain();
                    let kappas: Vec<f64> = match droop {
                        Droop::Linear { .. } => vec![gain],
                        _ => vec![0.0, gain],
                    };
                    let cert = certify_tg_storage(*tau_g, *tau_b, &kappas, damping).ok_or(none)?;
                    let p = DMatrix::from_iterator(2, 2, cert.p.iter().cloned());
                    Storage::Quadratic { p, center: eq.block_states[k].clone() }
                }
                _ => Storage::Memoryless,
            };
            storages.push(storage);
        }
        let inertias = system.model.buses.iter().filter_map(|b| b.inertia()).collect();
        let lines = system.model.lines.iter().zip(&eq.eta).map(|(l, &e)| (l.susceptance, e)).collect();
        Ok(Self { omega_star: eq.omega_star, inertias, lines, storages })
    }

    pub fn storages(&self) -> &[Storage] {
        &self.storages
    }

    pub fn value(&self, state: &SimState) -> LyapunovBreakdown {
        let v_f = 0.5
            * self
                .inertias
                .iter()
                .zip(&state.omega_gen)
                .map(|(m, w)| m * (w - self.omega_star).powi(2))
                .sum::<f64>();
        let v_p = self
            .lines
            .iter()
            .zip(&state.eta)
            .map(|(&(b, es), &e)| b * (es.cos() - e.cos() - (e - es) * es.sin()))
            .sum::<f64>();
        let storages: Vec<f64> = self.storages.iter().zip(&state.blocks).map(|(s, x)| s.value(x)).collect();
        let total = v_f + v_p + storages.iter().sum::<f64>();
        LyapunovBreakdown { v_f, v_p, storages, total }
    }
}

pub fn lyapunov_value(
    system: &PowerSystem,
    state: &SimState,
    eq: &EquilibriumSolution,
) -> Result<LyapunovBreakdown, AnalysisError> {
    Ok(Lyapunov::new(system, eq)?.value(state))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneReport {
    pub max_increase: f64,
    pub first_violation: Option<f64>,
    pub total_decay: f64,
    pub passed: bool,
}

pub fn check_monotone_values(times: &[f64], values: &[f64]) -> MonotoneReport {
    let mut max_increase: f64 = 0.0;
    let mut first_violation = None;
    for k in 1..values.len() {
        let inc = values[k] - values[k - 1];
        max_increase = max_increase.max(inc);
        if inc > MONOTONE_TOL && first_violation.is_none() {
            first_violation = Some(times[k]);
        }
    }
    let total_decay = match (values.first(), values.last()) {
        (Some(a), Some(b)) => a - b,
        _ => 0.0,
    };
    MonotoneReport { max_increase, first_violation, total_decay, passed: first_violation.is_none() }
}

/// Monotonicity of the Lyapunov samples, or `None` if the trajectory has none.
pub fn check_monotone(trajectory: &Trajectory) -> Option<MonotoneReport> {
    let values = trajectory.lyapunov()?;
    Some(check_monotone_values(&trajectory.times(), &values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrupted_sample_flagged() {
        let times: Vec<f64> = (0..100).map(|k| k as f64 * 0.1).collect();
        let mut values: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
        assert!(check_monotone_values(&times, &values).passed);
        values[50] += 1.0;
        let r = check_monotone_values(&times, &values);
        assert!(!r.passed);
        assert_eq!(r.first_violation, Some(times[50]));
    }

    #[test]
    fn potential_term_closed_form() {
        let l = Lyapunov { omega_star: 0.0, inertias: vec![], lines: vec![(2.0, 0.3)], storages: vec![] };
        let s = SimState { t: 0.0, eta: vec![0.35], omega_gen: vec![], omega_load: vec![], blocks: vec![] };
        let want = 2.0 * (0.3f64.cos() - 0.35f64.cos() - 0.05 * 0.3f64.sin());
        let got = l.value(&s).v_p;
        assert!((got - want).abs() < 1e-15);
        assert!(got > 0.0);
    }
}
