//! Composite studies built from the core modules: load-step responses,
//! delay sweeps and turbine-governor gain sweeps.

use rayon::prelude::*;

use crate::analysis::{check_monotone, find_equilibrium, AnalysisError, EquilibriumSolution, Lyapunov, MonotoneReport};
use crate::controllers::{make_dynamic_oslc, make_static_oslc, BlockKind, ControllerError};
use crate::passivity::{delay_passivity_check, isp_margin, tg_min_real, FrequencyGrid, TransferFunction};
use crate::simulator::{simulate_outcome, SimConfig, SimError, SimOutcome, SimState};
use crate::system::PowerSystem;

/// Final-time frequency distance counted as converged.
pub const CONVERGENCE_TOL: f64 = 1e-3;

/// The system with every load step removed.
pub fn pre_step(system: &PowerSystem) -> PowerSystem {
    let mut pre = system.clone();
    for b in &mut pre.model.buses {
        b.load_step = 0.0;
    }
    pre
}

/// Equilibrium of the system before its load steps, as a simulator state.
pub fn pre_step_state(system: &PowerSystem) -> Result<SimState, AnalysisError> {
    Ok(find_equilibrium(&pre_step(system))?.to_state(system))
}

#[derive(Debug, Clone)]
pub struct StepResponse {
    pub equilibrium: EquilibriumSolution,
    pub outcome: SimOutcome,
    /// Why no Lyapunov function was attached, if none was.
    pub lyapunov_unavailable: Option<AnalysisError>,
    pub monotone: Option<MonotoneReport>,
}

impl StepResponse {
    /// Largest final-time distance of any bus frequency from the equilibrium.
    pub fn final_deviation(&self) -> f64 {
        let omega_star = self.equilibrium.omega_star;
        self.outcome.trajectory.last().omega.iter().map(|w| (w - omega_star).abs()).fold(0.0, f64::max)
    }

    pub fn converged(&self, tol: f64) -> bool {
        self.outcome.error.is_none() && self.final_deviation() < tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StudyError {
    Analysis(AnalysisError),
    Sim(SimError),
    Controller(ControllerError),
}

impl std::fmt::Display for StudyError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StudyError::Analysis(e) => e.fmt(f),
            StudyError::Sim(e) => e.fmt(f),
            StudyError::Controller(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for StudyError {}

impl From<AnalysisError> for StudyError {
    fn from(e: AnalysisError) -> Self {
        StudyError::Analysis(e)
    }
}

impl From<SimError> for StudyError {
    fn from(e: SimError) -> Self {
        StudyError::Sim(e)
    }
}

/// Simulates the load step from the pre-step equilibrium, tracking the
/// Lyapunov function when `lyapunov` is set and one can be built.
pub fn step_response(system: &PowerSystem, config: &SimConfig, lyapunov: bool) -> Result<StepResponse, StudyError> {
    let equilibrium = find_equilibrium(system)?;
    let initial = pre_step_state(system)?;
    let (v, lyapunov_unavailable) = if lyapunov {
        match Lyapunov::new(system, &equilibrium) {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e)),
        }
    } else {
        (None, None)
    };
    let outcome = simulate_outcome(system, config, &initial, v.as_ref())?;
    let monotone = check_monotone(&outcome.trajectory);
    Ok(StepResponse { equilibrium, outcome, lyapunov_unavailable, monotone })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum OslcLaw {
    Static,
    Dynamic,
}

impl OslcLaw {
    pub fn name(self) -> &'static str {
        match self {
            OslcLaw::Static => "static",
            OslcLaw::Dynamic => "dynamic",
        }
    }
}

/// Replaces every OSLC block by the chosen law with the same cost, behind
/// the given input delay.
pub fn retarget_oslc(system: &PowerSystem, law: OslcLaw, delay: f64) -> Result<PowerSystem, ControllerError> {
    let mut out = system.clone();
    for pb in &mut out.blocks {
        let cost = match pb.block.kind() {
            BlockKind::StaticOslc { cost } | BlockKind::DynamicOslc { cost } => cost.clone(),
            _ => continue,
        };
        let block = match law {
            OslcLaw::Static => make_static_oslc(cost)?,
            OslcLaw::Dynamic => make_dynamic_oslc(cost)?,
        };
        pb.block = block.with_delay(delay);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunVerdict {
    Converged,
    /// Ran to the end without settling.
    NotConverged,
    Diverged { t: f64 },
    Failed(String),
}

impl RunVerdict {
    pub fn name(&self) -> &'static str {
        match self {
            RunVerdict::Converged => "converged",
            RunVerdict::NotConverged => "not_converged",
            RunVerdict::Diverged { .. } => "diverged",
            RunVerdict::Failed(_) => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayRow {
    pub delay: f64,
    pub law: OslcLaw,
    pub verdict: RunVerdict,
    pub final_deviation: f64,
    /// Smallest margin over the OSLC blocks; `None` if a block could not be
    /// linearized.
    pub passivity_margin: Option<f64>,
    pub passive: bool,
}

impl DelayRow {
    /// Passivity verdict and simulation outcome say the same thing.
    pub fn agrees(&self) -> bool {
        self.passive == (self.verdict == RunVerdict::Converged)
    }

    /// A passive verdict was not contradicted. Passivity is sufficient, not
    /// necessary, so a non-passive run may still converge.
    pub fn consistent(&self) -> bool {
        !self.passive || self.verdict == RunVerdict::Converged
    }
}

/// Runs every `delay x {static, dynamic}` combination in parallel. Rows come
/// back in delay order, static before dynamic.
pub fn delay_sweep(
    system: &PowerSystem,
    config: &SimConfig,
    delays: &[f64],
    gain: f64,
    tol: f64,
) -> Result<Vec<DelayRow>, StudyError> {
    let equilibrium = find_equilibrium(system)?;
    let cases: Vec<(f64, OslcLaw)> =
        delays.iter().flat_map(|&d| [(d, OslcLaw::Static), (d, OslcLaw::Dynamic)]).collect();
    cases
        .par_iter()
        .map(|&(delay, law)| {
            let sys = retarget_oslc(system, law, delay).map_err(StudyError::Controller)?;
            let initial = pre_step_state(&retarget_oslc(system, law, 0.0).map_err(StudyError::Controller)?)?;
            let outcome = simulate_outcome(&sys, config, &initial, None)?;
            let final_deviation = outcome
                .trajectory
                .last()
                .omega
                .iter()
                .map(|w| (w - equilibrium.omega_star).abs())
                .fold(0.0, f64::max);
            let verdict = match &outcome.error {
                None if final_deviation < tol => RunVerdict::Converged,
                None => RunVerdict::NotConverged,
                Some(SimError::NonFiniteState { t }) => RunVerdict::Diverged { t: *t },
                Some(e) => RunVerdict::Failed(e.to_string()),
            };
            let mut margin = Some(f64::INFINITY);
            let mut passive = true;
            for pb in &sys.blocks {
                if !matches!(pb.block.kind(), BlockKind::StaticOslc { .. } | BlockKind::DynamicOslc { .. }) {
                    continue;
                }
                let undelayed = pb.block.clone().with_delay(0.0);
                let damping = sys.damping_at(pb.bus);
                match delay_passivity_check(&undelayed, -equilibrium.omega_star, delay, damping, gain, FrequencyGrid::default()) {
                    Ok(r) => {
                        passive &= r.passed();
                        margin = margin.map(|m| m.min(r.margin));
                    }
                    Err(_) => {
                        passive = false;
                        margin = None;
                    }
                }
            }
            Ok(DelayRow { delay, law, verdict, final_deviation, passivity_margin: margin, passive })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainRow {
    pub ratio: f64,
    pub gain: f64,
    /// `D + K min Re T(jw)` from the closed form.
    pub closed_form_margin: f64,
    /// Same quantity from the frequency scan.
    pub scanned_margin: f64,
    pub passive: bool,
}

/// Input-strict-passivity margins of `K T(s) + D` for droop gains `K = r D`.
pub fn gain_sweep(tau_g: f64, tau_b: f64, damping: f64, ratios: &[f64]) -> Result<Vec<GainRow>, crate::passivity::PassivityError> {
    let (min_re, _) = tg_min_real(tau_g, tau_b)?;
    ratios
        .par_iter()
        .map(|&ratio| {
            let gain = ratio * damping;
            let tf = TransferFunction::turbine_governor(tau_g, tau_b).scaled(gain).with_feedthrough(damping);
            let scan = isp_margin(&tf, FrequencyGrid::default())?;
            let closed_form_margin = damping + gain * min_re;
            Ok(GainRow { ratio, gain, closed_form_margin, scanned_margin: scan.margin, passive: closed_form_margin > 0.0 })
        })
        .collect()
}
