//! Controller blocks: state-space systems driven by `u = -omega` whose output
//! is a power (mechanical power for generation, demand otherwise).

mod block;
mod cost;
mod delay;

pub use block::{check_assumption4, BlockKind, ControllerBlock, Droop, Linearization, Role};
pub use cost::{AffinePiece, CostFunction, CostShape, Deadband};
pub use delay::DelayLine;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("invalid cost: {0}")]
    InvalidCost(String),
    #[error("invalid deadband omega0={omega0}, omega1={omega1}, slope={slope}")]
    InvalidDeadband { omega0: f64, omega1: f64, slope: f64 },
    #[error("invalid time constants tau_g={tau_g}, tau_b={tau_b}")]
    InvalidTimeConstant { tau_g: f64, tau_b: f64 },
    #[error("invalid damping {0}")]
    InvalidDamping(f64),
    #[error("invalid droop gain {0}")]
    InvalidGain(f64),
    #[error("invalid time step {0}")]
    InvalidStep(f64),
    #[error("block state became non-finite at t={t}")]
    NonFiniteState { t: f64 },
    #[error("block did not settle within {steps} steps")]
    NoConvergence { steps: usize },
    #[error("block is not differentiable at input {input}")]
    NotDifferentiable { input: f64 },
}

pub fn make_static_oslc(cost: CostFunction) -> Result<ControllerBlock, ControllerError> {
    if !cost.has_finite_bounds() {
        return Err(ControllerError::InvalidCost("static OSLC needs finite demand bounds".into()));
    }
    Ok(ControllerBlock::new(BlockKind::StaticOslc { cost }))
}

pub fn make_dynamic_oslc(cost: CostFunction) -> Result<ControllerBlock, ControllerError> {
    if !cost.is_smooth() {
        return Err(ControllerError::InvalidCost("dynamic OSLC needs a continuously differentiable cost".into()));
    }
    Ok(ControllerBlock::new(BlockKind::DynamicOslc { cost }))
}

pub fn make_turbine_governor(tau_g: f64, tau_b: f64, droop: Droop) -> Result<ControllerBlock, ControllerError> {
    let ok = |t: f64| t > 0.0 && t.is_finite();
    if !(ok(tau_g) && ok(tau_b)) {
        return Err(ControllerError::InvalidTimeConstant { tau_g, tau_b });
    }
    if let Droop::Linear { gain } = droop {
        if !(gain >= 0.0 && gain.is_finite()) {
            return Err(ControllerError::InvalidGain(gain));
        }
    }
    Ok(ControllerBlock::new(BlockKind::TurbineGovernor { tau_g, tau_b, droop }))
}

/// Deadband demand response: `d = DB(omega)`.
pub fn make_deadband_droop(omega0: f64, omega1: f64, slope: f64) -> Result<ControllerBlock, ControllerError> {
    Ok(ControllerBlock::new(BlockKind::DeadbandDemand(Deadband::new(omega0, omega1, slope)?)))
}

pub fn make_uncontrollable_load(damping: f64) -> Result<ControllerBlock, ControllerError> {
    if !(damping > 0.0 && damping.is_finite()) {
        return Err(ControllerError::InvalidDamping(damping));
    }
    Ok(ControllerBlock::new(BlockKind::UncontrollableLoad { damping }))
}
