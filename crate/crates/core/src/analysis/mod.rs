//! Equilibria, Lyapunov functions, storage certificates and the
//! steady-state comparison with and without controllable demand.

mod equilibrium;
mod lyapunov;
mod storage;

pub use equilibrium::{
    equilibrium_residuals, find_equilibrium, oslc_problem, steady_state_comparison, EquilibriumSolution,
};
pub use lyapunov::{check_monotone, check_monotone_values, lyapunov_value, Lyapunov, LyapunovBreakdown, MonotoneReport, Storage};
pub use storage::{certify_tg_storage, dissipation_margin, StorageSource, TgStorage};

use thiserror::Error;

use crate::network::BusId;
use crate::system::SystemError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("no frequency balances supply and demand within the block limits")]
    BalanceInfeasible,
    #[error("phase angle solve failed (residual {residual})")]
    AngleSolveFailed { residual: f64 },
    #[error("line {from}->{to} has equilibrium angle {eta} outside (-pi/2, pi/2)")]
    SecurityViolated { from: BusId, to: BusId, eta: f64 },
    #[error("equilibrium condition `{condition}` has residual {residual}")]
    ResidualTooLarge { condition: String, residual: f64 },
    #[error("block {block} has no certified storage function")]
    NoStorageAvailable { block: usize },
    #[error("system has no controllable demand to compare against")]
    NoControllableDemand,
}
