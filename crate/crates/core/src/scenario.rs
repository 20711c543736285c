//! Versioned TOML scenario files.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::controllers::{
    make_deadband_droop, make_dynamic_oslc, make_static_oslc, make_turbine_governor, make_uncontrollable_load,
    AffinePiece, ControllerError, CostFunction, Deadband, Droop,
};
use crate::network::{Bus, BusId, BusKind, Line, NetworkModel};
use crate::simulator::SimConfig;
use crate::system::{PlacedBlock, PowerSystem};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("unsupported schema_version {0}, expected {SCHEMA_VERSION}")]
    Version(u32),
    #[error("block {index}: {source}")]
    Block { index: usize, source: ControllerError },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema_version: u32,
    name: Option<String>,
    #[serde(default)]
    description: String,
    #[serde(rename = "bus")]
    buses: Vec<BusSpec>,
    #[serde(rename = "line", default)]
    lines: Vec<LineSpec>,
    #[serde(rename = "block", default)]
    blocks: Vec<BlockSpec>,
    #[serde(default)]
    simulation: SimulationSpec,
    #[serde(default)]
    analysis: AnalysisToggles,
    delay_sweep: Option<DelaySweep>,
    gain_sweep: Option<GainSweep>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum BusSpec {
    Generator {
        id: BusId,
        inertia: f64,
        #[serde(default)]
        load_step: f64,
    },
    Load {
        id: BusId,
        #[serde(default)]
        load_step: f64,
    },
}

impl BusSpec {
    fn build(&self) -> Bus {
        match *self {
            BusSpec::Generator { id, inertia, load_step } => {
                Bus { id, kind: BusKind::Generator { inertia }, load_step }
            }
            BusSpec::Load { id, load_step } => Bus { id, kind: BusKind::Load, load_step },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineSpec {
    from: BusId,
    to: BusId,
    susceptance: f64,
    #[serde(default)]
    nominal_flow: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSpec {
    Quadratic { alpha: f64, min: Option<f64>, max: Option<f64> },
    Piecewise { breakpoints: Vec<f64>, intercepts: Vec<f64>, curvatures: Vec<f64>, min: Option<f64>, max: Option<f64> },
    Deadband { omega0: f64, omega1: f64, slope: f64 },
}

impl CostSpec {
    pub fn build(&self) -> Result<CostFunction, ControllerError> {
        let bounds = |c: CostFunction, min: Option<f64>, max: Option<f64>| {
            c.with_bounds(min.unwrap_or(f64::NEG_INFINITY), max.unwrap_or(f64::INFINITY))
        };
        match self {
            CostSpec::Quadratic { alpha, min, max } => bounds(CostFunction::quadratic(*alpha)?, *min, *max),
            CostSpec::Piecewise { breakpoints, intercepts, curvatures, min, max } => {
                if intercepts.len() != curvatures.len() {
                    return Err(ControllerError::InvalidCost("intercepts and curvatures differ in length".into()));
                }
                let pieces = intercepts
                    .iter()
                    .zip(curvatures)
                    .map(|(&intercept, &curvature)| AffinePiece { intercept, curvature })
                    .collect();
                bounds(CostFunction::piecewise(breakpoints.clone(), pieces)?, *min, *max)
            }
            CostSpec::Deadband { omega0, omega1, slope } => {
                Ok(CostFunction::deadband(&Deadband::new(*omega0, *omega1, *slope)?))
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum DroopSpec {
    Linear { gain: f64 },
    Deadband { omega0: f64, omega1: f64, slope: f64 },
    Cost { cost: CostSpec },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum BlockSpec {
    StaticOslc { bus: BusId, cost: CostSpec, delay: Option<f64> },
    DynamicOslc { bus: BusId, cost: CostSpec, delay: Option<f64> },
    TurbineGovernor { bus: BusId, tau_g: f64, tau_b: f64, droop: DroopSpec, delay: Option<f64> },
    Deadband { bus: BusId, omega0: f64, omega1: f64, slope: f64, delay: Option<f64> },
    UncontrollableLoad { bus: BusId, damping: f64 },
}

impl BlockSpec {
    fn build(&self) -> Result<PlacedBlock, ControllerError> {
        let (bus, block, delay) = match self {
            BlockSpec::StaticOslc { bus, cost, delay } => (*bus, make_static_oslc(cost.build()?)?, *delay),
            BlockSpec::DynamicOslc { bus, cost, delay } => (*bus, make_dynamic_oslc(cost.build()?)?, *delay),
            BlockSpec::TurbineGovernor { bus, tau_g, tau_b, droop, delay } => {
                let droop = match droop {
                    DroopSpec::Linear { gain } => Droop::Linear { gain: *gain },
                    DroopSpec::Deadband { omega0, omega1, slope } => {
                        Droop::Deadband(Deadband::new(*omega0, *omega1, *slope)?)
                    }
                    DroopSpec::Cost { cost } => Droop::Cost(cost.build()?),
                };
                (*bus, make_turbine_governor(*tau_g, *tau_b, droop)?, *delay)
            }
            BlockSpec::Deadband { bus, omega0, omega1, slope, delay } => {
                (*bus, make_deadband_droop(*omega0, *omega1, *slope)?, *delay)
            }
            BlockSpec::UncontrollableLoad { bus, damping } => (*bus, make_uncontrollable_load(*damping)?, None),
        };
        Ok(PlacedBlock::new(bus, block.with_delay(delay.unwrap_or(0.0))))
    }

    fn delay(&self) -> Option<f64> {
        match self {
            BlockSpec::StaticOslc { delay, .. }
            | BlockSpec::DynamicOslc { delay, .. }
            | BlockSpec::TurbineGovernor { delay, .. }
            | BlockSpec::Deadband { delay, .. } => *delay,
            BlockSpec::UncontrollableLoad { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SimulationSpec {
    dt: f64,
    t_end: f64,
    control_hold: f64,
    algebraic_tol: f64,
    algebraic_max_iter: usize,
    divergence_threshold: f64,
    load_inertia: Option<f64>,
    sample_every: usize,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        let c = SimConfig::default();
        Self {
            dt: c.dt,
            t_end: c.t_end,
            control_hold: c.control_hold,
            algebraic_tol: c.algebraic_tol,
            algebraic_max_iter: c.algebraic_max_iter,
            divergence_threshold: c.divergence_threshold,
            load_inertia: c.load_inertia,
            sample_every: c.sample_every,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisToggles {
    pub lyapunov: bool,
    pub comparison: bool,
}

impl Default for AnalysisToggles {
    fn default() -> Self {
        Self { lyapunov: true, comparison: true }
    }
}

/// Delays applied to every OSLC block, each run once with the static and
/// once with the dynamic law.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySweep {
    pub delays: Vec<f64>,
    /// Loop gain `K` used by the passivity verdict.
    #[serde(default = "unit")]
    pub gain: f64,
    /// Final-time distance to the equilibrium frequency counted as converged.
    #[serde(default = "convergence_tol")]
    pub convergence_tol: f64,
}

fn unit() -> f64 {
    1.0
}

fn convergence_tol() -> f64 {
    1e-3
}

/// Droop gains, as multiples of the bus damping, for the turbine-governor
/// passivity table.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSweep {
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub system: PowerSystem,
    pub sim: SimConfig,
    pub analysis: AnalysisToggles,
    pub delay_sweep: Option<DelaySweep>,
    pub gain_sweep: Option<GainSweep>,
}

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| SchemaError::Io { path: path.display().to_string(), source })?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
        Self::from_toml(&text, stem)
    }

    /// Parses a scenario; `default_name` is used when the file has no `name`.
    pub fn from_toml(text: &str, default_name: &str) -> Result<Self, SchemaError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| SchemaError::Parse(e.to_string()))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(SchemaError::Version(file.schema_version));
        }
        for (index, b) in file.blocks.iter().enumerate() {
            if let Some(d) = b.delay() {
                if !(d >= 0.0 && d.is_finite()) {
                    return Err(SchemaError::Invalid(format!("block {index}: delay {d} must be nonnegative")));
                }
            }
        }
        let buses = file.buses.iter().map(BusSpec::build).collect();
        let lines = file
            .lines
            .iter()
            .map(|l| Line::new(l.from, l.to, l.susceptance).with_nominal_flow(l.nominal_flow))
            .collect();
        let blocks = file
            .blocks
            .iter()
            .enumerate()
            .map(|(index, b)| b.build().map_err(|source| SchemaError::Block { index, source }))
            .collect::<Result<Vec<_>, _>>()?;
        let system = PowerSystem::new(NetworkModel::new(buses, lines), blocks);
        system.validate_placement().map_err(|e| SchemaError::Invalid(e.to_string()))?;

        let s = &file.simulation;
        let sim = SimConfig {
            dt: s.dt,
            t_end: s.t_end,
            control_hold: s.control_hold,
            algebraic_tol: s.algebraic_tol,
            algebraic_max_iter: s.algebraic_max_iter,
            divergence_threshold: s.divergence_threshold,
            load_inertia: s.load_inertia,
            sample_every: s.sample_every,
        };
        if !(sim.dt > 0.0 && sim.t_end >= sim.dt) {
            return Err(SchemaError::Invalid(format!(
                "simulation needs dt > 0 and t_end >= dt (dt={}, t_end={})",
                sim.dt, sim.t_end
            )));
        }
        if sim.sample_every == 0 || !(sim.algebraic_tol > 0.0) || sim.algebraic_max_iter == 0 {
            return Err(SchemaError::Invalid("sample_every, algebraic_tol and algebraic_max_iter must be positive".into()));
        }
        if let Some(sweep) = &file.delay_sweep {
            if sweep.delays.is_empty() || sweep.delays.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
                return Err(SchemaError::Invalid("delay_sweep.delays must be nonempty and nonnegative".into()));
            }
        }
        if let Some(sweep) = &file.gain_sweep {
            if sweep.ratios.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
                return Err(SchemaError::Invalid("gain_sweep.ratios must be nonnegative".into()));
            }
        }
        Ok(Self {
            name: file.name.unwrap_or_else(|| default_name.to_string()),
            description: file.description,
            system,
            sim,
            analysis: file.analysis,
            delay_sweep: file.delay_sweep,
            gain_sweep: file.gain_sweep,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1

[[bus]]
id = 1
kind = "generator"
inertia = 1.0
load_step = 0.1

[[block]]
type = "uncontrollable_load"
bus = 1
damping = 1.0
"#;

    #[test]
    fn parses_minimal() {
        let s = Scenario::from_toml(MINIMAL, "minimal").unwrap();
        assert_eq!(s.name, "minimal");
        assert_eq!(s.system.blocks.len(), 1);
        assert_eq!(s.sim, SimConfig::default());
    }

    #[test]
    fn rejects_unknown_fields() {
        let bad = MINIMAL.replace("damping = 1.0", "damping = 1.0\ndampnig = 2.0");
        assert!(matches!(Scenario::from_toml(&bad, "x"), Err(SchemaError::Parse(_))));
        let bad = MINIMAL.replace("inertia = 1.0", "inertia = 1.0\ninertai = 2.0");
        assert!(matches!(Scenario::from_toml(&bad, "x"), Err(SchemaError::Parse(_))));
    }

    #[test]
    fn rejects_wrong_version_and_bad_params() {
        let bad = MINIMAL.replace("schema_version = 1", "schema_version = 7");
        assert!(matches!(Scenario::from_toml(&bad, "x"), Err(SchemaError::Version(7))));
        let bad = MINIMAL.replace("damping = 1.0", "damping = -1.0");
        assert!(matches!(Scenario::from_toml(&bad, "x"), Err(SchemaError::Block { index: 0, .. })));
        let bad = format!("{MINIMAL}\n[simulation]\ndt = 0.01\nt_end = 0.001\n");
        assert!(matches!(Scenario::from_toml(&bad, "x"), Err(SchemaError::Invalid(_))));
    }
}
