//! Scenario-driven command line front end. Every subcommand builds its
//! artifacts in memory and writes them only after it has succeeded.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::analysis::{certify_tg_storage, equilibrium_residuals, find_equilibrium, oslc_problem, steady_state_comparison, AnalysisError};
use crate::controllers::{BlockKind, Droop, Role};
use crate::oslc::{self, verify_kkt, OslcError};
use crate::passivity::{
    bus_passivity, isp_margin, l2_small_gain_certificate, max_gain_ratio, remark_storage_coefficients, tg_min_real,
    FrequencyGrid, FrequencyResponse, PassivityError, TransferFunction,
};
use crate::report::{fmt_g12, trajectory_csv, write_atomic, Summary, Table};
use crate::scenario::{Scenario, SchemaError};
use crate::simulator::SimError;
use crate::studies::{delay_sweep, gain_sweep, step_response, StudyError, CONVERGENCE_TOL};
use crate::system::SystemError;

#[derive(Debug, Parser)]
#[command(name = "freqctl", version, about = "Primary frequency control scenarios: simulation, equilibria, OSLC and passivity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Seed for randomized runs; recorded in reports.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load-step trajectory from the pre-step equilibrium.
    Simulate(ScenarioArg),
    /// Post-step equilibrium report.
    Equilibrium(ScenarioArg),
    /// Optimal supply and load control solution with KKT residuals.
    Oslc(ScenarioArg),
    /// Per-bus passivity margins and turbine-governor certificates.
    Passivity(ScenarioArg),
    /// Passivity margin of a transfer function given by its coefficients.
    PassivityCheck(CheckArgs),
    /// Equilibrium frequency with and without controllable demand.
    CompareDemand(ScenarioArg),
    /// Delays x {static, dynamic} OSLC: simulation outcome next to the passivity verdict.
    DelaySweep(ScenarioArg),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Equilibrium(_) => "equilibrium",
            Command::Oslc(_) => "oslc",
            Command::Passivity(_) => "passivity",
            Command::PassivityCheck(_) => "passivity-check",
            Command::CompareDemand(_) => "compare-demand",
            Command::DelaySweep(_) => "delay-sweep",
        }
    }
}

#[derive(Debug, Args)]
pub struct ScenarioArg {
    #[arg(long)]
    pub scenario: PathBuf,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Numerator coefficients in ascending powers of s.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub num: Vec<f64>,
    /// Denominator coefficients in ascending powers of s.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub den: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub delay: f64,
    /// Bus damping added as feedthrough.
    #[arg(long, default_value_t = 0.0)]
    pub damping: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gain: f64,
    #[arg(long)]
    pub w_min: Option<f64>,
    #[arg(long)]
    pub w_max: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    /// Also write the scanned Re/Im samples as CSV.
    #[arg(long)]
    pub samples: bool,
    /// Stem for the output file names.
    #[arg(long, default_value = "adhoc")]
    pub name: String,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Assumption(String),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 1,
            CliError::Schema(SchemaError::Io { .. }) => 1,
            CliError::Schema(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Assumption(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            1 => "io",
            2 => "schema",
            3 => "numeric",
            _ => "assumption",
        }
    }
}

impl From<SystemError> for CliError {
    fn from(e: SystemError) -> Self {
        match e {
            SystemError::Assumption4Failed { .. } | SystemError::Index2LoadBus { .. } => CliError::Assumption(e.to_string()),
            _ => CliError::Schema(SchemaError::Invalid(e.to_string())),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::System(s) => s.into(),
            AnalysisError::SecurityViolated { .. } | AnalysisError::NoStorageAvailable { .. } => {
                CliError::Assumption(e.to_string())
            }
            AnalysisError::NoControllableDemand => CliError::Schema(SchemaError::Invalid(e.to_string())),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::System(s) => s.into(),
            SimError::InvalidConfig(_) | SimError::Dimension(_) => CliError::Schema(SchemaError::Invalid(e.to_string())),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<StudyError> for CliError {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::Analysis(e) => e.into(),
            StudyError::Sim(e) => e.into(),
            StudyError::Controller(e) => CliError::Schema(SchemaError::Invalid(e.to_string())),
        }
    }
}

impl From<OslcError> for CliError {
    fn from(e: OslcError) -> Self {
        match e {
            OslcError::InvalidDamping(_) => CliError::Schema(SchemaError::Invalid(e.to_string())),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<PassivityError> for CliError {
    fn from(e: PassivityError) -> Self {
        match e {
            PassivityError::UnstableTransferFunction | PassivityError::LinearizationUnavailable(_) => {
                CliError::Numeric(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

/// A file to be written into the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub file_name: String,
    pub contents: String,
}

fn artifacts(stem: &str, command: &str, txt: String, csv: Option<String>) -> Vec<Artifact> {
    let mut out = vec![Artifact { file_name: format!("{stem}_{command}.txt"), contents: txt }];
    if let Some(csv) = csv {
        out.push(Artifact { file_name: format!("{stem}_{command}.csv"), contents: csv });
    }
    out
}

/// Runs a subcommand without touching the file system beyond reading the scenario.
pub fn execute(cli: &Cli) -> Result<Vec<Artifact>, CliError> {
    let name = cli.command.name();
    match &cli.command {
        Command::PassivityCheck(args) => passivity_check(args),
        Command::Simulate(a)
        | Command::Equilibrium(a)
        | Command::Oslc(a)
        | Command::Passivity(a)
        | Command::CompareDemand(a)
        | Command::DelaySweep(a) => {
            let scenario = Scenario::from_path(&a.scenario)?;
            let (txt, csv) = match &cli.command {
                Command::Simulate(_) => simulate(&scenario)?,
                Command::Equilibrium(_) => equilibrium(&scenario)?,
                Command::Oslc(_) => solve_oslc(&scenario)?,
                Command::Passivity(_) => passivity(&scenario)?,
                Command::CompareDemand(_) => compare_demand(&scenario)?,
                Command::DelaySweep(_) => sweep_delays(&scenario)?,
                Command::PassivityCheck(_) => unreachable!(),
            };
            let mut header = Summary::new();
            header.text("scenario", &scenario.name).text("subcommand", name);
            if let Some(seed) = cli.seed {
                header.text("seed", seed);
            }
            Ok(artifacts(&scenario.name, name, format!("{}{}", header.as_str(), txt), Some(csv)))
        }
    }
}

/// Writes artifacts into `dir`, each atomically.
pub fn write_artifacts(dir: &Path, files: &[Artifact]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.display().to_string(), source })?;
    for f in files {
        let path = dir.join(&f.file_name);
        write_atomic(&path, &f.contents).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    }
    Ok(())
}

/// Parses arguments, runs and writes. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = (|| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads.unwrap_or(0))
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let files = pool.install(|| execute(&cli))?;
        write_artifacts(&cli.out, &files)?;
        Ok::<_, CliError>(files)
    })();
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", cli.out.join(f.file_name).display());
            }
            0
        }
        Err(e) => {
            eprintln!("error[{}:{}]: {e}", e.exit_code(), e.kind());
            e.exit_code()
        }
    }
}

fn simulate(s: &Scenario) -> Result<(String, String), CliError> {
    s.system.validate()?;
    let run = step_response(&s.system, &s.sim, s.analysis.lyapunov)?;
    if let Some(e) = &run.outcome.error {
        return Err(e.clone().into());
    }
    let mut sum = Summary::new();
    sum.num("omega_star", run.equilibrium.omega_star)
        .num("t_end", run.outcome.trajectory.last().state.t)
        .text("samples", run.outcome.trajectory.samples.len())
        .num("final_deviation", run.final_deviation())
        .text("converged", run.converged(CONVERGENCE_TOL));
    match (&run.monotone, &run.lyapunov_unavailable) {
        (Some(m), _) => {
            sum.text("lyapunov_monotone", m.passed)
                .num("lyapunov_max_increase", m.max_increase)
                .num("lyapunov_total_decay", m.total_decay);
            if let Some(t) = m.first_violation {
                sum.num("lyapunov_first_violation", t);
            }
        }
        (None, Some(e)) => {
            sum.text("lyapunov", format!("unavailable ({e})"));
        }
        (None, None) => {
            sum.text("lyapunov", "off");
        }
    }
    Ok((sum.as_str().to_string(), trajectory_csv(&run.outcome.trajectory)))
}

fn equilibrium(s: &Scenario) -> Result<(String, String), CliError> {
    let eq = find_equilibrium(&s.system)?;
    let mut sum = Summary::new();
    sum.num("omega_star", eq.omega_star)
        .text("is_tree", eq.is_tree)
        .text("degenerate", eq.degenerate)
        .num("max_residual", eq.max_residual);
    for (cond, r) in equilibrium_residuals(&s.system, &eq) {
        sum.num(&format!("residual[{cond}]"), r);
    }
    let mut t = Table::new(&["quantity", "value"]);
    t.labeled("omega_star", &[eq.omega_star]);
    for ((from, to), (eta, flow)) in
        s.system.model.lines.iter().map(|l| (l.from, l.to)).zip(eq.eta.iter().zip(&eq.flows))
    {
        t.labeled(&format!("eta_{from}_{to}"), &[*eta]);
        t.labeled(&format!("flow_{from}_{to}"), &[*flow]);
    }
    for (prefix, values) in [("pM", &eq.p_m), ("dc", &eq.d_c), ("du", &eq.d_u)] {
        for (id, v) in eq.bus_ids.iter().zip(values.iter()) {
            t.labeled(&format!("{prefix}_{id}"), &[*v]);
        }
    }
    Ok((sum.as_str().to_string(), t.as_str().to_string()))
}

const KKT_TOL: f64 = 1e-10;

fn solve_oslc(s: &Scenario) -> Result<(String, String), CliError> {
    let problem = oslc_problem(&s.system).ok_or_else(|| {
        CliError::Assumption("some generation or demand block does not follow an optimal control law".into())
    })?;
    let sol = oslc::solve(&problem)?;
    let kkt = verify_kkt(&problem, &sol, KKT_TOL);
    let mut sum = Summary::new();
    sum.num("nu", sol.nu)
        .text("multiplier", format!("{:?}", sol.status))
        .num("objective", problem.objective(&sol.p_m, &sol.d_c, &sol.d_u))
        .num("kkt_max_residual", kkt.max_residual())
        .text("kkt_passed", kkt.passed())
        .text("derivative_equality", kkt.derivative_equality_holds())
        .num("derivative_gap", kkt.derivative_gap);

    let mut t = Table::new(&["block", "bus", "role", "value", "marginal_left", "marginal_right"]);
    let (mut g, mut d, mut u) = (0, 0, 0);
    for (k, pb) in s.system.blocks.iter().enumerate() {
        let (role, value, sub) = match pb.block.role() {
            Role::Generation => {
                let c = &problem.generators[g];
                g += 1;
                ("generation", sol.p_m[g - 1], c.subdifferential(sol.p_m[g - 1]))
            }
            Role::ControllableDemand => {
                let c = &problem.demands[d];
                d += 1;
                ("controllable_demand", sol.d_c[d - 1], c.subdifferential(sol.d_c[d - 1]))
            }
            Role::UncontrollableDemand => {
                let damp = problem.dampings[u];
                u += 1;
                let x = sol.d_u[u - 1];
                ("uncontrollable_demand", x, (x / damp, x / damp))
            }
        };
        t.row(&[k.to_string(), pb.bus.to_string(), role.to_string(), fmt_g12(value), fmt_g12(sub.0), fmt_g12(sub.1)]);
    }
    Ok((sum.as_str().to_string(), t.as_str().to_string()))
}

fn passivity(s: &Scenario) -> Result<(String, String), CliError> {
    let eq = find_equilibrium(&s.system)?;
    let grid = FrequencyGrid::default();
    let mut sum = Summary::new();
    let mut t = Table::new(&["item", "id", "margin", "worst_frequency", "passed", "note"]);
    for bp in bus_passivity(&s.system, eq.omega_star, grid) {
        match &bp.report {
            Some(r) => {
                sum.num(&format!("bus_{}_margin", bp.bus), r.margin);
                t.row(&[
                    "bus".to_string(),
                    bp.bus.to_string(),
                    fmt_g12(r.margin),
                    fmt_g12(r.worst_frequency),
                    r.passed().to_string(),
                    bp.note.clone(),
                ]);
            }
            None => {
                sum.text(&format!("bus_{}_margin", bp.bus), format!("unavailable ({})", bp.note));
                t.row(&["bus", &bp.bus.to_string(), "", "", "false", &bp.note]);
            }
        }
    }
    for (k, pb) in s.system.blocks.iter().enumerate() {
        let BlockKind::TurbineGovernor { tau_g, tau_b, droop } = pb.block.kind() else {
            continue;
        };
        let damping = s.system.damping_at(pb.bus);
        let gain = droop.sector_gain();
        let (min_re, w_max) = tg_min_real(*tau_g, *tau_b)?;
        let bound = max_gain_ratio(tau_b / tau_g);
        let key = |q: &str| format!("tg_{k}_{q}");
        sum.num(&key("min_real"), min_re)
            .num(&key("min_real_frequency"), w_max)
            .num(&key("gain_ratio"), gain / damping)
            .num(&key("max_gain_ratio"), bound)
            .text(&key("small_gain_certificate"), l2_small_gain_certificate(gain, damping));
        if let Some((beta, gamma)) = remark_storage_coefficients(gain, damping, *tau_g, *tau_b) {
            sum.num(&key("beta"), beta).num(&key("gamma"), gamma);
        }
        let kappas: Vec<f64> = match droop {
            Droop::Linear { .. } => vec![gain],
            _ => vec![0.0, gain],
        };
        match certify_tg_storage(*tau_g, *tau_b, &kappas, damping) {
            Some(st) => {
                sum.text(&key("storage"), format!("{:?}", st.source)).num(&key("storage_margin"), st.margin);
            }
            None => {
                sum.text(&key("storage"), "none");
            }
        }
        if let Some(sweep) = &s.gain_sweep {
            for row in gain_sweep(*tau_g, *tau_b, damping, &sweep.ratios)? {
                t.row(&[
                    "gain_ratio".to_string(),
                    fmt_g12(row.ratio),
                    fmt_g12(row.closed_form_margin),
                    String::new(),
                    row.passive.to_string(),
                    format!("tg_{k} scanned={}", fmt_g12(row.scanned_margin)),
                ]);
            }
        }
    }
    Ok((sum.as_str().to_string(), t.as_str().to_string()))
}

fn compare_demand(s: &Scenario) -> Result<(String, String), CliError> {
    let (with, without) = steady_state_comparison(&s.system)?;
    let drop = if without != 0.0 { 100.0 * (1.0 - with.abs() / without.abs()) } else { 0.0 };
    let mut sum = Summary::new();
    sum.num("with", with).num("without", without).num("drop_percent", drop);
    let mut t = Table::new(&["case", "omega_star"]);
    t.labeled("with", &[with]);
    t.labeled("without", &[without]);
    Ok((sum.as_str().to_string(), t.as_str().to_string()))
}

fn sweep_delays(s: &Scenario) -> Result<(String, String), CliError> {
    let sweep = s
        .delay_sweep
        .as_ref()
        .ok_or_else(|| CliError::Schema(SchemaError::Invalid("scenario has no [delay_sweep] table".into())))?;
    let rows = delay_sweep(&s.system, &s.sim, &sweep.delays, sweep.gain, sweep.convergence_tol)?;
    let mut sum = Summary::new();
    sum.num("gain", sweep.gain).num("convergence_tol", sweep.convergence_tol);
    let mut t = Table::new(&["delay", "law", "outcome", "t_fail", "final_deviation", "passivity_margin", "passive", "agree", "consistent"]);
    for r in &rows {
        let t_fail = match r.verdict {
            crate::studies::RunVerdict::Diverged { t } => fmt_g12(t),
            _ => String::new(),
        };
        t.row(&[
            fmt_g12(r.delay),
            r.law.name().to_string(),
            r.verdict.name().to_string(),
            t_fail,
            fmt_g12(r.final_deviation),
            r.passivity_margin.map(fmt_g12).unwrap_or_default(),
            r.passive.to_string(),
            r.agrees().to_string(),
            r.consistent().to_string(),
        ]);
    }
    sum.text("all_agree", rows.iter().all(|r| r.agrees()))
        .text("all_consistent", rows.iter().all(|r| r.consistent()));
    Ok((sum.as_str().to_string(), t.as_str().to_string()))
}

fn passivity_check(a: &CheckArgs) -> Result<Vec<Artifact>, CliError> {
    let mut grid = FrequencyGrid::default();
    if let Some(w) = a.w_min {
        grid.w_min = w;
    }
    if let Some(w) = a.w_max {
        grid.w_max = w;
    }
    if let Some(n) = a.points {
        grid.points = n;
    }
    let tf = TransferFunction::new(a.num.clone(), a.den.clone())?
        .scaled(a.gain)
        .with_delay(a.delay)
        .with_feedthrough(a.damping);
    let r = isp_margin(&tf, grid)?;
    let mut sum = Summary::new();
    sum.text("subcommand", "passivity-check")
        .num("margin", r.margin)
        .num("worst_frequency", r.worst_frequency)
        .text("stable", r.stable)
        .text("passed", r.passed());
    let csv = a.samples.then(|| {
        let mut t = Table::new(&["w", "re", "im"]);
        for w in grid.frequencies() {
            let h = tf.response(w);
            t.labeled(&fmt_g12(w), &[h.re, h.im]);
        }
        t.as_str().to_string()
    });
    Ok(artifacts(&a.name, "passivity-check", sum.as_str().to_string(), csv))
}
