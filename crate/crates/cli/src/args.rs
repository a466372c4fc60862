//! Command-line flags and how they override a manifest.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use escapade_core::{InputSignal, Mat2};

use crate::error::CliError;
use crate::manifest::{
    ConfigFile, EquivTask, EsTask, EscapeTask, EstimateRTask, HistoryChoice, LyapunovTask, RfcTask,
    RunManifest, SimulateTask, SystemChoice, Task, UgaTask,
};

/// Finite escape, stability and reachability experiments for a planar
/// switched system and its delayed cascade.
///
/// Every run writes `<subcommand>.csv`, `<subcommand>.json` and
/// `manifest.json` into the output directory and prints one verdict line
/// per property it checks. `escapade --config manifest.json` repeats a run.
#[derive(Debug, Parser)]
#[command(name = "escapade", version, propagate_version = true)]
pub struct Cli {
    /// JSON manifest or partial manifest; flags override its fields
    #[arg(long, global = true, env = "ESCAPADE_CONFIG", value_name = "JSON")]
    pub config: Option<PathBuf>,
    /// Master seed for every sampled draw
    #[arg(long, global = true, env = "ESCAPADE_SEED")]
    pub seed: Option<u64>,
    /// Output directory [default: out]
    #[arg(long, global = true, env = "ESCAPADE_OUT", value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Also write a line plot to this path
    #[arg(long, global = true, env = "ESCAPADE_SVG", value_name = "PATH")]
    pub svg: Option<PathBuf>,
    /// Relative integration tolerance [default: 1e-10]
    #[arg(long, global = true, env = "ESCAPADE_TOL")]
    pub tol: Option<f64>,
    /// Absolute integration tolerance [default: 1e-10]
    #[arg(long, global = true, env = "ESCAPADE_ABS_TOL")]
    pub abs_tol: Option<f64>,
    /// Number of sampled draws of the probe (estimate-r draws, es-check
    /// histories, uga-table histories per radius, equiv-check pairs)
    #[arg(long, global = true, env = "ESCAPADE_BUDGET")]
    pub budget: Option<usize>,
    /// Override of A1 as JSON rows, e.g. [[0,2],[-0.5,-0.1]]
    #[arg(long, global = true, env = "ESCAPADE_A1", value_name = "JSON")]
    pub a1: Option<String>,
    /// Override of A2 as JSON rows
    #[arg(long, global = true, env = "ESCAPADE_A2", value_name = "JSON")]
    pub a2: Option<String>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lyapunov solution for A(λ), or the stability constants of P0
    Lyapunov(LyapunovArgs),
    /// Integrate one system and write its trajectory
    Simulate(SimulateArgs),
    /// Greedy switching of the planar system until escape
    Escape(EscapeArgs),
    /// Sampled lower bound on the reachable-set radius
    EstimateR(EstimateRArgs),
    /// Peaks of the cascade from smoothed escape schedules
    RfcSweep(RfcArgs),
    /// Exponential envelope check on small histories
    EsCheck(EsArgs),
    /// Settling times against the reach-time bound
    UgaTable(UgaArgs),
    /// Delay system against its delay-free associated system
    EquivCheck(EquivArgs),
}

#[derive(Debug, Args)]
pub struct LyapunovArgs {
    /// Solve the Lyapunov equation for A(λ)
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Print Λ, k and p for P0
    #[arg(long)]
    pub constants: bool,
    /// Decay margin m in A(λ)ᵀP0 + P0 A(λ) <= -m I [default: 0.5]
    #[arg(long)]
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum HistoryKind {
    Zero,
    Constant,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// System to integrate [default: planar]
    #[arg(long, value_enum)]
    pub system: Option<SystemChoice>,
    /// Cascade delay [default: 1.5 times the greedy escape time]
    #[arg(long)]
    pub tau: Option<f64>,
    /// Initial history [default: zero]
    #[arg(long, value_enum)]
    pub history: Option<HistoryKind>,
    /// State value of a constant history, comma separated
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x0: Option<Vec<f64>>,
    /// Input signal as JSON, e.g. {"kind":"constant","value":[1]}
    #[arg(long, value_name = "JSON")]
    pub input: Option<String>,
    /// Final time [default: 10]
    #[arg(long = "T", value_name = "T")]
    pub t_end: Option<f64>,
    /// Number of output intervals [default: 200]
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EscapeArgs {
    /// Initial state [default: 0,1]
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x0: Option<Vec<f64>>,
    /// Horizon [default: 20]
    #[arg(long = "T", value_name = "T")]
    pub horizon: Option<f64>,
    /// Dwell per switching piece, in rescaled time [default: 1e-3]
    #[arg(long)]
    pub dwell: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EstimateRArgs {
    /// System to probe [default: cascade]
    #[arg(long, value_enum)]
    pub system: Option<SystemChoice>,
    /// Cascade delay [default: 1.5 times the greedy escape time]
    #[arg(long)]
    pub tau: Option<f64>,
    /// Radii, comma separated and increasing [default: 1]
    #[arg(long, value_delimiter = ',')]
    pub r: Option<Vec<f64>>,
    /// Horizon [default: 20]
    #[arg(long = "T", value_name = "T")]
    pub horizon: Option<f64>,
    /// Dwell of the adversarial switching draw [default: 1e-3]
    #[arg(long)]
    pub dwell: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RfcArgs {
    /// Initial state of the greedy run [default: 0,1]
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x0: Option<Vec<f64>>,
    /// Dwell of the greedy run [default: 1e-3]
    #[arg(long)]
    pub dwell: Option<f64>,
    /// Coarsest smoothing half-width [default: 0.5]
    #[arg(long)]
    pub delta0: Option<f64>,
    /// Number of halvings of delta0 [default: 7]
    #[arg(long)]
    pub levels: Option<usize>,
    /// Explicit decreasing smoothing widths, comma separated
    #[arg(long, value_delimiter = ',')]
    pub deltas: Option<Vec<f64>>,
    /// Cascade delay [default: 1.5 times the greedy escape time]
    #[arg(long)]
    pub tau: Option<f64>,
    /// Ball for the reach-time check [default: 0.1]
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EsArgs {
    /// Cascade delay [default: 1.5 times the greedy escape time]
    #[arg(long)]
    pub tau: Option<f64>,
    /// Horizon [default: 30]
    #[arg(long = "T", value_name = "T")]
    pub horizon: Option<f64>,
    /// Relative slack on the envelope [default: 0.05]
    #[arg(long)]
    pub fit_tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct UgaArgs {
    /// Cascade delay [default: 1.5 times the greedy escape time]
    #[arg(long)]
    pub tau: Option<f64>,
    /// History norms, comma separated [default: 1,10,100]
    #[arg(long, value_delimiter = ',')]
    pub r: Option<Vec<f64>>,
    /// Ball sizes, comma separated [default: 0.1,1]
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct EquivArgs {
    /// Cascade delay [default: 1.5 times the greedy escape time]
    #[arg(long)]
    pub tau: Option<f64>,
    /// Size of the random histories and inputs [default: 1]
    #[arg(long)]
    pub radius: Option<f64>,
    /// Allowed deviation in units of the integration tolerance [default: 10]
    #[arg(long)]
    pub tol_factor: Option<f64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn pair(v: Vec<f64>, flag: &str) -> Result<[f64; 2], CliError> {
    <[f64; 2]>::try_from(v)
        .map_err(|_| CliError::config(flag, "expects two comma-separated values"))
}

fn matrix(text: &str, flag: &str) -> Result<Mat2, CliError> {
    let rows: [[f64; 2]; 2] = serde_json::from_str(text)
        .map_err(|e| CliError::config(flag, format!("expects [[a,b],[c,d]]: {e}")))?;
    Ok(Mat2::from_rows(rows))
}

impl Command {
    fn default_task(&self) -> Task {
        match self {
            Command::Lyapunov(_) => Task::Lyapunov(LyapunovTask::default()),
            Command::Simulate(_) => Task::Simulate(SimulateTask::default()),
            Command::Escape(_) => Task::Escape(EscapeTask::default()),
            Command::EstimateR(_) => Task::EstimateR(EstimateRTask::default()),
            Command::RfcSweep(_) => Task::RfcSweep(RfcTask::default()),
            Command::EsCheck(_) => Task::EsCheck(EsTask::default()),
            Command::UgaTable(_) => Task::UgaTable(UgaTask::default()),
            Command::EquivCheck(_) => Task::EquivCheck(EquivTask::default()),
        }
    }

    fn apply(self, task: &mut Task) -> Result<(), CliError> {
        match (self, task) {
            (Command::Lyapunov(a), Task::Lyapunov(t)) => {
                if a.lambda.is_some() {
                    t.lambda = a.lambda;
                }
                t.constants |= a.constants;
                set(&mut t.margin, a.margin);
            }
            (Command::Simulate(a), Task::Simulate(t)) => {
                set(&mut t.system, a.system);
                if a.tau.is_some() {
                    t.tau = a.tau;
                }
                match (a.history, a.x0) {
                    (Some(HistoryKind::Zero), _) => t.history = HistoryChoice::Zero,
                    (Some(HistoryKind::Constant), Some(value)) | (None, Some(value)) => {
                        t.history = HistoryChoice::Constant { value }
                    }
                    (Some(HistoryKind::Constant), None) => {
                        return Err(CliError::config("--history", "constant needs --x0"))
                    }
                    (None, None) => {}
                }
                if let Some(text) = a.input {
                    let u: InputSignal = serde_json::from_str(&text)
                        .map_err(|e| CliError::config("--input", e.to_string()))?;
                    t.input = Some(u);
                }
                set(&mut t.t_end, a.t_end);
                set(&mut t.grid, a.grid);
            }
            (Command::Escape(a), Task::Escape(t)) => {
                if let Some(x0) = a.x0 {
                    t.x0 = pair(x0, "--x0")?;
                }
                set(&mut t.horizon, a.horizon);
                set(&mut t.dwell, a.dwell);
            }
            (Command::EstimateR(a), Task::EstimateR(t)) => {
                set(&mut t.system, a.system);
                if a.tau.is_some() {
                    t.tau = a.tau;
                }
                set(&mut t.radii, a.r);
                set(&mut t.horizon, a.horizon);
                set(&mut t.probe.dwell, a.dwell);
            }
            (Command::RfcSweep(a), Task::RfcSweep(t)) => {
                let p = &mut t.probe;
                if let Some(x0) = a.x0 {
                    p.x0 = pair(x0, "--x0")?;
                }
                set(&mut p.dwell, a.dwell);
                set(&mut p.delta0, a.delta0);
                set(&mut p.levels, a.levels);
                if a.deltas.is_some() {
                    p.deltas = a.deltas;
                }
                if a.tau.is_some() {
                    p.tau = a.tau;
                }
                set(&mut p.eps, a.eps);
            }
            (Command::EsCheck(a), Task::EsCheck(t)) => {
                if a.tau.is_some() {
                    t.tau = a.tau;
                }
                set(&mut t.probe.horizon, a.horizon);
                set(&mut t.probe.fit_tol, a.fit_tol);
            }
            (Command::UgaTable(a), Task::UgaTable(t)) => {
                if a.tau.is_some() {
                    t.tau = a.tau;
                }
                set(&mut t.probe.r_list, a.r);
                set(&mut t.probe.eps_list, a.eps);
            }
            (Command::EquivCheck(a), Task::EquivCheck(t)) => {
                if a.tau.is_some() {
                    t.tau = a.tau;
                }
                set(&mut t.probe.radius, a.radius);
                set(&mut t.probe.tol_factor, a.tol_factor);
            }
            (_, task) => {
                return Err(CliError::config(
                    "task.subcommand",
                    format!("configuration is for `{}`", task.name()),
                ))
            }
        }
        Ok(())
    }
}

impl Cli {
    /// Defaults, then the `--config` file, then flags and environment.
    pub fn into_manifest(self) -> Result<RunManifest, CliError> {
        let file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let origin = self
            .config
            .as_ref()
            .map_or_else(String::new, |p| p.display().to_string());
        let integrator = file.integrator(&origin)?;
        let mut task = match (&self.command, file.task) {
            (Some(cmd), Some(task)) => {
                if cmd.default_task().name() != task.name() {
                    return Err(CliError::config(
                        "task.subcommand",
                        format!(
                            "configuration is for `{}` but `{}` was requested",
                            task.name(),
                            cmd.default_task().name()
                        ),
                    ));
                }
                task
            }
            (Some(cmd), None) => cmd.default_task(),
            (None, Some(task)) => task,
            (None, None) => {
                return Err(CliError::config(
                    "task",
                    "no subcommand given and the configuration names none",
                ))
            }
        };
        if let Some(cmd) = self.command {
            cmd.apply(&mut task)?;
        }
        let mut m = RunManifest::new(task);
        set(&mut m.system, file.system);
        set(&mut m.integrator, integrator);
        set(&mut m.seed, file.seed);
        set(&mut m.out, file.out);
        if file.svg.is_some() {
            m.svg = file.svg;
        }
        if let Some(a1) = &self.a1 {
            m.system.a1 = matrix(a1, "--a1")?;
        }
        if let Some(a2) = &self.a2 {
            m.system.a2 = matrix(a2, "--a2")?;
        }
        set(&mut m.integrator.rel_tol, self.tol);
        set(&mut m.integrator.abs_tol, self.abs_tol);
        set(&mut m.seed, self.seed);
        set(&mut m.out, self.out);
        if self.svg.is_some() {
            m.svg = self.svg;
        }
        if let Some(b) = self.budget {
            match m.task.budget_mut() {
                Some(slot) => *slot = b,
                None => {
                    return Err(CliError::config(
                        "--budget",
                        format!("`{}` draws no samples", m.task.name()),
                    ))
                }
            }
        }
        let seed = m.seed;
        if let Some(slot) = m.task.seed_mut() {
            *slot = seed;
        }
        m.validate()?;
        Ok(m)
    }
}
