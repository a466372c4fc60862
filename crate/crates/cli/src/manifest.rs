//! The run manifest: everything needed to repeat a run, as JSON.

use std::path::{Path, PathBuf};

use escapade_core::probes::{EquivalenceConfig, EsConfig, ReachConfig, RfcConfig, UgaConfig};
use escapade_core::systems::DEFAULT_DWELL;
use escapade_core::{InputSignal, IntegratorOptions, PlanarParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SystemChoice {
    /// `x' = g(x, u)`
    Planar,
    /// `z' = -z`, `x' = g(x, z(t - τ))`
    Cascade,
    /// The cascade with `z(t - τ)` replaced by an input
    Associated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HistoryChoice {
    Zero,
    Constant {
        value: Vec<f64>,
    },
    /// Piecewise linear through `(knots[i], values[i])`, knots from `-τ` to 0.
    Linear {
        knots: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovTask {
    /// Solve for `A(λ)` at this `λ`.
    pub lambda: Option<f64>,
    /// Report `Λ`, `k`, `p` for `P₀`.
    pub constants: bool,
    pub margin: f64,
}

impl Default for LyapunovTask {
    fn default() -> Self {
        Self {
            lambda: None,
            constants: false,
            margin: escapade_core::lyapunov::DEFAULT_MARGIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateTask {
    pub system: SystemChoice,
    /// Cascade delay; defaults to 1.5 times the greedy escape time.
    pub tau: Option<f64>,
    pub history: HistoryChoice,
    /// Input signal; zero when absent.
    pub input: Option<InputSignal>,
    pub t_end: f64,
    /// Output rows are `grid + 1` uniform times.
    pub grid: usize,
}

impl Default for SimulateTask {
    fn default() -> Self {
        Self {
            system: SystemChoice::Planar,
            tau: None,
            history: HistoryChoice::Zero,
            input: None,
            t_end: 10.0,
            grid: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EscapeTask {
    pub x0: [f64; 2],
    pub horizon: f64,
    pub dwell: f64,
}

impl Default for EscapeTask {
    fn default() -> Self {
        Self {
            x0: [0.0, 1.0],
            horizon: 20.0,
            dwell: DEFAULT_DWELL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateRTask {
    pub system: SystemChoice,
    pub tau: Option<f64>,
    pub radii: Vec<f64>,
    pub horizon: f64,
    pub probe: ReachConfig,
}

impl Default for EstimateRTask {
    fn default() -> Self {
        Self {
            system: SystemChoice::Cascade,
            tau: None,
            radii: vec![1.0],
            horizon: 20.0,
            probe: ReachConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfcTask {
    pub probe: RfcConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsTask {
    pub tau: Option<f64>,
    pub probe: EsConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UgaTask {
    pub tau: Option<f64>,
    pub probe: UgaConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquivTask {
    pub tau: Option<f64>,
    pub probe: EquivalenceConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Task {
    Lyapunov(LyapunovTask),
    Simulate(SimulateTask),
    Escape(EscapeTask),
    EstimateR(EstimateRTask),
    RfcSweep(RfcTask),
    EsCheck(EsTask),
    UgaTable(UgaTask),
    EquivCheck(EquivTask),
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Lyapunov(_) => "lyapunov",
            Task::Simulate(_) => "simulate",
            Task::Escape(_) => "escape",
            Task::EstimateR(_) => "estimate-r",
            Task::RfcSweep(_) => "rfc-sweep",
            Task::EsCheck(_) => "es-check",
            Task::UgaTable(_) => "uga-table",
            Task::EquivCheck(_) => "equiv-check",
        }
    }

    /// Probe seed, where the task has one.
    pub(crate) fn seed_mut(&mut self) -> Option<&mut u64> {
        match self {
            Task::EstimateR(t) => Some(&mut t.probe.seed),
            Task::EsCheck(t) => Some(&mut t.probe.seed),
            Task::UgaTable(t) => Some(&mut t.probe.seed),
            Task::EquivCheck(t) => Some(&mut t.probe.seed),
            _ => None,
        }
    }

    /// Sample count of the task's probe, where it has one.
    pub(crate) fn budget_mut(&mut self) -> Option<&mut usize> {
        match self {
            Task::EstimateR(t) => Some(&mut t.probe.budget),
            Task::EsCheck(t) => Some(&mut t.probe.n_ics),
            Task::UgaTable(t) => Some(&mut t.probe.per_cell),
            Task::EquivCheck(t) => Some(&mut t.probe.pairs),
            _ => None,
        }
    }
}

pub fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Tolerances at which every residual audit meets `100·abs_tol`.
pub fn default_integrator() -> IntegratorOptions {
    IntegratorOptions::default().with_tolerances(1e-10, 1e-10)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub task: Task,
    #[serde(default)]
    pub system: PlanarParams,
    #[serde(default = "default_integrator")]
    pub integrator: IntegratorOptions,
    /// Master seed; copied into the probe configuration before a run.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub svg: Option<PathBuf>,
}

impl RunManifest {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            system: PlanarParams::default(),
            integrator: default_integrator(),
            seed: 0,
            out: default_out(),
            svg: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        parse_json(text, "<manifest>")
    }

    /// Semantic checks that the schema alone does not express.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |path: &str, message: String| {
            Err(CliError::ConfigInvalid {
                path: path.to_string(),
                message,
            })
        };
        if let Err(e) = self.integrator.validate() {
            return bad("integrator", e.to_string());
        }
        let finite = |m: &escapade_core::Mat2| m.is_finite();
        if !finite(&self.system.a1) || !finite(&self.system.a2) {
            return bad("system", "matrix entries must be finite".into());
        }
        let tau_ok = |tau: Option<f64>| tau.is_none_or(|t| t > 0.0 && t.is_finite());
        match &self.task {
            Task::Lyapunov(t) => {
                if t.lambda.is_some_and(|l| !l.is_finite()) {
                    return bad("task.lambda", "must be finite".into());
                }
                if !(t.margin > 0.0 && t.margin < 1.0) {
                    return bad("task.margin", "must lie in (0, 1)".into());
                }
            }
            Task::Simulate(t) => {
                if !tau_ok(t.tau) {
                    return bad("task.tau", "must be positive".into());
                }
                if !(t.t_end >= 0.0 && t.t_end.is_finite()) {
                    return bad("task.t_end", "must be nonnegative".into());
                }
                if t.grid == 0 {
                    return bad("task.grid", "must be at least 1".into());
                }
            }
            Task::Escape(t) => {
                if !(t.horizon > 0.0 && t.horizon.is_finite()) {
                    return bad("task.horizon", "must be positive".into());
                }
                if !(t.dwell > 0.0) {
                    return bad("task.dwell", "must be positive".into());
                }
            }
            Task::EstimateR(t) => {
                if !tau_ok(t.tau) {
                    return bad("task.tau", "must be positive".into());
                }
                if t.radii.is_empty() {
                    return bad("task.radii", "at least one radius is required".into());
                }
                if t.probe.budget == 0 {
                    return bad("task.probe.budget", "must be at least 1".into());
                }
            }
            Task::RfcSweep(t) => {
                if !tau_ok(t.probe.tau) {
                    return bad("task.probe.tau", "must be positive".into());
                }
            }
            Task::EsCheck(EsTask { tau, probe }) => {
                if !tau_ok(*tau) {
                    return bad("task.tau", "must be positive".into());
                }
                if probe.n_ics == 0 {
                    return bad("task.probe.n_ics", "must be at least 1".into());
                }
            }
            Task::UgaTable(UgaTask { tau, probe }) => {
                if !tau_ok(*tau) {
                    return bad("task.tau", "must be positive".into());
                }
                if probe.per_cell == 0 {
                    return bad("task.probe.per_cell", "must be at least 1".into());
                }
            }
            Task::EquivCheck(EquivTask { tau, probe }) => {
                if !tau_ok(*tau) {
                    return bad("task.tau", "must be positive".into());
                }
                if probe.pairs == 0 {
                    return bad("task.probe.pairs", "must be at least 1".into());
                }
            }
        }
        Ok(())
    }
}

/// A `--config` file: a manifest in which every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub task: Option<Task>,
    pub system: Option<PlanarParams>,
    /// Fields given here replace those of [`default_integrator`].
    pub integrator: Option<serde_json::Map<String, serde_json::Value>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        parse_json(&text, &path.display().to_string())
    }

    pub fn integrator(&self, origin: &str) -> Result<Option<IntegratorOptions>, CliError> {
        let Some(fields) = &self.integrator else {
            return Ok(None);
        };
        let mut base = match serde_json::to_value(default_integrator()) {
            Ok(serde_json::Value::Object(m)) => m,
            _ => unreachable!("options serialize to an object"),
        };
        base.extend(fields.clone());
        let text = serde_json::Value::Object(base).to_string();
        parse_json(&text, &format!("{origin}: integrator")).map(Some)
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, origin: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path == "task" {
            if let Some(err) = diagnose_task(text, origin) {
                return err;
            }
        }
        CliError::ConfigInvalid {
            path: located(origin, &path),
            message: e.into_inner().to_string(),
        }
    })
}

fn located(origin: &str, path: &str) -> String {
    if path == "." {
        origin.to_string()
    } else {
        format!("{origin}: {path}")
    }
}

/// Tagged enums are buffered before they are parsed, which hides the failing
/// field; parsing the task body as its own struct recovers it.
fn diagnose_task(text: &str, origin: &str) -> Option<CliError> {
    let mut root: serde_json::Value = serde_json::from_str(text).ok()?;
    let body = root.get_mut("task")?.as_object_mut()?;
    let name = body.remove("subcommand")?.as_str()?.to_string();
    let body = serde_json::Value::Object(body.clone());
    fn check<T: serde::de::DeserializeOwned>(
        body: serde_json::Value,
    ) -> Result<(), (String, String)> {
        serde_path_to_error::deserialize::<_, T>(body)
            .map(drop)
            .map_err(|e| (e.path().to_string(), e.into_inner().to_string()))
    }
    let result = match name.as_str() {
        "lyapunov" => check::<LyapunovTask>(body),
        "simulate" => check::<SimulateTask>(body),
        "escape" => check::<EscapeTask>(body),
        "estimate-r" => check::<EstimateRTask>(body),
        "rfc-sweep" => check::<RfcTask>(body),
        "es-check" => check::<EsTask>(body),
        "uga-table" => check::<UgaTask>(body),
        "equiv-check" => check::<EquivTask>(body),
        _ => return None,
    };
    let (path, message) = result.err()?;
    let path = if path == "." {
        "task".to_string()
    } else {
        format!("task.{path}")
    };
    Some(CliError::ConfigInvalid {
        path: located(origin, &path),
        message,
    })
}
