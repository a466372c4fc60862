use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampling::{draw_rng, random_history};
use super::{require, ProbeError};
use crate::integrator::{integrate, residual_audit, HistoryFn, IntegratorOptions, SimOutcome};
use crate::lyapunov::LyapunovCert;
use crate::poly::inf_norm;
use crate::signal::InputSignal;
use crate::systems::{cascade_system, PlanarParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsConfig {
    pub n_ics: usize,
    pub horizon: f64,
    pub fit_tol: f64,
    /// Uniform check points per run, in addition to the step endpoints.
    pub grid: usize,
    pub seed: u64,
    pub audit_samples: usize,
}

impl Default for EsConfig {
    fn default() -> Self {
        Self {
            n_ics: 200,
            horizon: 30.0,
            fit_tol: 0.05,
            grid: 512,
            seed: 0,
            audit_samples: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub k: f64,
    pub p: f64,
    /// `max |state(t)| e^{pt} / ‖φ‖` over all check points.
    pub k_emp: f64,
    /// Largest rate `q` with `|state(t)| <= k‖φ‖e^{-qt}` at every check
    /// point with `t > 0`.
    pub p_emp: f64,
    pub violations: usize,
    pub checked: usize,
    pub runs: usize,
    pub max_residual: f64,
    pub per_run: Vec<EnvelopeRun>,
}

impl EnvelopeFit {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRun {
    pub index: usize,
    /// `‖φ‖` of the sampled history.
    pub norm: f64,
    pub k_emp: f64,
    pub p_emp: f64,
    pub violations: usize,
    pub checked: usize,
    pub residual: f64,
}

/// Draw `index` of [`es_check`]: `‖φ‖ = Λ(1 - U)` and a random history of
/// that norm.
pub fn es_draw(cfg: &EsConfig, capital_lambda: f64, tau: f64, index: usize) -> (f64, HistoryFn) {
    let mut rng = draw_rng(cfg.seed, index as u64);
    let norm = capital_lambda * (1.0 - rng.random::<f64>());
    (norm, random_history(&mut rng, 3, tau, norm))
}

/// Fit of cascade solutions from random piecewise-linear histories with
/// `‖φ‖` uniform in `(0, Λ]` against `|[z, x](t)|_∞ <= k‖φ‖e^{-pt}`.
pub fn es_check(
    params: &PlanarParams,
    cert: &LyapunovCert,
    tau: f64,
    cfg: &EsConfig,
    opts: &IntegratorOptions,
) -> Result<EnvelopeFit, ProbeError> {
    require(cfg.n_ics > 0, || "n_ics must be at least 1".into())?;
    require(cfg.horizon > 0.0 && cfg.horizon.is_finite(), || {
        "horizon must be positive".into()
    })?;
    require(cfg.fit_tol >= 0.0, || "fit_tol must be nonnegative".into())?;
    let sys = cascade_system(params, tau)?;
    let (k, p) = (cert.constants.k, cert.constants.p);
    let lam = cert.capital_lambda();
    let fits: Vec<EnvelopeRun> = (0..cfg.n_ics)
        .into_par_iter()
        .map(|i| {
            let (norm, hist) = es_draw(cfg, lam, tau, i);
            let traj = match integrate(&sys, &hist, &InputSignal::none(), cfg.horizon, opts)? {
                SimOutcome::Completed { trajectory } => trajectory,
                SimOutcome::Escaped(e) => {
                    return Err(ProbeError::UnexpectedEscape {
                        index: i,
                        t_escape: e.t_escape,
                    })
                }
            };
            let mut times: Vec<f64> = traj.step_times().to_vec();
            times.extend((1..=cfg.grid).map(|j| cfg.horizon * j as f64 / cfg.grid as f64));
            let mut fit = EnvelopeRun {
                index: i,
                norm,
                k_emp: 0.0,
                p_emp: f64::INFINITY,
                violations: 0,
                checked: times.len(),
                residual: 0.0,
            };
            let mut y = vec![0.0; 3];
            for &t in &times {
                traj.eval_into(t, &mut y);
                let s = inf_norm(&y);
                if s > k * norm * (-p * t).exp() * (1.0 + cfg.fit_tol) {
                    fit.violations += 1;
                }
                fit.k_emp = fit.k_emp.max(s * (p * t).exp() / norm);
                if t > 0.0 && s > 0.0 {
                    fit.p_emp = fit.p_emp.min((k * norm / s).ln() / t);
                }
            }
            if cfg.audit_samples > 0 {
                fit.residual =
                    residual_audit(&traj, &sys, &InputSignal::none(), cfg.audit_samples)?;
            }
            Ok(fit)
        })
        .collect::<Result<_, ProbeError>>()?;
    Ok(EnvelopeFit {
        k,
        p,
        k_emp: fits.iter().map(|f| f.k_emp).fold(0.0, f64::max),
        p_emp: fits.iter().map(|f| f.p_emp).fold(f64::INFINITY, f64::min),
        violations: fits.iter().map(|f| f.violations).sum(),
        checked: fits.iter().map(|f| f.checked).sum(),
        runs: fits.len(),
        max_residual: fits.iter().map(|f| f.residual).fold(0.0, f64::max),
        per_run: fits,
    })
}
