use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::reach_time::{last_exit_time, uga_bound};
use super::{require, ProbeError};
use crate::integrator::{integrate, residual_audit, HistoryFn, IntegratorOptions, SimOutcome};
use crate::lyapunov::LyapunovCert;
use crate::poly::inf_norm;
use crate::signal::{box_smooth, InputSignal};
use crate::systems::{
    cascade_system, default_cascade_delay, greedy_with_dwell, run_switching, PlanarParams,
    CASCADE_X, DEFAULT_DWELL,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfcConfig {
    /// Initial state of the greedy run and present value of every history.
    pub x0: [f64; 2],
    pub dwell: f64,
    /// Horizon for the greedy run that records the escaping schedule.
    pub greedy_horizon: f64,
    pub delta0: f64,
    pub levels: usize,
    /// Explicit smoothing widths; overrides `delta0` and `levels`.
    pub deltas: Option<Vec<f64>>,
    /// Cascade delay; defaults to 1.5 times the greedy escape time.
    pub tau: Option<f64>,
    /// Ball for the reach-time check on the same runs.
    pub eps: f64,
    pub margin_t: f64,
    pub audit_samples: usize,
}

impl Default for RfcConfig {
    fn default() -> Self {
        Self {
            x0: [0.0, 1.0],
            dwell: DEFAULT_DWELL,
            greedy_horizon: 20.0,
            delta0: 0.5,
            levels: 7,
            deltas: None,
            tau: None,
            eps: 0.1,
            margin_t: 10.0,
            audit_samples: 32,
        }
    }
}

impl RfcConfig {
    pub fn delta_list(&self) -> Vec<f64> {
        match &self.deltas {
            Some(d) => d.clone(),
            None => (0..self.levels)
                .map(|k| self.delta0 / 2f64.powi(k as i32))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfcSweep {
    pub t_escape: f64,
    pub tau: f64,
    /// Norm bound shared by every history in the family.
    pub history_norm: f64,
    pub deltas: Vec<f64>,
    /// `sup |x(t)|_∞` over `[0, τ]` per smoothing width.
    pub peaks: Vec<f64>,
    pub strictly_increasing: bool,
    /// Largest peak over smallest peak.
    pub growth: f64,
    pub eps: f64,
    pub reach_bound: f64,
    /// Last time each run is outside the `eps`-ball.
    pub settle_times: Vec<f64>,
    pub max_residual: f64,
}

impl RfcSweep {
    pub fn settled_within_bound(&self) -> bool {
        self.settle_times.iter().all(|&t| t <= self.reach_bound)
    }

    pub fn rfc_falsified(&self, min_growth: f64) -> bool {
        self.strictly_increasing && self.growth >= min_growth
    }
}

/// Cascade runs from histories whose delayed part is the recorded greedy
/// escape schedule smoothed by a moving average of half-width `δ`, for a
/// decreasing list of `δ`. Every run is continued to the reach-time bound
/// for `eps` plus `margin_t`.
pub fn rfc_sweep(
    params: &PlanarParams,
    cert: &LyapunovCert,
    cfg: &RfcConfig,
    opts: &IntegratorOptions,
) -> Result<RfcSweep, ProbeError> {
    let deltas = cfg.delta_list();
    require(!deltas.is_empty(), || {
        "at least one smoothing width is required".into()
    })?;
    require(deltas.iter().all(|&d| d > 0.0 && d.is_finite()), || {
        "smoothing widths must be positive".into()
    })?;
    require(deltas.windows(2).all(|w| w[0] > w[1]), || {
        "smoothing widths must be strictly decreasing".into()
    })?;
    require(cfg.eps > 0.0 && cfg.margin_t >= 0.0, || {
        "eps must be positive and margin_t nonnegative".into()
    })?;
    let policy = greedy_with_dwell(params, cfg.dwell)?;
    let run = run_switching(params, &policy, cfg.x0, cfg.greedy_horizon, opts)?;
    let t_escape = run.t_escape.ok_or_else(|| {
        ProbeError::BadParameter(format!(
            "greedy switching from {:?} did not escape before {}",
            cfg.x0, cfg.greedy_horizon
        ))
    })?;
    let tau = cfg.tau.unwrap_or_else(|| default_cascade_delay(t_escape));
    require(tau >= default_cascade_delay(t_escape), || {
        format!("tau = {tau} must be at least 1.5 times the escape time {t_escape}")
    })?;
    let sys = cascade_system(params, tau)?;
    let history_norm = inf_norm(&cfg.x0).max(1.0);
    let reach_bound = uga_bound(&cert.constants, tau, history_norm, cfg.eps);
    let horizon = reach_bound + cfg.margin_t;

    let runs: Vec<(f64, f64, f64)> = deltas
        .par_iter()
        .enumerate()
        .map(|(i, &delta)| {
            let hist = smoothed_history(&run.schedule, delta, tau, cfg.x0)?;
            let traj = match integrate(&sys, &hist, &InputSignal::none(), horizon, opts)? {
                SimOutcome::Completed { trajectory } => trajectory,
                SimOutcome::Escaped(e) => {
                    return Err(ProbeError::UnexpectedEscape {
                        index: i,
                        t_escape: e.t_escape,
                    })
                }
            };
            let peak = traj.sup_norm_of(CASCADE_X, 0.0, tau);
            let settle =
                last_exit_time(traj.poly(), 0.0, horizon, cfg.eps, inf_norm).unwrap_or(0.0);
            let residual = if cfg.audit_samples > 0 {
                residual_audit(&traj, &sys, &InputSignal::none(), cfg.audit_samples)?
            } else {
                0.0
            };
            Ok((peak, settle, residual))
        })
        .collect::<Result<_, ProbeError>>()?;
    let peaks: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let (lo, hi) = peaks.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &p| {
        (lo.min(p), hi.max(p))
    });
    Ok(RfcSweep {
        t_escape,
        tau,
        history_norm,
        strictly_increasing: peaks.windows(2).all(|w| w[1] > w[0]),
        growth: hi / lo,
        peaks,
        deltas,
        eps: cfg.eps,
        reach_bound,
        settle_times: runs.iter().map(|r| r.1).collect(),
        max_residual: runs.iter().map(|r| r.2).fold(0.0, f64::max),
    })
}

/// History `[z, x]` on `[-τ, 0]` with `z(s) = smoothed(s + τ)` and the
/// constant `x ≡ x0`.
pub(crate) fn smoothed_history(
    schedule: &InputSignal,
    delta: f64,
    tau: f64,
    x0: [f64; 2],
) -> Result<HistoryFn, ProbeError> {
    let z = box_smooth(schedule, delta)?.to_poly(0.0, tau)?;
    let mut knots: Vec<f64> = z.breaks().iter().map(|b| b - tau).collect();
    let values: Vec<Vec<f64>> = z
        .breaks()
        .iter()
        .map(|&b| vec![z.eval(b).expect("inside span")[0], x0[0], x0[1]])
        .collect();
    knots[0] = -tau;
    *knots.last_mut().expect("nonempty") = 0.0;
    Ok(HistoryFn::linear(&knots, &values)?)
}
