use serde::{Deserialize, Serialize};

use super::reach_time::last_exit_time;
use super::{require, ProbeError};
use crate::integrator::{integrate, HistoryFn, IntegratorOptions, Trajectory};
use crate::lyapunov::{solve_lyapunov, LyapunovCert};
use crate::signal::InputSignal;
use crate::systems::{phi, planar_system, PlanarParams, CASCADE_X, CASCADE_Z};

/// Central-difference step for slopes of quadratic forms along a solution.
pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayAudit {
    /// Audited window `[start, end]` on which `|z(t - τ)| <= Λ`.
    pub start: f64,
    pub end: f64,
    pub samples: usize,
    pub omega_start: f64,
    pub audit_tol: f64,
    /// Largest `ω' + ω/(2c₂) + ω²/(2c₂²)` over the samples.
    pub worst_margin: f64,
    /// Samples whose margin exceeds `audit_tol`.
    pub violations: usize,
    /// Largest `ω(t) - ω(start) e^{-(t - start)/(2c₂)}`.
    pub gronwall_excess: f64,
}

impl DecayAudit {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.gronwall_excess <= self.audit_tol
    }
}

fn omega(cert: &LyapunovCert, traj: &Trajectory, t: f64, y: &mut [f64]) -> f64 {
    traj.eval_into(t, y);
    cert.w([y[CASCADE_X.start], y[CASCADE_X.start + 1]])
}

/// Audit of `ω' <= -ω/(2c₂) - ω²/(2c₂²)` for `ω = xᵀP₀x` along a cascade
/// run, on the window after the last time the delayed `z` exceeds `Λ`.
///
/// `audit_tol = tol_rel · ω(start)`.
pub fn decay_audit(
    traj: &Trajectory,
    cert: &LyapunovCert,
    tau: f64,
    samples: usize,
    tol_rel: f64,
) -> Result<DecayAudit, ProbeError> {
    require(traj.dim() == 3, || {
        "decay audit expects a cascade trajectory".into()
    })?;
    require(samples >= 2, || "at least two samples are needed".into())?;
    let lam = cert.capital_lambda();
    let z_abs = |y: &[f64]| y[CASCADE_Z].abs();
    let end = traj.end();
    let start = match last_exit_time(traj.poly(), -tau, end - tau, lam, z_abs) {
        Some(t) => t + tau,
        None => 0.0,
    };
    let (lo, hi) = (start + FD_STEP, end - FD_STEP);
    if !(lo < hi) {
        return Err(ProbeError::WindowInvalid { bound: lam });
    }
    let c2 = cert.constants.c2;
    let mut y = vec![0.0; 3];
    let omega_start = omega(cert, traj, start, &mut y);
    let audit_tol = tol_rel * omega_start;
    let mut worst_margin = f64::NEG_INFINITY;
    let mut violations = 0;
    let mut gronwall_excess = f64::NEG_INFINITY;
    for i in 0..samples {
        let t = lo + (hi - lo) * i as f64 / (samples - 1) as f64;
        let w = omega(cert, traj, t, &mut y);
        let slope = (omega(cert, traj, t + FD_STEP, &mut y)
            - omega(cert, traj, t - FD_STEP, &mut y))
            / (2.0 * FD_STEP);
        let margin = slope + w / (2.0 * c2) + w * w / (2.0 * c2 * c2);
        worst_margin = worst_margin.max(margin);
        if margin > audit_tol {
            violations += 1;
        }
        gronwall_excess = gronwall_excess.max(w - omega_start * (-(t - start) / (2.0 * c2)).exp());
    }
    Ok(DecayAudit {
        start,
        end,
        samples,
        omega_start,
        audit_tol,
        worst_margin,
        violations,
        gronwall_excess,
    })
}

/// Largest central-difference slope of `W_λ(x) = xᵀP_λx`, with `P_λ`
/// solving the Lyapunov equation for `A(φ(u))`, along the planar system
/// under the constant input `u`, relative to `W_λ(x0)`.
pub fn constant_input_slope(
    params: &PlanarParams,
    u: f64,
    x0: [f64; 2],
    horizon: f64,
    samples: usize,
    opts: &IntegratorOptions,
) -> Result<f64, ProbeError> {
    require(horizon > 2.0 * FD_STEP, || {
        "horizon too short for the slope".into()
    })?;
    require(samples >= 2, || "at least two samples are needed".into())?;
    let p = solve_lyapunov(&params.pencil().at(phi(u)))?;
    let sys = planar_system(params);
    let hist = HistoryFn::constant(0.0, x0.to_vec())?;
    let out = integrate(&sys, &hist, &InputSignal::constant(vec![u]), horizon, opts)?;
    let traj = out.trajectory();
    let w0 = p.quad_form(x0);
    let mut y = vec![0.0; 2];
    let mut w_at = |t: f64| {
        traj.eval_into(t, &mut y);
        p.quad_form([y[0], y[1]])
    };
    let (lo, hi) = (FD_STEP, traj.end() - FD_STEP);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..samples {
        let t = lo + (hi - lo) * i as f64 / (samples - 1) as f64;
        let slope = (w_at(t + FD_STEP) - w_at(t - FD_STEP)) / (2.0 * FD_STEP);
        worst = worst.max(slope);
    }
    Ok(worst / w0)
}
