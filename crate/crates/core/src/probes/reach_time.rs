use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampling::{draw_rng, random_history};
use super::{require, ProbeError};
use crate::integrator::{integrate, residual_audit, IntegratorOptions, SimOutcome};
use crate::lyapunov::{LyapunovCert, StabilityConstants};
use crate::poly::{inf_norm, PiecewisePoly};
use crate::signal::InputSignal;
use crate::systems::{cascade_system, PlanarParams};

/// Time by which every cascade solution with `‖φ‖ <= r` has entered the
/// `eps`-ball for good: `t₁ + τ + 2c₂²/(c₁ε²)` with
/// `t₁ = max(0, ln(r / min(Λ, ε)))`, the time `z` needs to reach `min(Λ, ε)`.
pub fn uga_bound(constants: &StabilityConstants, tau: f64, r: f64, eps: f64) -> f64 {
    let t1 = (r / constants.capital_lambda.min(eps)).ln().max(0.0);
    t1 + tau + 2.0 * constants.c2 * constants.c2 / (constants.c1 * eps * eps)
}

/// Last time in `[a, b]` at which `measure(y(t)) > eps`, or `None` if it
/// never does. `measure` must be nondecreasing in each `|y_c|` (any norm of
/// any sub-vector). Segments are scanned from the end and the crossing is
/// narrowed by halving intervals whose sup exceeds `eps`.
pub fn last_exit_time(
    poly: &PiecewisePoly,
    a: f64,
    b: f64,
    eps: f64,
    measure: impl Fn(&[f64]) -> f64 + Copy,
) -> Option<f64> {
    let a = a.max(poly.start());
    let b = b.min(poly.end());
    if a > b {
        return None;
    }
    let mut buf = vec![0.0; poly.dim()];
    poly.eval_into(b, &mut buf);
    if measure(&buf) > eps {
        return Some(b);
    }
    let breaks = poly.breaks();
    let mut hi_idx = breaks.partition_point(|&t| t < b);
    let mut hi = b;
    while hi > a {
        let lo = if hi_idx == 0 {
            a
        } else {
            breaks[hi_idx - 1].max(a)
        };
        if hi_idx > 0 {
            poly.segment_abs_bound(hi_idx - 1, &mut buf);
        }
        let may_exceed = hi_idx == 0 || measure(&buf) > eps;
        if lo < hi && may_exceed && poly.sup_of(lo, hi, measure) > eps {
            return Some(refine(poly, lo, hi, eps, measure));
        }
        if hi_idx == 0 {
            break;
        }
        hi = lo;
        hi_idx -= 1;
    }
    None
}

fn refine(
    poly: &PiecewisePoly,
    mut lo: f64,
    mut hi: f64,
    eps: f64,
    measure: impl Fn(&[f64]) -> f64 + Copy,
) -> f64 {
    // invariant: sup over [lo, hi] exceeds eps, and nothing after hi does
    while hi - lo > 1e-13 * hi.abs().max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if poly.sup_of(mid, hi, measure) > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UgaConfig {
    pub r_list: Vec<f64>,
    pub eps_list: Vec<f64>,
    /// Histories sampled per radius; shared by every `ε`.
    pub per_cell: usize,
    /// Extra time integrated past the largest bound of a radius.
    pub margin_t: f64,
    pub seed: u64,
    /// Residual-audit samples per run; 0 disables the audit.
    pub audit_samples: usize,
}

impl Default for UgaConfig {
    fn default() -> Self {
        Self {
            r_list: vec![1.0, 10.0, 100.0],
            eps_list: vec![0.1, 1.0],
            per_cell: 50,
            margin_t: 10.0,
            seed: 0,
            audit_samples: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UgaCell {
    pub r: f64,
    pub eps: f64,
    pub bound: f64,
    pub samples: usize,
    /// Largest settling time over the samples.
    pub empirical: f64,
    /// Samples that settled after `bound`.
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UgaTable {
    pub tau: f64,
    pub cells: Vec<UgaCell>,
    pub max_residual: f64,
}

impl UgaTable {
    pub fn passed(&self) -> bool {
        self.cells.iter().all(|c| c.violations == 0)
    }
}

/// Settling times of the cascade from random histories of norm exactly `r`
/// against [`uga_bound`], one integration per history.
pub fn uga_table(
    params: &PlanarParams,
    cert: &LyapunovCert,
    tau: f64,
    cfg: &UgaConfig,
    opts: &IntegratorOptions,
) -> Result<UgaTable, ProbeError> {
    require(
        cfg.r_list
            .iter()
            .chain(&cfg.eps_list)
            .all(|&v| v > 0.0 && v.is_finite()),
        || "radii and ball sizes must be positive".into(),
    )?;
    require(cfg.per_cell > 0, || "per_cell must be at least 1".into())?;
    require(cfg.margin_t >= 0.0, || {
        "margin_t must be nonnegative".into()
    })?;
    let sys = cascade_system(params, tau)?;
    let consts = cert.constants;
    let mut cells = Vec::new();
    let mut max_residual: f64 = 0.0;
    for (ri, &r) in cfg.r_list.iter().enumerate() {
        let bounds: Vec<f64> = cfg
            .eps_list
            .iter()
            .map(|&e| uga_bound(&consts, tau, r, e))
            .collect();
        let horizon = bounds.iter().cloned().fold(0.0, f64::max) + cfg.margin_t;
        let runs: Vec<(Vec<f64>, f64)> = (0..cfg.per_cell)
            .into_par_iter()
            .map(|i| {
                let stream = ((ri as u64) << 32) | i as u64;
                let hist = random_history(&mut draw_rng(cfg.seed, stream), 3, tau, r);
                let out = integrate(&sys, &hist, &InputSignal::none(), horizon, opts)?;
                let traj = match out {
                    SimOutcome::Completed { trajectory } => trajectory,
                    SimOutcome::Escaped(e) => {
                        return Err(ProbeError::UnexpectedEscape {
                            index: i,
                            t_escape: e.t_escape,
                        })
                    }
                };
                let mut settle = Vec::with_capacity(bounds.len());
                for (&eps, &bound) in cfg.eps_list.iter().zip(&bounds) {
                    let t = last_exit_time(traj.poly(), 0.0, horizon, eps, inf_norm).unwrap_or(0.0);
                    if t > bound + cfg.margin_t || t >= horizon {
                        return Err(ProbeError::HorizonTooShort {
                            index: i,
                            r,
                            eps,
                            t,
                            horizon,
                        });
                    }
                    settle.push(t);
                }
                let residual = if cfg.audit_samples > 0 {
                    residual_audit(&traj, &sys, &InputSignal::none(), cfg.audit_samples)?
                } else {
                    0.0
                };
                Ok((settle, residual))
            })
            .collect::<Result<_, ProbeError>>()?;
        for (j, (&eps, &bound)) in cfg.eps_list.iter().zip(&bounds).enumerate() {
            let times = runs.iter().map(|(s, _)| s[j]);
            cells.push(UgaCell {
                r,
                eps,
                bound,
                samples: runs.len(),
                empirical: times.clone().fold(0.0, f64::max),
                violations: times.filter(|&t| t > bound).count(),
            });
        }
        max_residual = runs
            .iter()
            .map(|(_, res)| *res)
            .fold(max_residual, f64::max);
    }
    Ok(UgaTable {
        tau,
        cells,
        max_residual,
    })
}
