use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rfc::smoothed_history;
use super::sampling::{draw_rng, random_history, random_piecewise_constant};
use super::{require, ProbeError};
use crate::integrator::{integrate, DiscreteDelaySystem, HistoryFn, IntegratorOptions, SimOutcome};
use crate::poly::inf_norm;
use crate::signal::InputSignal;
use crate::systems::{
    associated_input, associated_system, cascade_system, planar_system, run_switching,
    PlanarParams, SwitchingPolicy, DEFAULT_DWELL,
};

/// Smoothing half-width for the adversarial cascade history.
pub const ADVERSARIAL_DELTA: f64 = 0.5 / 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemKind {
    /// `x' = g(x, u)`; samples `|x(0)| <= r`, `‖u‖ <= r`.
    Planar,
    /// The delayed cascade; samples `‖φ‖ <= r`.
    Cascade { tau: f64 },
    /// The cascade with its delayed state replaced by an input `v`;
    /// samples `|ξ(0)| <= r`, `‖v‖ <= r`.
    Associated { tau: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReachConfig {
    pub budget: usize,
    pub seed: u64,
    /// Dwell of the adversarial switching draw, in rescaled time.
    pub dwell: f64,
}

impl Default for ReachConfig {
    fn default() -> Self {
        Self {
            budget: 64,
            seed: 0,
            dwell: DEFAULT_DWELL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachEstimate {
    pub r: f64,
    pub horizon: f64,
    /// Max over the draws of `sup_{[0, horizon]} |state|_∞`.
    pub lower_bound: f64,
    pub sample_budget: usize,
    pub escape_seen: bool,
    /// Index of the draw attaining `lower_bound`.
    pub best_draw: usize,
}

/// Greedy switching restricted to inputs `{0, λ}` with `λ = min(r, 1)`,
/// started from `(0, r)`: the recorded schedule.
fn adversarial_schedule(
    params: &PlanarParams,
    r: f64,
    horizon: f64,
    dwell: f64,
    opts: &IntegratorOptions,
) -> Result<InputSignal, ProbeError> {
    let hi = r.min(1.0);
    let p = *params;
    let a_hi = p.pencil().at(hi).sym_part();
    let a_lo = p.a2.sym_part();
    let policy = SwitchingPolicy::new(dwell, true, move |x| {
        if a_hi.quad_form(x) >= a_lo.quad_form(x) {
            hi
        } else {
            0.0
        }
    })?;
    Ok(run_switching(params, &policy, [0.0, r], horizon, opts)?.schedule)
}

fn random_point(rng: &mut rand_chacha::ChaCha8Rng, dim: usize, r: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let c = rng.random_range(0..dim);
    v[c] = if rng.random::<bool>() { 1.0 } else { -1.0 };
    v.into_iter().map(|x| x * r).collect()
}

struct Draw {
    history: HistoryFn,
    input: InputSignal,
}

/// Seeded lower bound on the reachable-set radius
/// `sup{|state(t)| : data of size <= r, 0 <= t <= horizon}`.
///
/// Draw 0 is the adversarial greedy switching family (scaled to `r`); the
/// others are random piecewise-linear histories or initial states with
/// piecewise-constant inputs, from per-draw streams of `seed`. Every draw
/// starts with `|state(0)|_∞ = r`.
pub fn estimate_r(
    params: &PlanarParams,
    kind: SystemKind,
    r: f64,
    horizon: f64,
    cfg: &ReachConfig,
    opts: &IntegratorOptions,
) -> Result<ReachEstimate, ProbeError> {
    require(cfg.budget >= 1, || "budget must be at least 1".into())?;
    require(r >= 0.0 && r.is_finite(), || "r must be nonnegative".into())?;
    require(horizon >= 0.0 && horizon.is_finite(), || {
        "horizon must be nonnegative".into()
    })?;
    let sys: DiscreteDelaySystem = match kind {
        SystemKind::Planar => planar_system(params),
        SystemKind::Cascade { tau } => cascade_system(params, tau)?,
        SystemKind::Associated { tau } => associated_system(&cascade_system(params, tau)?),
    };
    let n = sys.dim();

    let draw = |i: usize| -> Result<Draw, ProbeError> {
        if i == 0 && r > 0.0 {
            let (history, input) = match kind {
                SystemKind::Planar => (
                    HistoryFn::constant(0.0, vec![0.0, r])?,
                    adversarial_schedule(params, r, horizon.max(1e-9), cfg.dwell, opts)?,
                ),
                SystemKind::Cascade { tau } => {
                    let s = adversarial_schedule(params, r, tau, cfg.dwell, opts)?;
                    (
                        smoothed_history(&s, ADVERSARIAL_DELTA, tau, [0.0, r])?,
                        InputSignal::none(),
                    )
                }
                SystemKind::Associated { .. } => {
                    let s = adversarial_schedule(params, r, horizon.max(1e-9), cfg.dwell, opts)?;
                    let v = InputSignal::stack(vec![s, InputSignal::constant(vec![0.0, 0.0])]);
                    (
                        HistoryFn::constant(0.0, vec![0.0, 0.0, r])?,
                        associated_input(vec![v], None),
                    )
                }
            };
            return Ok(Draw { history, input });
        }
        let mut rng = draw_rng(cfg.seed, i as u64);
        let (history, input) = match kind {
            SystemKind::Planar => (
                HistoryFn::constant(0.0, random_point(&mut rng, n, r))?,
                random_piecewise_constant(&mut rng, 1, r),
            ),
            SystemKind::Cascade { tau } => {
                (random_history(&mut rng, n, tau, r), InputSignal::none())
            }
            SystemKind::Associated { .. } => {
                let xi0 = random_point(&mut rng, n, r);
                let v = random_piecewise_constant(&mut rng, n, r);
                (
                    HistoryFn::constant(0.0, xi0)?,
                    associated_input(vec![v], None),
                )
            }
        };
        Ok(Draw { history, input })
    };

    let results: Vec<(f64, bool)> = (0..cfg.budget)
        .into_par_iter()
        .map(|i| {
            let d = draw(i)?;
            let start = inf_norm(d.history.value_at_zero());
            if horizon == 0.0 {
                return Ok((start, false));
            }
            let out = integrate(&sys, &d.history, &d.input, horizon, opts)?;
            Ok(match out {
                SimOutcome::Completed { trajectory } => {
                    (trajectory.sup_norm(0.0, horizon).max(start), false)
                }
                SimOutcome::Escaped(e) => {
                    let seen = e.trajectory.sup_norm(0.0, e.t_escape).max(e.final_norm);
                    (seen.max(opts.escape_threshold), true)
                }
            })
        })
        .collect::<Result<_, ProbeError>>()?;
    let (best_draw, lower_bound) =
        results
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &(v, _))| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
    Ok(ReachEstimate {
        r,
        horizon,
        lower_bound,
        sample_budget: cfg.budget,
        escape_seen: results.iter().any(|&(_, e)| e),
        best_draw,
    })
}

/// [`estimate_r`] over increasing radii. Each reported bound is the running
/// maximum, valid because the true radius is nondecreasing in `r`.
pub fn estimate_r_sweep(
    params: &PlanarParams,
    kind: SystemKind,
    r_list: &[f64],
    horizon: f64,
    cfg: &ReachConfig,
    opts: &IntegratorOptions,
) -> Result<Vec<ReachEstimate>, ProbeError> {
    require(r_list.windows(2).all(|w| w[0] < w[1]), || {
        "radii must be strictly increasing".into()
    })?;
    let mut out: Vec<ReachEstimate> = Vec::with_capacity(r_list.len());
    for &r in r_list {
        let mut est = estimate_r(params, kind, r, horizon, cfg, opts)?;
        if let Some(prev) = out.last() {
            if prev.lower_bound > est.lower_bound {
                est.lower_bound = prev.lower_bound;
            }
            est.escape_seen |= prev.escape_seen;
        }
        out.push(est);
    }
    Ok(out)
}
