use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampling::{draw_rng, random_history, random_piecewise_constant, random_trapezoid};
use super::{require, ProbeError};
use crate::integrator::{
    integrate, residual_audit, DiscreteDelaySystem, HistoryFn, IntegratorOptions, SimOutcome,
    Trajectory,
};
use crate::signal::InputSignal;
use crate::systems::{
    associated_input, associated_system, embed_history_as_inputs, history_from_inputs,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquivalenceConfig {
    pub pairs: usize,
    pub radius: f64,
    pub seed: u64,
    /// Allowed deviation in units of `rel_tol · scale + abs_tol`.
    pub tol_factor: f64,
    /// Uniform comparison points per window, besides both step grids.
    pub grid: usize,
    pub audit_samples: usize,
}

impl Default for EquivalenceConfig {
    fn default() -> Self {
        Self {
            pairs: 50,
            radius: 1.0,
            seed: 0,
            tol_factor: 10.0,
            grid: 200,
            audit_samples: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub pairs: usize,
    /// Window `[0, τ₁]` of the history-to-input direction.
    pub embed_window: f64,
    /// Window `[0, τ*/2]` of the input-to-history direction.
    pub inverse_window: f64,
    pub max_dev_embed: f64,
    pub max_dev_inverse: f64,
    /// Largest deviation over its allowed tolerance, across both directions.
    pub worst_ratio: f64,
    pub max_residual: f64,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.worst_ratio <= 1.0
    }
}

fn completed(out: SimOutcome, index: usize) -> Result<Trajectory, ProbeError> {
    match out {
        SimOutcome::Completed { trajectory } => Ok(trajectory),
        SimOutcome::Escaped(e) => Err(ProbeError::UnexpectedEscape {
            index,
            t_escape: e.t_escape,
        }),
    }
}

/// Max of `|a(t) - b(t)|_∞` over both step grids and a uniform grid on
/// `[0, end]`, and the larger sup norm of the two.
fn deviation(a: &Trajectory, b: &Trajectory, end: f64, grid: usize) -> (f64, f64) {
    let mut times: Vec<f64> = a
        .step_times()
        .iter()
        .chain(b.step_times())
        .copied()
        .collect();
    times.extend((0..=grid).map(|j| end * j as f64 / grid.max(1) as f64));
    let n = a.dim();
    let (mut ya, mut yb) = (vec![0.0; n], vec![0.0; n]);
    let mut dev: f64 = 0.0;
    for t in times.into_iter().filter(|&t| t <= end) {
        a.eval_into(t, &mut ya);
        b.eval_into(t, &mut yb);
        let d = ya
            .iter()
            .zip(&yb)
            .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        dev = dev.max(d);
    }
    let scale = a.sup_norm(0.0, end).max(b.sup_norm(0.0, end));
    (dev, scale)
}

struct PairResult {
    dev_embed: f64,
    dev_inverse: f64,
    ratio: f64,
    residual: f64,
}

/// Compares the delay system with its nondelayed associated system in
/// both directions on random data: a random history turned into inputs on
/// `[0, τ₁]`, and random continuous inputs turned into a history on
/// `[0, τ*/2]`. External inputs, if any, are random piecewise constant.
pub fn equivalence_check(
    sys: &DiscreteDelaySystem,
    cfg: &EquivalenceConfig,
    opts: &IntegratorOptions,
) -> Result<EquivalenceReport, ProbeError> {
    require(!sys.delays().is_empty(), || "system has no delays".into())?;
    require(cfg.pairs > 0, || "pairs must be at least 1".into())?;
    require(cfg.radius > 0.0 && cfg.radius.is_finite(), || {
        "radius must be positive".into()
    })?;
    let assoc = associated_system(sys);
    let delays = sys.delays().to_vec();
    let tau1 = delays[0];
    let tau = sys.max_delay();
    let width = 0.5 * sys.min_gap().expect("delays exist");
    let (n, m) = (sys.dim(), sys.input_dim());
    let allowed = |scale: f64| cfg.tol_factor * (opts.rel_tol * scale + opts.abs_tol);
    let audit = |traj: &Trajectory, s: &DiscreteDelaySystem, u: &InputSignal| {
        if cfg.audit_samples == 0 {
            Ok(0.0)
        } else {
            residual_audit(traj, s, u, cfg.audit_samples)
        }
    };

    let results: Vec<PairResult> = (0..cfg.pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = draw_rng(cfg.seed, i as u64);
            let hist = random_history(&mut rng, n, tau, cfg.radius);
            let u = random_piecewise_constant(&mut rng, m, cfg.radius);
            let ext = (m > 0).then(|| u.clone());

            let delayed = completed(integrate(sys, &hist, &u, tau1, opts)?, i)?;
            let (xi0, v) = embed_history_as_inputs(&hist, &delays)?;
            let w_in = associated_input(v, ext.clone());
            let nondelayed = completed(
                integrate(&assoc, &HistoryFn::constant(0.0, xi0)?, &w_in, tau1, opts)?,
                i,
            )?;
            let (dev_embed, scale_e) = deviation(&delayed, &nondelayed, tau1, cfg.grid);
            let mut residual = audit(&delayed, sys, &u)?.max(audit(&nondelayed, &assoc, &w_in)?);

            let xi0: Vec<f64> = (0..n)
                .map(|_| cfg.radius * rng.random_range(-1.0..=1.0))
                .collect();
            let v: Vec<InputSignal> = delays
                .iter()
                .map(|_| random_trapezoid(&mut rng, n, cfg.radius, 0.25 * width))
                .collect();
            let built = history_from_inputs(&xi0, &v, &delays, None)?;
            let delayed = completed(integrate(sys, &built, &u, width, opts)?, i)?;
            let w_in = associated_input(v, ext);
            let nondelayed = completed(
                integrate(&assoc, &HistoryFn::constant(0.0, xi0)?, &w_in, width, opts)?,
                i,
            )?;
            let (dev_inverse, scale_i) = deviation(&delayed, &nondelayed, width, cfg.grid);
            residual =
                residual
                    .max(audit(&delayed, sys, &u)?)
                    .max(audit(&nondelayed, &assoc, &w_in)?);

            let ratio = (dev_embed / allowed(scale_e)).max(dev_inverse / allowed(scale_i));
            Ok(PairResult {
                dev_embed,
                dev_inverse,
                ratio,
                residual,
            })
        })
        .collect::<Result<_, ProbeError>>()?;
    let max = |f: fn(&PairResult) -> f64| results.iter().map(f).fold(0.0, f64::max);
    Ok(EquivalenceReport {
        pairs: results.len(),
        embed_window: tau1,
        inverse_window: width,
        max_dev_embed: max(|r| r.dev_embed),
        max_dev_inverse: max(|r| r.dev_inverse),
        worst_ratio: max(|r| r.ratio),
        max_residual: max(|r| r.residual),
    })
}
