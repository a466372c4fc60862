//! Adaptive method-of-steps integration of systems with discrete delays.
//!
//! The right-hand side is advanced with the Dormand–Prince 5(4) pair and
//! its quartic continuous extension. Delayed states are read from the
//! initial history on `[-τ, 0]` and from the dense output afterwards; the
//! step size never exceeds the smallest delay, so a lookup never reaches
//! past the last accepted step. Step boundaries are forced at every input
//! breakpoint, at multiples of each delay, at the shifted knots of a
//! piecewise-linear history and wherever a declared [`Kink`] level is
//! crossed.

mod audit;
mod history;
mod tableau;
mod trajectory;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use audit::{residual_audit, residual_audit_seeded};
pub use history::HistoryFn;
pub use trajectory::Trajectory;

use crate::poly::{inf_norm, PiecewisePoly};
use crate::signal::{InputSignal, SignalError};
use tableau::*;

/// `f(x, delayed, u, out)`: `delayed` holds `x(t - τ_j)` for every delay,
/// concatenated in delay order.
pub type RhsFn = dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync;

/// Upper bound on forced stops generated from one source.
const MAX_DELAY_STOPS: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("history domain [{start}, {end}] must be [-τ, 0] with τ covering the largest delay")]
    BadHistoryDomain { start: f64, end: f64 },
    #[error("history has dimension {got}, system state has {expected}")]
    HistoryDimension { expected: usize, got: usize },
    #[error("input has dimension {got}, system expects {expected}")]
    InputDimension { expected: usize, got: usize },
    #[error("delays must be positive, finite and strictly increasing, got {0:?}")]
    BadDelays(Vec<f64>),
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("invalid integrator options: {0}")]
    BadOptions(String),
    #[error("kink refers to a missing argument: {0}")]
    BadKink(String),
    #[error("step size fell below {h_min} at t = {t} while the state was not growing")]
    StepSizeUnderflow { t: f64, h_min: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },
    #[error("window of length {needed} requested, only {available} available")]
    SpanTooShort { needed: f64, available: f64 },
    #[error("t = {t} outside trajectory span [{start}, {end}]")]
    OutsideSpan { t: f64, start: f64, end: f64 },
    #[error("input signal: {0}")]
    Input(#[from] SignalError),
}

/// Argument of the right-hand side that a [`Kink`] watches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KinkSource {
    /// Component `component` of `x(t - τ_delay)`, `delay` indexing the
    /// delay list.
    Delayed {
        delay: usize,
        component: usize,
    },
    Input {
        component: usize,
    },
}

/// The right-hand side is continuous but not smooth where `source` crosses
/// `level` (a saturation corner, say). Steps are made to end there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kink {
    pub source: KinkSource,
    pub level: f64,
}

/// A system `x' = f(x(t), x(t - τ_1), …, x(t - τ_ℓ), u(t))`.
#[derive(Clone)]
pub struct DiscreteDelaySystem {
    name: String,
    dim: usize,
    input_dim: usize,
    delays: Vec<f64>,
    kinks: Vec<Kink>,
    rhs: Arc<RhsFn>,
}

impl fmt::Debug for DiscreteDelaySystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiscreteDelaySystem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("input_dim", &self.input_dim)
            .field("delays", &self.delays)
            .field("kinks", &self.kinks)
            .finish_non_exhaustive()
    }
}

impl DiscreteDelaySystem {
    pub fn new(
        dim: usize,
        input_dim: usize,
        delays: Vec<f64>,
        rhs: impl Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self, IntegrateError> {
        let ok = delays.iter().all(|d| d.is_finite() && *d > 0.0)
            && delays.windows(2).all(|w| w[1] > w[0]);
        if !ok {
            return Err(IntegrateError::BadDelays(delays));
        }
        Ok(Self {
            name: String::from("system"),
            dim,
            input_dim,
            delays,
            kinks: Vec::new(),
            rhs: Arc::new(rhs),
        })
    }

    pub fn with_kinks(mut self, kinks: Vec<Kink>) -> Result<Self, IntegrateError> {
        for k in &kinks {
            let ok = k.level.is_finite()
                && match k.source {
                    KinkSource::Delayed { delay, component } => {
                        delay < self.delays.len() && component < self.dim
                    }
                    KinkSource::Input { component } => component < self.input_dim,
                };
            if !ok {
                return Err(IntegrateError::BadKink(format!("{k:?}")));
            }
        }
        self.kinks = kinks;
        Ok(self)
    }

    pub fn kinks(&self) -> &[Kink] {
        &self.kinks
    }

    /// A system without delays.
    pub fn ode(
        dim: usize,
        input_dim: usize,
        rhs: impl Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self::new(dim, input_dim, Vec::new(), rhs).expect("no delays")
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    /// `τ = τ_ℓ`, or `0` without delays.
    pub fn max_delay(&self) -> f64 {
        self.delays.last().copied().unwrap_or(0.0)
    }

    /// `τ* = min(τ_i - τ_{i-1})` with `τ_0 = 0`.
    pub fn min_gap(&self) -> Option<f64> {
        let mut prev = 0.0;
        let mut gap = f64::INFINITY;
        for &d in &self.delays {
            gap = gap.min(d - prev);
            prev = d;
        }
        (!self.delays.is_empty()).then_some(gap)
    }

    pub fn eval_rhs(&self, x: &[f64], delayed: &[f64], u: &[f64], out: &mut [f64]) {
        (self.rhs)(x, delayed, u, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_min: f64,
    pub h_max: Option<f64>,
    pub h_init: Option<f64>,
    pub escape_threshold: f64,
    pub max_steps: usize,
    /// Also reject steps whose interpolant misses the right-hand side at
    /// the step midpoint by more than the tolerance. Delayed lookups read
    /// the interpolant, so its accuracy matters as much as the endpoint's.
    pub defect_control: bool,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            h_min: 1e-12,
            h_max: None,
            h_init: None,
            escape_threshold: 1e6,
            max_steps: 5_000_000,
            defect_control: true,
        }
    }
}

impl IntegratorOptions {
    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.escape_threshold = threshold;
        self
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let bad = |msg: &str| Err(IntegrateError::BadOptions(msg.to_string()));
        if !(pos(self.rel_tol) && pos(self.abs_tol)) {
            return bad("tolerances must be positive and finite");
        }
        if !pos(self.h_min) {
            return bad("h_min must be positive");
        }
        if self.h_max.is_some_and(|h| !(h > self.h_min)) {
            return bad("h_max must exceed h_min");
        }
        if self.h_init.is_some_and(|h| !pos(h)) {
            return bad("h_init must be positive");
        }
        if !(self.escape_threshold > 0.0) {
            return bad("escape_threshold must be positive");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscapeCause {
    /// `|x|_∞` reached the escape threshold.
    Threshold,
    /// Error tests kept failing below `h_min` while the state grew.
    StepCollapse,
    /// The right-hand side overflowed before the threshold was reached.
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Escape {
    pub t_escape: f64,
    pub final_norm: f64,
    pub cause: EscapeCause,
    /// Accepted solution up to the detection step.
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SimOutcome {
    Completed { trajectory: Trajectory },
    Escaped(Escape),
}

impl SimOutcome {
    pub fn trajectory(&self) -> &Trajectory {
        match self {
            SimOutcome::Completed { trajectory } => trajectory,
            SimOutcome::Escaped(e) => &e.trajectory,
        }
    }

    pub fn into_trajectory(self) -> Trajectory {
        match self {
            SimOutcome::Completed { trajectory } => trajectory,
            SimOutcome::Escaped(e) => e.trajectory,
        }
    }

    pub fn is_escaped(&self) -> bool {
        matches!(self, SimOutcome::Escaped(_))
    }

    pub fn completed(&self) -> Option<&Trajectory> {
        match self {
            SimOutcome::Completed { trajectory } => Some(trajectory),
            SimOutcome::Escaped(_) => None,
        }
    }

    pub fn escape(&self) -> Option<&Escape> {
        match self {
            SimOutcome::Escaped(e) => Some(e),
            SimOutcome::Completed { .. } => None,
        }
    }
}

/// Right-hand side evaluation with delayed lookups and input sampling.
pub(crate) struct Rhs<'a> {
    sys: &'a DiscreteDelaySystem,
    u: &'a InputSignal,
    delayed: Vec<f64>,
    uval: Vec<f64>,
}

impl<'a> Rhs<'a> {
    pub(crate) fn new(sys: &'a DiscreteDelaySystem, u: &'a InputSignal) -> Self {
        Self {
            sys,
            u,
            delayed: vec![0.0; sys.dim * sys.delays.len()],
            uval: vec![0.0; sys.input_dim],
        }
    }

    /// `left` samples the input's left limit at `t`, as needed at the end
    /// of a step that lands on an input breakpoint.
    pub(crate) fn eval(
        &mut self,
        past: &PiecewisePoly,
        t: f64,
        y: &[f64],
        left: bool,
        out: &mut [f64],
    ) -> Result<(), IntegrateError> {
        let n = self.sys.dim;
        for (j, &tau) in self.sys.delays.iter().enumerate() {
            let s = (t - tau).clamp(past.start(), past.end());
            past.eval_into(s, &mut self.delayed[j * n..(j + 1) * n]);
        }
        if self.sys.input_dim > 0 {
            if left {
                self.u.eval_left_into(t, &mut self.uval)?;
            } else {
                self.u.eval_into(t, &mut self.uval)?;
            }
        }
        (self.sys.rhs)(y, &self.delayed, &self.uval, out);
        Ok(())
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Times in `(0, t_end]` where a step must end.
///
/// A jump in `u` or a kink in the history at time `b` reappears in the
/// solution at `b + τ_j`, `b + τ_j + τ_i`, … with one more derivative of
/// smoothness each time. These are tracked for `PROPAGATION_DEPTH`
/// generations; beyond that the pair no longer notices them.
fn forced_stops(
    sys: &DiscreteDelaySystem,
    history: &HistoryFn,
    u: &InputSignal,
    t_end: f64,
) -> Vec<f64> {
    const PROPAGATION_DEPTH: usize = 5;
    // (time, exact): exact stops are input breakpoints and the horizon,
    // which must be hit bit-for-bit.
    let input_breaks = u.breakpoints(0.0, t_end);
    let mut stops: Vec<(f64, bool)> = input_breaks.iter().map(|&b| (b, true)).collect();
    stops.push((t_end, true));
    let mut corners = Vec::new();
    for k in &sys.kinks {
        match k.source {
            KinkSource::Input { component } => {
                corners.extend(u.level_crossings(component, k.level, 0.0, t_end));
            }
            KinkSource::Delayed { delay, component } => {
                let tau = sys.delays[delay];
                corners.extend(
                    history
                        .poly()
                        .level_crossings(component, k.level, -tau, 0.0)
                        .into_iter()
                        .map(|s| s + tau)
                        .filter(|&s| s > 0.0 && s < t_end),
                );
            }
        }
    }
    stops.extend(corners.iter().map(|&c| (c, false)));
    for &tau in &sys.delays {
        let count = ((t_end / tau).floor() as usize).min(MAX_DELAY_STOPS);
        stops.extend(
            (1..=count)
                .map(|k| (k as f64 * tau, false))
                .filter(|&(s, _)| s < t_end),
        );
    }
    if !sys.delays.is_empty() {
        let mut generation = input_breaks;
        generation.extend(corners);
        if history.is_linear() {
            generation.extend(history.interior_knots());
        }
        for _ in 0..PROPAGATION_DEPTH {
            let mut next: Vec<f64> = generation
                .iter()
                .flat_map(|&b| sys.delays.iter().map(move |&tau| b + tau))
                .filter(|&s| s > 0.0 && s < t_end)
                .collect();
            next.sort_by(f64::total_cmp);
            next.dedup();
            if next.is_empty() || stops.len() + next.len() > 2 * MAX_DELAY_STOPS {
                break;
            }
            stops.extend(next.iter().map(|&s| (s, false)));
            generation = next;
        }
    }
    stops.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, bool)> = Vec::with_capacity(stops.len());
    for (t, exact) in stops {
        match merged.last_mut() {
            Some(last) if t - last.0 <= 1e-12 * t.abs().max(1.0) => {
                if exact && !last.1 {
                    *last = (t, true);
                }
            }
            _ => merged.push((t, exact)),
        }
    }
    // A cluster next to the horizon must end on the horizon itself.
    if let Some(last) = merged.last_mut() {
        last.0 = t_end;
    }
    merged.into_iter().map(|(t, _)| t).collect()
}

/// Insert `s` into the sorted `stops[from..]` unless it lies past the
/// horizon or within merging distance of an existing stop.
fn insert_stop(stops: &mut Vec<f64>, from: usize, s: f64, t_end: f64) {
    if !(s < t_end) {
        return;
    }
    let idx = from + stops[from..].partition_point(|&x| x < s);
    let near = |x: f64| (x - s).abs() <= 1e-12 * s.abs().max(1.0);
    if near(stops[idx]) || (idx > from && near(stops[idx - 1])) {
        return;
    }
    stops.insert(idx, s);
}

fn rms_error(err: &[f64], y0: &[f64], y1: &[f64], opts: &IntegratorOptions) -> f64 {
    if err.is_empty() {
        return 0.0;
    }
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = opts.abs_tol + opts.rel_tol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / err.len() as f64).sqrt()
}

fn scaled_norm(v: &[f64], y: &[f64], opts: &IntegratorOptions) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let s: f64 = v
        .iter()
        .zip(y)
        .map(|(a, b)| (a / (opts.abs_tol + opts.rel_tol * b.abs())).powi(2))
        .sum();
    (s / v.len() as f64).sqrt()
}

/// Starting step size from the scale of `y` and its first two derivatives.
fn initial_step(
    rhs: &mut Rhs,
    past: &PiecewisePoly,
    y0: &[f64],
    f0: &[f64],
    h_cap: f64,
    opts: &IntegratorOptions,
) -> Result<f64, IntegrateError> {
    let d0 = scaled_norm(y0, y0, opts);
    let d1 = scaled_norm(f0, y0, opts);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(h_cap);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    rhs.eval(past, h0, &y1, false, &mut f1)?;
    let df: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| (a - b) / h0).collect();
    let d2 = scaled_norm(&df, y0, opts);
    let h1 = if !d2.is_finite() {
        h0 * 1e-3
    } else if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(h_cap).max(opts.h_min))
}

/// First time in the last accepted step at which `|x|_∞` reaches `level`.
fn locate_crossing(poly: &PiecewisePoly, t0: f64, t1: f64, level: f64) -> f64 {
    let mut buf = vec![0.0; poly.dim()];
    let mut norm = |t: f64| {
        poly.eval_into(t, &mut buf);
        inf_norm(&buf)
    };
    const SAMPLES: usize = 64;
    let mut lo = t0;
    let mut hi = t1;
    for i in 1..=SAMPLES {
        let t = if i == SAMPLES {
            t1
        } else {
            t0 + (t1 - t0) * i as f64 / SAMPLES as f64
        };
        if norm(t) >= level {
            hi = t;
            break;
        }
        lo = t;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if norm(mid) >= level {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Integrate `sys` from `history` under input `u` on `[0, t_end]`.
pub fn integrate(
    sys: &DiscreteDelaySystem,
    history: &HistoryFn,
    u: &InputSignal,
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<SimOutcome, IntegrateError> {
    opts.validate()?;
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(IntegrateError::BadHorizon(t_end));
    }
    if history.dim() != sys.dim {
        return Err(IntegrateError::HistoryDimension {
            expected: sys.dim,
            got: history.dim(),
        });
    }
    if sys.input_dim > 0 && u.dim() != sys.input_dim {
        return Err(IntegrateError::InputDimension {
            expected: sys.input_dim,
            got: u.dim(),
        });
    }
    let tau = sys.max_delay();
    if history.tau() < tau * (1.0 - 1e-12) {
        return Err(IntegrateError::BadHistoryDomain {
            start: -history.tau(),
            end: 0.0,
        });
    }

    let n = sys.dim;
    let mut stops = forced_stops(sys, history, u, t_end);
    let h_cap = opts
        .h_max
        .unwrap_or(f64::INFINITY)
        .min(sys.delays.first().copied().unwrap_or(f64::INFINITY));
    let mut traj = Trajectory::new(history);
    let mut rhs = Rhs::new(sys, u);

    let mut t = 0.0;
    let mut y = history.value_at_zero().to_vec();
    let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err_vec = vec![0.0; n];
    let (mut r3, mut r4, mut r5) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);

    let escaped = |traj: Trajectory, t_escape: f64, cause: EscapeCause| {
        let final_norm = inf_norm(traj.final_value());
        Ok(SimOutcome::Escaped(Escape {
            t_escape,
            final_norm,
            cause,
            trajectory: traj,
        }))
    };

    if inf_norm(&y) >= opts.escape_threshold {
        return escaped(traj, 0.0, EscapeCause::Threshold);
    }
    rhs.eval(traj.poly(), 0.0, &y, false, &mut k[0])?;
    if !all_finite(&k[0]) {
        return escaped(traj, 0.0, EscapeCause::NonFinite);
    }
    let mut h = match opts.h_init {
        Some(h) => h.min(h_cap),
        None => initial_step(&mut rhs, traj.poly(), &y, &k[0], h_cap.min(stops[0]), opts)?,
    };

    let mut stop_idx = 0;
    let mut attempts = 0usize;
    let mut rejected = false;
    let mut growing = false;

    while t < t_end {
        while stops[stop_idx] <= t {
            stop_idx += 1;
        }
        let stop = stops[stop_idx];
        h = h.min(h_cap);
        let gap = stop - t;
        let (landing, hs) = if t + 1.01 * h >= stop {
            if gap <= h_cap {
                (true, gap)
            } else {
                (false, 0.5 * gap)
            }
        } else {
            (false, h)
        };
        let t_new = if landing { stop } else { t + hs };

        attempts += 1;
        if attempts > opts.max_steps {
            return Err(IntegrateError::TooManySteps {
                t,
                max_steps: opts.max_steps,
            });
        }

        // Stages 2..6.
        let rows: [&[f64]; 5] = [
            &[A21],
            &[A31, A32],
            &[A41, A42, A43],
            &[A51, A52, A53, A54],
            &[A61, A62, A63, A64, A65],
        ];
        for (s, row) in rows.iter().enumerate() {
            for c in 0..n {
                let mut acc = 0.0;
                for (j, a) in row.iter().enumerate() {
                    acc += a * k[j][c];
                }
                stage[c] = y[c] + hs * acc;
            }
            let (ts, left) = if s + 1 == 5 {
                (t_new, true)
            } else {
                (t + C[s + 1] * hs, false)
            };
            rhs.eval(traj.poly(), ts, &stage, left, &mut k[s + 1])?;
        }
        for c in 0..n {
            y_new[c] = y[c]
                + hs * (B1 * k[0][c] + B3 * k[2][c] + B4 * k[3][c] + B5 * k[4][c] + B6 * k[5][c]);
        }
        rhs.eval(traj.poly(), t_new, &y_new, true, &mut k[6])?;
        for c in 0..n {
            err_vec[c] = hs
                * (E1 * k[0][c]
                    + E3 * k[2][c]
                    + E4 * k[3][c]
                    + E5 * k[4][c]
                    + E6 * k[5][c]
                    + E7 * k[6][c]);
        }

        let finite = k.iter().all(|v| all_finite(v)) && all_finite(&y_new);
        let mut err = if finite {
            rms_error(&err_vec, &y, &y_new, opts)
        } else {
            f64::NAN
        };

        if err <= 1.0 {
            for c in 0..n {
                let dy = y_new[c] - y[c];
                r3[c] = hs * k[0][c] - dy;
                r4[c] = dy - hs * k[6][c] - r3[c];
                r5[c] = hs
                    * (D1 * k[0][c]
                        + D3 * k[2][c]
                        + D4 * k[3][c]
                        + D5 * k[4][c]
                        + D6 * k[5][c]
                        + D7 * k[6][c]);
            }
            if opts.defect_control {
                // h (p'(t_mid) - f(t_mid, p(t_mid))) for the interpolant p;
                // stage 2's slot is free once the step is computed.
                for c in 0..n {
                    let q = r3[c] + 0.5 * (r4[c] + 0.5 * r5[c]);
                    let s_mid = (y_new[c] - y[c]) + 0.5 * q;
                    stage[c] = y[c] + 0.5 * s_mid;
                    err_vec[c] = s_mid + 0.5 * (0.5 * r4[c] - q);
                }
                rhs.eval(traj.poly(), t + 0.5 * hs, &stage, false, &mut k[1])?;
                for c in 0..n {
                    err_vec[c] -= hs * k[1][c];
                }
                let defect = rms_error(&err_vec, &y, &y_new, opts);
                err = if defect.is_finite() {
                    err.max(defect)
                } else {
                    f64::NAN
                };
            }
        }

        if !err.is_finite() {
            rejected = true;
            h = 0.25 * hs;
            if h < opts.h_min {
                return escaped(traj, t, EscapeCause::NonFinite);
            }
            continue;
        }

        if err > 1.0 {
            let trial_grows = inf_norm(&y_new) > inf_norm(&y);
            rejected = true;
            h = hs * (0.9 * err.powf(-0.2)).max(0.2);
            if h < opts.h_min {
                if growing || trial_grows {
                    return escaped(traj, t, EscapeCause::StepCollapse);
                }
                return Err(IntegrateError::StepSizeUnderflow {
                    t,
                    h_min: opts.h_min,
                });
            }
            continue;
        }

        traj.poly_mut()
            .push_segment_to(t_new, hs, &y_new, [&r3, &r4, &r5]);
        traj.push_error(err);

        let mut fac = if err == 0.0 {
            10.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 10.0)
        };
        if rejected {
            fac = fac.min(1.0);
        }
        let h_next = if landing && hs < h {
            (hs * fac).max(h)
        } else {
            hs * fac
        };
        for k in &sys.kinks {
            if let KinkSource::Delayed { delay, component } = k.source {
                let tau = sys.delays[delay];
                for s in traj.poly().level_crossings(component, k.level, t, t_new) {
                    insert_stop(&mut stops, stop_idx, s + tau, t_end);
                    for &tau_i in &sys.delays {
                        insert_stop(&mut stops, stop_idx, s + tau + tau_i, t_end);
                    }
                }
            }
        }
        let new_norm = inf_norm(&y_new);
        growing = new_norm > inf_norm(&y);
        let t_prev = t;
        t = t_new;
        std::mem::swap(&mut y, &mut y_new);
        rejected = false;
        h = h_next;

        if new_norm >= opts.escape_threshold {
            let t_escape = locate_crossing(traj.poly(), t_prev, t, opts.escape_threshold);
            return escaped(traj, t_escape, EscapeCause::Threshold);
        }

        if landing && t < t_end {
            rhs.eval(traj.poly(), t, &y, false, &mut k[0])?;
            if !all_finite(&k[0]) {
                return escaped(traj, t, EscapeCause::NonFinite);
            }
        } else {
            k.swap(0, 6);
        }
    }
    Ok(SimOutcome::Completed { trajectory: traj })
}
