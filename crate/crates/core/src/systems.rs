//! The switched planar system, its delayed cascade, the nondelayed system
//! obtained by treating delayed states as inputs, the maps between
//! histories and such inputs, and a state-feedback switching policy that
//! drives the planar system to finite escape.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{
    integrate, DiscreteDelaySystem, HistoryFn, IntegrateError, IntegratorOptions, Kink, KinkSource,
};
use crate::lyapunov::{Mat2, MatrixPencil};
use crate::poly::{inf_norm, PiecewisePoly};
use crate::signal::{InputSignal, SignalError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("delay must be positive and finite, got {0}")]
    BadDelay(f64),
    #[error("window width {width} must lie in (0, {min_gap}) so history windows stay disjoint")]
    WindowOverlap { width: f64, min_gap: f64 },
    #[error("expected {expected} input signals, got {got}")]
    InputCount { expected: usize, got: usize },
    #[error("switching dwell must be positive, got {0}")]
    BadDwell(f64),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Saturation to `[0, 1]`.
pub fn phi(r: f64) -> f64 {
    r.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanarParams {
    pub a1: Mat2,
    pub a2: Mat2,
}

impl Default for PlanarParams {
    fn default() -> Self {
        Self {
            a1: Mat2::new(0.0, 2.0, -0.5, -0.1),
            a2: Mat2::new(-0.1, 0.5, -2.0, 0.0),
        }
    }
}

impl PlanarParams {
    pub fn pencil(&self) -> MatrixPencil {
        MatrixPencil::new(self.a1, self.a2)
    }

    /// `(1 + |x|_2^2) A(φ(u)) x`.
    pub fn g(&self, x: [f64; 2], u: f64) -> [f64; 2] {
        let lam = phi(u);
        let gain = 1.0 + x[0] * x[0] + x[1] * x[1];
        let (a, b) = (self.a1, self.a2);
        let m = |p: f64, q: f64| lam * p + (1.0 - lam) * q;
        [
            gain * (m(a.a11, b.a11) * x[0] + m(a.a12, b.a12) * x[1]),
            gain * (m(a.a21, b.a21) * x[0] + m(a.a22, b.a22) * x[1]),
        ]
    }
}

/// [`PlanarParams::g`] with the default matrices.
pub fn g(x: [f64; 2], u: f64) -> [f64; 2] {
    PlanarParams::default().g(x, u)
}

/// Corners of [`phi`].
const SATURATION_LEVELS: [f64; 2] = [0.0, 1.0];

fn saturation_kinks(source: KinkSource) -> Vec<Kink> {
    SATURATION_LEVELS
        .iter()
        .map(|&level| Kink { source, level })
        .collect()
}

/// `x' = g(x, u)`: two states, one input, no delay.
pub fn planar_system(params: &PlanarParams) -> DiscreteDelaySystem {
    let p = *params;
    DiscreteDelaySystem::ode(2, 1, move |x, _, u, out| {
        let v = p.g([x[0], x[1]], u[0]);
        out.copy_from_slice(&v);
    })
    .with_name("planar")
    .with_kinks(saturation_kinks(KinkSource::Input { component: 0 }))
    .expect("input 0 exists")
}

/// State layout of the cascade: `[z, x1, x2]`.
pub const CASCADE_Z: usize = 0;
pub const CASCADE_X: std::ops::Range<usize> = 1..3;

/// `z' = -z`, `x' = g(x, z(t - τ))`.
pub fn cascade_system(params: &PlanarParams, tau: f64) -> Result<DiscreteDelaySystem, SystemError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(SystemError::BadDelay(tau));
    }
    let p = *params;
    let sys = DiscreteDelaySystem::new(3, 0, vec![tau], move |s, d, _, out| {
        out[0] = -s[0];
        let v = p.g([s[1], s[2]], d[CASCADE_Z]);
        out[1] = v[0];
        out[2] = v[1];
    })?
    .with_kinks(saturation_kinks(KinkSource::Delayed {
        delay: 0,
        component: CASCADE_Z,
    }))?;
    Ok(sys.with_name("cascade"))
}

/// The nondelayed system `ξ' = f(ξ, v_1, …, v_ℓ, u)` in which every delayed
/// state becomes an input block. Input layout: `[v_1, …, v_ℓ, u]`.
pub fn associated_system(sys: &DiscreteDelaySystem) -> DiscreteDelaySystem {
    let inner = sys.clone();
    let n = sys.dim();
    let ln = n * sys.delays().len();
    let kinks = sys
        .kinks()
        .iter()
        .map(|k| Kink {
            level: k.level,
            source: KinkSource::Input {
                component: match k.source {
                    KinkSource::Delayed { delay, component } => delay * n + component,
                    KinkSource::Input { component } => ln + component,
                },
            },
        })
        .collect();
    DiscreteDelaySystem::ode(n, ln + sys.input_dim(), move |x, _, w, out| {
        inner.eval_rhs(x, &w[..ln], &w[ln..], out)
    })
    .with_name(format!("{}-associated", sys.name()))
    .with_kinks(kinks)
    .expect("every kink maps to an input block")
}

/// Inputs `v_i(t) = φ(t - τ_i)` on `[0, τ_1)`, zero elsewhere, and
/// `ξ_0 = φ(0)`.
pub fn embed_history_as_inputs(
    history: &HistoryFn,
    delays: &[f64],
) -> Result<(Vec<f64>, Vec<InputSignal>), SystemError> {
    let Some(&tau1) = delays.first() else {
        return Ok((history.value_at_zero().to_vec(), Vec::new()));
    };
    let tau = *delays.last().expect("nonempty");
    if history.tau() < tau * (1.0 - 1e-12) {
        return Err(IntegrateError::BadHistoryDomain {
            start: -history.tau(),
            end: 0.0,
        }
        .into());
    }
    let inputs = delays
        .iter()
        .map(|&d| {
            let shifted = history.poly().shifted(d);
            InputSignal::zero_outside(InputSignal::polynomial(shifted), 0.0, tau1)
        })
        .collect();
    Ok((history.value_at_zero().to_vec(), inputs))
}

/// Input for [`associated_system`]: the blocks `v_i` followed by `u` (if
/// the delay system has inputs).
pub fn associated_input(v: Vec<InputSignal>, u: Option<InputSignal>) -> InputSignal {
    let mut parts = v;
    parts.extend(u);
    InputSignal::stack(parts)
}

/// History with `φ(s) = v_i(s + τ_i)` on `[-τ_i, -τ_i + width]`,
/// `φ(0) = ξ_0`, linear in between. `width` defaults to `τ*/2`.
pub fn history_from_inputs(
    xi0: &[f64],
    v: &[InputSignal],
    delays: &[f64],
    width: Option<f64>,
) -> Result<HistoryFn, SystemError> {
    if v.len() != delays.len() {
        return Err(SystemError::InputCount {
            expected: delays.len(),
            got: v.len(),
        });
    }
    if delays.is_empty() {
        return Ok(HistoryFn::constant(0.0, xi0.to_vec())?);
    }
    let mut prev = 0.0;
    let mut min_gap = f64::INFINITY;
    for &d in delays {
        if !(d > prev && d.is_finite()) {
            return Err(IntegrateError::BadDelays(delays.to_vec()).into());
        }
        min_gap = min_gap.min(d - prev);
        prev = d;
    }
    let w = width.unwrap_or(0.5 * min_gap);
    if !(w > 0.0 && w < min_gap) {
        return Err(SystemError::WindowOverlap { width: w, min_gap });
    }
    let n = xi0.len();
    let zeros = vec![0.0; n];
    let mut poly: Option<PiecewisePoly> = None;
    for (vi, &d) in v.iter().zip(delays).rev() {
        if vi.dim() != n {
            return Err(IntegrateError::InputDimension {
                expected: n,
                got: vi.dim(),
            }
            .into());
        }
        let piece = vi.to_poly(0.0, w)?.shifted(-d);
        poly = Some(match poly {
            None => piece,
            Some(mut acc) => {
                let first = piece.first_value().to_vec();
                acc.push_segment_to(-d, -d - acc.end(), &first, [&zeros, &zeros, &zeros]);
                acc.append(&piece);
                acc
            }
        });
    }
    let mut acc = poly.expect("at least one delay");
    acc.push_segment_to(0.0, -acc.end(), xi0, [&zeros, &zeros, &zeros]);
    Ok(HistoryFn::from_poly(acc)?)
}

type Rule = dyn Fn([f64; 2]) -> f64 + Send + Sync;

/// Sampled state feedback for the planar system: at the start of each
/// piece the rule picks the input, which is then held for the piece.
#[derive(Clone)]
pub struct SwitchingPolicy {
    /// Piece length, in rescaled time when `rescaled` is set.
    pub dwell: f64,
    /// Hold each input for `dwell / (1 + |x|_2^2)` instead of `dwell`, so
    /// a piece covers a fixed amount of the system's own time scale.
    pub rescaled: bool,
    rule: Arc<Rule>,
}

impl fmt::Debug for SwitchingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SwitchingPolicy")
            .field("dwell", &self.dwell)
            .field("rescaled", &self.rescaled)
            .finish_non_exhaustive()
    }
}

impl SwitchingPolicy {
    pub fn new(
        dwell: f64,
        rescaled: bool,
        rule: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self, SystemError> {
        if !(dwell > 0.0 && dwell.is_finite()) {
            return Err(SystemError::BadDwell(dwell));
        }
        Ok(Self {
            dwell,
            rescaled,
            rule: Arc::new(rule),
        })
    }

    pub fn choose(&self, x: [f64; 2]) -> f64 {
        (self.rule)(x)
    }

    pub fn piece_length(&self, x: [f64; 2]) -> f64 {
        if self.rescaled {
            self.dwell / (1.0 + x[0] * x[0] + x[1] * x[1])
        } else {
            self.dwell
        }
    }
}

pub const DEFAULT_DWELL: f64 = 1e-3;

/// `1` when `xᵀ(A_1 + A_1ᵀ)x ≥ xᵀ(A_2 + A_2ᵀ)x`, else `0`: the mode with
/// the larger instantaneous growth of `|x|_2^2`.
pub fn greedy_choice(params: &PlanarParams, x: [f64; 2]) -> f64 {
    let s1 = params.a1.sym_part().quad_form(x);
    let s2 = params.a2.sym_part().quad_form(x);
    if s1 >= s2 {
        1.0
    } else {
        0.0
    }
}

/// Greedy policy with the default dwell in rescaled time.
pub fn greedy_worst_switch(params: &PlanarParams) -> SwitchingPolicy {
    greedy_with_dwell(params, DEFAULT_DWELL).expect("default dwell is valid")
}

pub fn greedy_with_dwell(
    params: &PlanarParams,
    dwell: f64,
) -> Result<SwitchingPolicy, SystemError> {
    let p = *params;
    SwitchingPolicy::new(dwell, true, move |x| greedy_choice(&p, x))
}

/// Closed-loop run of the planar system under a switching policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchedRun {
    /// The realized open-loop input, piecewise constant from `t = 0`.
    pub schedule: InputSignal,
    /// Solution on `[0, end]`.
    pub path: PiecewisePoly,
    /// Time at which `|x|_∞` reached the threshold, if it did.
    pub t_escape: Option<f64>,
    pub pieces: usize,
    pub peak: f64,
}

impl SwitchedRun {
    pub fn end(&self) -> f64 {
        self.path.end()
    }
}

/// Apply `policy` to the planar system from `x0` until `t_max` or escape.
pub fn run_switching(
    params: &PlanarParams,
    policy: &SwitchingPolicy,
    x0: [f64; 2],
    t_max: f64,
    opts: &IntegratorOptions,
) -> Result<SwitchedRun, SystemError> {
    let sys = planar_system(params);
    let mut t = 0.0;
    let mut x = x0;
    let mut path = PiecewisePoly::point(0.0, x0.to_vec());
    let mut breakpoints: Vec<f64> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut pieces = 0;
    let mut peak = inf_norm(&x0);
    let mut t_escape = None;
    // Piece ends accumulate rounding; a remainder this small is the horizon.
    let slack = 1e-12 * t_max.max(1.0);
    while t_max - t > slack {
        let lam = policy.choose(x);
        let dt = policy.piece_length(x).min(t_max - t);
        match values.last() {
            Some(v) if v[0] == lam => {}
            Some(_) => {
                breakpoints.push(t);
                values.push(vec![lam]);
            }
            None => values.push(vec![lam]),
        }
        let h = HistoryFn::constant(0.0, x.to_vec())?;
        let out = integrate(&sys, &h, &InputSignal::constant(vec![lam]), dt, opts)?;
        pieces += 1;
        let escape = out.escape().map(|e| e.t_escape);
        let piece = out.into_trajectory();
        peak = peak.max(piece.sup_norm(0.0, piece.end()));
        let seg = piece.poly().shifted(t);
        path.append(&seg);
        let last = piece.final_value();
        x = [last[0], last[1]];
        if let Some(te) = escape {
            t_escape = Some(t + te);
            break;
        }
        t = path.end();
    }
    let schedule = InputSignal::piecewise_constant(breakpoints, values)?;
    Ok(SwitchedRun {
        schedule,
        path,
        t_escape,
        pieces,
        peak,
    })
}

/// Cascade delay placing the escape of `run` well inside `[0, τ]`.
pub fn default_cascade_delay(t_escape: f64) -> f64 {
    1.5 * t_escape
}
