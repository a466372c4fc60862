use serde::{Deserialize, Serialize};

use super::{HistoryFn, IntegrateError};
use crate::poly::{inf_norm, PiecewisePoly};

/// Dense solution over `[-τ, t_end]`: the initial history followed by one
/// polynomial segment per accepted step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    poly: PiecewisePoly,
    history_segments: usize,
    step_errors: Vec<f64>,
}

impl Trajectory {
    pub(crate) fn new(history: &HistoryFn) -> Self {
        let poly = history.poly().clone();
        let history_segments = poly.segment_count();
        Self {
            poly,
            history_segments,
            step_errors: Vec::new(),
        }
    }

    pub(crate) fn poly_mut(&mut self) -> &mut PiecewisePoly {
        &mut self.poly
    }

    pub(crate) fn push_error(&mut self, err: f64) {
        self.step_errors.push(err);
    }

    pub fn dim(&self) -> usize {
        self.poly.dim()
    }

    /// Start of the stored span (`-τ`).
    pub fn start(&self) -> f64 {
        self.poly.start()
    }

    /// Last accepted time.
    pub fn end(&self) -> f64 {
        self.poly.end()
    }

    pub fn poly(&self) -> &PiecewisePoly {
        &self.poly
    }

    /// Accepted step boundaries, starting at `0`.
    pub fn step_times(&self) -> &[f64] {
        &self.poly.breaks()[self.history_segments..]
    }

    /// Scaled local error estimate of every accepted step (each ≤ 1).
    pub fn step_errors(&self) -> &[f64] {
        &self.step_errors
    }

    pub fn step_count(&self) -> usize {
        self.step_errors.len()
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>, IntegrateError> {
        self.poly.eval(t).ok_or(IntegrateError::OutsideSpan {
            t,
            start: self.start(),
            end: self.end(),
        })
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> bool {
        self.poly.eval_into(t, out)
    }

    pub fn initial_value(&self) -> Vec<f64> {
        self.eval(0.0).expect("span contains zero")
    }

    pub fn final_value(&self) -> &[f64] {
        self.poly.last_value()
    }

    /// `max |x(t)|_∞` over `[a, b] ∩ span`.
    pub fn sup_norm(&self, a: f64, b: f64) -> f64 {
        self.poly.sup_norm(a, b)
    }

    /// `max |x_range(t)|_∞` over `[a, b] ∩ span`.
    pub fn sup_norm_of(&self, range: std::ops::Range<usize>, a: f64, b: f64) -> f64 {
        self.poly.sup_of(a, b, |v| inf_norm(&v[range.clone()]))
    }

    /// The segment `s ↦ x(t + s)` on `[-tau, 0]`.
    pub fn extract_history(&self, t: f64, tau: f64) -> Result<HistoryFn, IntegrateError> {
        if !(tau >= 0.0) || t - tau < self.start() || t > self.end() {
            return Err(IntegrateError::SpanTooShort {
                needed: tau,
                available: (t.min(self.end()) - self.start()).max(0.0),
            });
        }
        let window = self.poly.window(t - tau, t).expect("checked window");
        HistoryFn::from_poly(window.shifted(-t))
    }

    /// Samples `(t, x(t))` on a uniform grid of `n + 1` points over
    /// `[a, b] ∩ [0, end]`.
    pub fn sample(&self, a: f64, b: f64, n: usize) -> Vec<(f64, Vec<f64>)> {
        let a = a.max(self.start());
        let b = b.min(self.end());
        if a > b {
            return Vec::new();
        }
        let n = n.max(1);
        (0..=n)
            .map(|i| {
                let t = if i == n {
                    b
                } else {
                    a + (b - a) * i as f64 / n as f64
                };
                (t, self.poly.eval(t).expect("inside span"))
            })
            .collect()
    }
}
