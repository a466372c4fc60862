//! Closed-form input signals.
//!
//! Signals are exact descriptions (never sampled arrays) so the integrator
//! can evaluate them at any stage time and knows every point where they or
//! their derivative jump. Piecewise-constant signals are right-continuous at
//! their breakpoints; [`InputSignal::eval_left_into`] gives left limits for
//! stages that sit on the right end of a step.
//!
//! The JSON form is internally tagged by `kind`, for example
//! `{"kind": "piecewise_constant", "breakpoints": [2.0], "values": [[1.0], [0.0]]}`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::{inf_norm, sign_changes, PiecewisePoly};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("t = {t} is outside the signal domain")]
    OutOfDomain { t: f64 },
    #[error("ramp half-width {delta} is not below half the minimum dwell {dwell}")]
    DwellTooSmall { dwell: f64, delta: f64 },
    #[error("invalid signal: {0}")]
    Invalid(String),
    #[error("signal is not piecewise polynomial on the requested interval")]
    NotPiecewisePolynomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSignal {
    Constant {
        value: Vec<f64>,
    },
    /// `values[0]` before `breakpoints[0]`, `values[j]` on
    /// `[breakpoints[j-1], breakpoints[j])`, `values.last()` afterwards.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
    /// Continuous piecewise-linear signal through the knots, held constant
    /// outside them.
    TrapezoidTrain {
        knots: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
    /// `initial · exp(-rate (t - start))`.
    ExponentialTail {
        start: f64,
        initial: Vec<f64>,
        rate: f64,
    },
    /// `first` on `(-∞, switch_time)`, `second` from `switch_time` on.
    Concatenation {
        first: Box<InputSignal>,
        second: Box<InputSignal>,
        switch_time: f64,
    },
    /// `inner(t - shift)`.
    TimeShift {
        inner: Box<InputSignal>,
        shift: f64,
    },
    /// `inner` on `[start, end)`, zero elsewhere.
    ZeroOutsideInterval {
        inner: Box<InputSignal>,
        start: f64,
        end: f64,
    },
    /// Piecewise polynomial on a closed interval; evaluation outside it is
    /// an error.
    Polynomial {
        poly: PiecewisePoly,
    },
    /// Component-wise concatenation: `(parts[0](t), parts[1](t), …)`.
    Stack {
        parts: Vec<InputSignal>,
    },
}

fn check_finite(xs: &[f64], what: &str) -> Result<(), SignalError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(SignalError::Invalid(format!("{what} must be finite")))
    }
}

fn check_increasing(xs: &[f64], what: &str) -> Result<(), SignalError> {
    check_finite(xs, what)?;
    if xs.windows(2).all(|w| w[0] < w[1]) {
        Ok(())
    } else {
        Err(SignalError::Invalid(format!(
            "{what} must be strictly increasing"
        )))
    }
}

fn check_values(values: &[Vec<f64>]) -> Result<usize, SignalError> {
    let dim = values
        .first()
        .map(Vec::len)
        .ok_or_else(|| SignalError::Invalid("at least one value required".into()))?;
    for v in values {
        if v.len() != dim {
            return Err(SignalError::Invalid("values have mixed dimensions".into()));
        }
        check_finite(v, "values")?;
    }
    Ok(dim)
}

impl InputSignal {
    pub fn constant(value: Vec<f64>) -> Self {
        Self::Constant { value }
    }

    /// Zero-dimensional signal for systems without inputs.
    pub fn none() -> Self {
        Self::Constant { value: Vec::new() }
    }

    pub fn piecewise_constant(
        breakpoints: Vec<f64>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self, SignalError> {
        let s = Self::PiecewiseConstant {
            breakpoints,
            values,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn trapezoid_train(knots: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, SignalError> {
        let s = Self::TrapezoidTrain { knots, values };
        s.validate()?;
        Ok(s)
    }

    /// Scalar periodic train starting at `low` at `t = 0`: ramp up over
    /// `ramp`, hold `high` for `plateau`, ramp down, hold `low`, repeated
    /// `cycles` times.
    pub fn periodic_trapezoid(
        low: f64,
        high: f64,
        plateau: f64,
        ramp: f64,
        cycles: usize,
    ) -> Result<Self, SignalError> {
        if !(ramp > 0.0 && plateau >= 0.0) {
            return Err(SignalError::Invalid(
                "ramp must be positive, plateau non-negative".into(),
            ));
        }
        let mut knots = vec![0.0];
        let mut values = vec![vec![low]];
        let mut t = 0.0;
        for _ in 0..cycles {
            for level in [high, low] {
                t += ramp;
                knots.push(t);
                values.push(vec![level]);
                if plateau > 0.0 {
                    t += plateau;
                    knots.push(t);
                    values.push(vec![level]);
                }
            }
        }
        Self::trapezoid_train(knots, values)
    }

    pub fn exponential_tail(start: f64, initial: Vec<f64>, rate: f64) -> Self {
        Self::ExponentialTail {
            start,
            initial,
            rate,
        }
    }

    /// `v` before `t_switch`, `w` from `t_switch` on.
    pub fn concat(v: InputSignal, w: InputSignal, t_switch: f64) -> Self {
        Self::Concatenation {
            first: Box::new(v),
            second: Box::new(w),
            switch_time: t_switch,
        }
    }

    pub fn time_shift(inner: InputSignal, shift: f64) -> Self {
        Self::TimeShift {
            inner: Box::new(inner),
            shift,
        }
    }

    pub fn zero_outside(inner: InputSignal, start: f64, end: f64) -> Self {
        Self::ZeroOutsideInterval {
            inner: Box::new(inner),
            start,
            end,
        }
    }

    pub fn stack(parts: Vec<InputSignal>) -> Self {
        Self::Stack { parts }
    }

    pub fn polynomial(poly: PiecewisePoly) -> Self {
        Self::Polynomial { poly }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Constant { value } => value.len(),
            Self::PiecewiseConstant { values, .. } | Self::TrapezoidTrain { values, .. } => {
                values.first().map_or(0, Vec::len)
            }
            Self::ExponentialTail { initial, .. } => initial.len(),
            Self::Concatenation { first, .. } => first.dim(),
            Self::TimeShift { inner, .. } | Self::ZeroOutsideInterval { inner, .. } => inner.dim(),
            Self::Polynomial { poly } => poly.dim(),
            Self::Stack { parts } => parts.iter().map(InputSignal::dim).sum(),
        }
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        match self {
            Self::Constant { value } => check_finite(value, "value"),
            Self::PiecewiseConstant {
                breakpoints,
                values,
            } => {
                check_increasing(breakpoints, "breakpoints")?;
                check_values(values)?;
                if values.len() != breakpoints.len() + 1 {
                    return Err(SignalError::Invalid(
                        "piecewise_constant needs one more value than breakpoints".into(),
                    ));
                }
                Ok(())
            }
            Self::TrapezoidTrain { knots, values } => {
                check_increasing(knots, "knots")?;
                check_values(values)?;
                if knots.len() != values.len() {
                    return Err(SignalError::Invalid(
                        "trapezoid_train needs one value per knot".into(),
                    ));
                }
                Ok(())
            }
            Self::ExponentialTail {
                start,
                initial,
                rate,
            } => {
                check_finite(&[*start, *rate], "start and rate")?;
                check_finite(initial, "initial")
            }
            Self::Concatenation {
                first,
                second,
                switch_time,
            } => {
                check_finite(&[*switch_time], "switch_time")?;
                first.validate()?;
                second.validate()?;
                if first.dim() != second.dim() {
                    return Err(SignalError::Invalid(
                        "concatenated signals differ in dimension".into(),
                    ));
                }
                Ok(())
            }
            Self::TimeShift { inner, shift } => {
                check_finite(&[*shift], "shift")?;
                inner.validate()
            }
            Self::ZeroOutsideInterval { inner, start, end } => {
                if !(start.is_finite() && !end.is_nan() && start <= end) {
                    return Err(SignalError::Invalid(
                        "interval must satisfy start <= end".into(),
                    ));
                }
                inner.validate()
            }
            Self::Polynomial { .. } => Ok(()),
            Self::Stack { parts } => parts.iter().try_for_each(InputSignal::validate),
        }
    }

    /// Right-continuous evaluation.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>, SignalError> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<(), SignalError> {
        self.eval_side(t, false, out)
    }

    /// Left limit at `t`; equals [`InputSignal::eval`] wherever the signal
    /// is continuous.
    pub fn eval_left_into(&self, t: f64, out: &mut [f64]) -> Result<(), SignalError> {
        self.eval_side(t, true, out)
    }

    pub fn eval_left(&self, t: f64) -> Result<Vec<f64>, SignalError> {
        let mut out = vec![0.0; self.dim()];
        self.eval_left_into(t, &mut out)?;
        Ok(out)
    }

    fn eval_side(&self, t: f64, left: bool, out: &mut [f64]) -> Result<(), SignalError> {
        if !t.is_finite() {
            return Err(SignalError::OutOfDomain { t });
        }
        match self {
            Self::Constant { value } => out.copy_from_slice(value),
            Self::PiecewiseConstant {
                breakpoints,
                values,
            } => {
                let idx = if left {
                    breakpoints.partition_point(|&b| b < t)
                } else {
                    breakpoints.partition_point(|&b| b <= t)
                };
                out.copy_from_slice(&values[idx]);
            }
            Self::TrapezoidTrain { knots, values } => {
                let idx = knots.partition_point(|&k| k <= t);
                if idx == 0 {
                    out.copy_from_slice(&values[0]);
                } else if idx == knots.len() {
                    out.copy_from_slice(&values[idx - 1]);
                } else {
                    let (k0, k1) = (knots[idx - 1], knots[idx]);
                    let w = (t - k0) / (k1 - k0);
                    for (c, o) in out.iter_mut().enumerate() {
                        *o = values[idx - 1][c] + w * (values[idx][c] - values[idx - 1][c]);
                    }
                }
            }
            Self::ExponentialTail {
                start,
                initial,
                rate,
            } => {
                let f = (-rate * (t - start)).exp();
                for (o, v) in out.iter_mut().zip(initial) {
                    *o = v * f;
                }
            }
            Self::Concatenation {
                first,
                second,
                switch_time,
            } => {
                let use_first = if left {
                    t <= *switch_time
                } else {
                    t < *switch_time
                };
                if use_first {
                    first.eval_side(t, left, out)?;
                } else {
                    second.eval_side(t, left, out)?;
                }
            }
            Self::TimeShift { inner, shift } => inner.eval_side(t - shift, left, out)?,
            Self::ZeroOutsideInterval { inner, start, end } => {
                let inside = if left {
                    *start < t && t <= *end
                } else {
                    *start <= t && t < *end
                };
                if inside {
                    inner.eval_side(t, left, out)?;
                } else {
                    out.fill(0.0);
                }
            }
            Self::Polynomial { poly } => {
                if !poly.eval_into(t, out) {
                    return Err(SignalError::OutOfDomain { t });
                }
            }
            Self::Stack { parts } => {
                let mut offset = 0;
                for p in parts {
                    let d = p.dim();
                    p.eval_side(t, left, &mut out[offset..offset + d])?;
                    offset += d;
                }
            }
        }
        Ok(())
    }

    /// Points in the open interval `(a, b)` where the signal or its
    /// derivative may be discontinuous, sorted and deduplicated.
    pub fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_breakpoints(a, b, &mut out);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn collect_breakpoints(&self, a: f64, b: f64, out: &mut Vec<f64>) {
        let inside = |t: f64| t > a && t < b;
        match self {
            Self::Constant { .. } | Self::ExponentialTail { .. } => {}
            Self::PiecewiseConstant {
                breakpoints: ts, ..
            }
            | Self::TrapezoidTrain { knots: ts, .. } => {
                out.extend(ts.iter().copied().filter(|&t| inside(t)));
            }
            Self::Polynomial { poly } => {
                out.extend(
                    poly.interior_breaks()
                        .iter()
                        .copied()
                        .filter(|&t| inside(t)),
                );
            }
            Self::Concatenation {
                first,
                second,
                switch_time,
            } => {
                let ts = *switch_time;
                if inside(ts) {
                    out.push(ts);
                }
                first.collect_breakpoints(a, ts.min(b), out);
                second.collect_breakpoints(ts.max(a), b, out);
            }
            Self::TimeShift { inner, shift } => {
                let mut tmp = Vec::new();
                inner.collect_breakpoints(a - shift, b - shift, &mut tmp);
                out.extend(tmp.into_iter().map(|t| t + shift).filter(|&t| inside(t)));
            }
            Self::ZeroOutsideInterval { inner, start, end } => {
                out.extend([*start, *end].into_iter().filter(|&t| inside(t)));
                inner.collect_breakpoints(a.max(*start), b.min(*end), out);
            }
            Self::Stack { parts } => parts.iter().for_each(|p| p.collect_breakpoints(a, b, out)),
        }
    }

    /// Times in `(a, b)` at which component `c` crosses `level` inside a
    /// smooth piece. Jumps across the level are breakpoints already and are
    /// not reported.
    pub fn level_crossings(&self, c: usize, level: f64, a: f64, b: f64) -> Vec<f64> {
        let mut out = Vec::new();
        if !(a < b) || c >= self.dim() {
            return out;
        }
        let mut knots = vec![a];
        knots.extend(self.breakpoints(a, b));
        knots.push(b);
        let mut buf = vec![0.0; self.dim()];
        for w in knots.windows(2) {
            let (p, q) = (w[0], w[1]);
            sign_changes(
                p,
                q,
                16,
                |t| {
                    let ok = if t == q {
                        self.eval_left_into(t, &mut buf)
                    } else {
                        self.eval_into(t, &mut buf)
                    };
                    if ok.is_ok() {
                        buf[c] - level
                    } else {
                        f64::NAN
                    }
                },
                &mut out,
            );
        }
        out.retain(|&t| t > a && t < b);
        out
    }

    /// Essential supremum of `|u(t)|_∞` over `[a, b]`, computed from the
    /// piece parameters. A degenerate interval returns the point value.
    pub fn sup_norm(&self, a: f64, b: f64) -> Result<f64, SignalError> {
        if !(a.is_finite() && b.is_finite() && a <= b) {
            return Err(SignalError::Invalid(format!("bad interval [{a}, {b}]")));
        }
        if a == b {
            return Ok(inf_norm(&self.eval(a)?));
        }
        Ok(match self {
            Self::Constant { value } => inf_norm(value),
            Self::PiecewiseConstant {
                breakpoints,
                values,
            } => {
                let mut best = 0.0_f64;
                for (j, v) in values.iter().enumerate() {
                    let lo = if j == 0 {
                        f64::NEG_INFINITY
                    } else {
                        breakpoints[j - 1]
                    };
                    let hi = breakpoints.get(j).copied().unwrap_or(f64::INFINITY);
                    if lo.max(a) < hi.min(b) {
                        best = best.max(inf_norm(v));
                    }
                }
                best
            }
            Self::TrapezoidTrain { knots, values } => {
                let mut best = inf_norm(&self.eval(a)?).max(inf_norm(&self.eval(b)?));
                for (k, v) in knots.iter().zip(values) {
                    if *k > a && *k < b {
                        best = best.max(inf_norm(v));
                    }
                }
                best
            }
            Self::ExponentialTail { .. } => inf_norm(&self.eval(a)?).max(inf_norm(&self.eval(b)?)),
            Self::Concatenation {
                first,
                second,
                switch_time,
            } => {
                let ts = *switch_time;
                let mut best = 0.0_f64;
                if a < ts {
                    best = best.max(first.sup_norm(a, ts.min(b))?);
                }
                if b > ts {
                    best = best.max(second.sup_norm(ts.max(a), b)?);
                }
                best
            }
            Self::TimeShift { inner, shift } => inner.sup_norm(a - shift, b - shift)?,
            Self::ZeroOutsideInterval { inner, start, end } => {
                let (lo, hi) = (a.max(*start), b.min(*end));
                let mut best = 0.0_f64;
                if lo < hi {
                    best = best.max(inner.sup_norm(lo, hi)?);
                }
                best
            }
            Self::Polynomial { poly } => {
                if a < poly.start() || b > poly.end() {
                    return Err(SignalError::OutOfDomain {
                        t: if a < poly.start() { a } else { b },
                    });
                }
                poly.sup_norm(a, b)
            }
            Self::Stack { parts } => {
                let mut best = 0.0_f64;
                for p in parts {
                    best = best.max(p.sup_norm(a, b)?);
                }
                best
            }
        })
    }

    /// Exact piecewise-polynomial form on `[a, b]`, when one exists.
    pub fn to_poly(&self, a: f64, b: f64) -> Result<PiecewisePoly, SignalError> {
        if !(a.is_finite() && b.is_finite() && a <= b) {
            return Err(SignalError::Invalid(format!("bad interval [{a}, {b}]")));
        }
        match self {
            Self::Polynomial { poly } => poly.window(a, b).ok_or(SignalError::OutOfDomain {
                t: if a < poly.start() { a } else { b },
            }),
            Self::TimeShift { inner, shift } => {
                Ok(inner.to_poly(a - shift, b - shift)?.shifted(*shift))
            }
            Self::Constant { .. } | Self::TrapezoidTrain { .. } => {
                // continuous and linear between consecutive breakpoints
                let mut knots = vec![a];
                knots.extend(self.breakpoints(a, b));
                if b > a {
                    knots.push(b);
                }
                let values = knots
                    .iter()
                    .map(|&t| self.eval(t))
                    .collect::<Result<Vec<_>, _>>()?;
                PiecewisePoly::linear(&knots, &values).ok_or(SignalError::NotPiecewisePolynomial)
            }
            _ => Err(SignalError::NotPiecewisePolynomial),
        }
    }
}

/// Dwell of the shortest interior piece, `+∞` if there is none.
fn min_dwell(breakpoints: &[f64]) -> f64 {
    breakpoints
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

fn as_schedule(schedule: &InputSignal) -> Result<(&[f64], &[Vec<f64>]), SignalError> {
    match schedule {
        InputSignal::PiecewiseConstant {
            breakpoints,
            values,
        } => Ok((breakpoints, values)),
        InputSignal::Constant { value } => Ok((&[], std::slice::from_ref(value))),
        _ => Err(SignalError::Invalid(
            "expected a piecewise_constant schedule".into(),
        )),
    }
}

/// Continuous trapezoid version of a piecewise-constant schedule: equal to
/// the schedule outside `(b - δ, b + δ)` around each breakpoint `b`, linear
/// across it.
///
/// Requires `δ` strictly below half the shortest dwell so that ramps never
/// meet. See [`box_smooth`] for a variant without that restriction.
pub fn smooth_square(schedule: &InputSignal, delta: f64) -> Result<InputSignal, SignalError> {
    schedule.validate()?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(SignalError::Invalid("delta must be positive".into()));
    }
    let (bps, values) = as_schedule(schedule)?;
    if bps.is_empty() {
        return Ok(schedule.clone());
    }
    let dwell = min_dwell(bps);
    if delta >= 0.5 * dwell {
        return Err(SignalError::DwellTooSmall { dwell, delta });
    }
    let mut knots = Vec::with_capacity(2 * bps.len());
    let mut vals = Vec::with_capacity(2 * bps.len());
    for (j, &b) in bps.iter().enumerate() {
        knots.push(b - delta);
        vals.push(values[j].clone());
        knots.push(b + delta);
        vals.push(values[j + 1].clone());
    }
    InputSignal::trapezoid_train(knots, vals)
}

/// Moving average of a piecewise-constant schedule over `[t - δ, t + δ]`.
///
/// The result is continuous and piecewise linear with knots at `b ± δ`, its
/// values are convex combinations of schedule values, and it coincides with
/// [`smooth_square`] whenever every dwell is at least `2δ`.
pub fn box_smooth(schedule: &InputSignal, delta: f64) -> Result<InputSignal, SignalError> {
    schedule.validate()?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(SignalError::Invalid("delta must be positive".into()));
    }
    let (bps, values) = as_schedule(schedule)?;
    if bps.is_empty() {
        return Ok(schedule.clone());
    }
    let dim = values[0].len();
    let mut knots: Vec<f64> = bps.iter().flat_map(|&b| [b - delta, b + delta]).collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    // primitive of the schedule relative to the first breakpoint
    let origin = bps[0];
    let mut cum = vec![vec![0.0; dim]];
    for j in 1..bps.len() {
        let prev = &cum[j - 1];
        let w = bps[j] - bps[j - 1];
        cum.push((0..dim).map(|c| prev[c] + w * values[j][c]).collect());
    }
    let primitive = |t: f64, c: usize| -> f64 {
        let idx = bps.partition_point(|&b| b <= t);
        if idx == 0 {
            (t - origin) * values[0][c]
        } else {
            cum[idx - 1][c] + (t - bps[idx - 1]) * values[idx][c]
        }
    };
    let vals = knots
        .iter()
        .map(|&k| {
            (0..dim)
                .map(|c| {
                    let v = (primitive(k + delta, c) - primitive(k - delta, c)) / (2.0 * delta);
                    // clamp rounding excursions into the hull of adjacent values
                    let (lo, hi) = values
                        .iter()
                        .map(|v| v[c])
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| {
                            (l.min(x), h.max(x))
                        });
                    v.clamp(lo, hi)
                })
                .collect()
        })
        .collect();
    InputSignal::trapezoid_train(knots, vals)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> InputSignal {
        InputSignal::piecewise_constant(
            vec![1.0, 2.0, 4.0],
            vec![vec![0.0], vec![1.0], vec![-0.5], vec![0.25]],
        )
        .unwrap()
    }

    /// Exact L¹ distance on [a, b] between two signals that are affine
    /// between their breakpoints: trapezoid areas, split at sign changes.
    fn l1_oracle(f: &InputSignal, g: &InputSignal, a: f64, b: f64) -> f64 {
        let mut nodes = vec![a, b];
        nodes.extend(f.breakpoints(a, b));
        nodes.extend(g.breakpoints(a, b));
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        let mut total = 0.0;
        for w in nodes.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            // inside a node interval both are affine (use interior limits)
            let eps = (t1 - t0) * 1e-12;
            let d0 = f.eval(t0 + eps).unwrap()[0] - g.eval(t0 + eps).unwrap()[0];
            let d1 = f.eval_left(t1).unwrap()[0] - g.eval_left(t1).unwrap()[0];
            if d0 * d1 >= 0.0 {
                total += 0.5 * (d0.abs() + d1.abs()) * (t1 - t0);
            } else {
                let z = t0 + (t1 - t0) * d0.abs() / (d0.abs() + d1.abs());
                total += 0.5 * d0.abs() * (z - t0) + 0.5 * d1.abs() * (t1 - z);
            }
        }
        total
    }

    #[test]
    fn eval_conventions() {
        let c = InputSignal::constant(vec![0.3]);
        assert_eq!(c.eval(7.0).unwrap(), vec![0.3]);
        let pc = InputSignal::piecewise_constant(vec![2.0], vec![vec![1.0], vec![0.0]]).unwrap();
        assert_eq!(pc.eval(2.0).unwrap(), vec![0.0]);
        assert_eq!(pc.eval_left(2.0).unwrap(), vec![1.0]);
        let tr = InputSignal::periodic_trapezoid(0.0, 1.0, 1.0, 0.25, 2).unwrap();
        assert_eq!(tr.eval(0.125).unwrap(), vec![0.5]);
        assert_eq!(tr.eval(0.5).unwrap(), vec![1.0]);
        assert!(matches!(
            c.eval(f64::NAN),
            Err(SignalError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn polynomial_domain_is_closed_interval() {
        let p = PiecewisePoly::linear(&[0.0, 1.0], &[vec![0.0], vec![1.0]]).unwrap();
        let s = InputSignal::polynomial(p);
        assert_eq!(s.eval(1.0).unwrap(), vec![1.0]);
        assert!(matches!(s.eval(1.5), Err(SignalError::OutOfDomain { .. })));
    }

    #[test]
    fn smooth_square_of_constant_is_identity() {
        let c = InputSignal::piecewise_constant(vec![], vec![vec![0.7]]).unwrap();
        assert_eq!(smooth_square(&c, 0.1).unwrap(), c);
        assert_eq!(box_smooth(&c, 0.1).unwrap(), c);
    }

    #[test]
    fn smooth_square_differs_only_near_breakpoints() {
        let s = square();
        let delta = 0.2;
        let sm = smooth_square(&s, delta).unwrap();
        for k in 0..=600 {
            let t = -1.0 + k as f64 * 0.01;
            let near = [1.0, 2.0, 4.0].iter().any(|b| (t - b).abs() < delta);
            let (a, b) = (sm.eval(t).unwrap()[0], s.eval(t).unwrap()[0]);
            if !near {
                assert!((a - b).abs() < 1e-15, "t = {t}");
            }
        }
        // midpoint of a ramp is the average of the adjacent values
        assert!((sm.eval(2.0).unwrap()[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn smooth_square_rejects_wide_ramps() {
        assert!(matches!(
            smooth_square(&square(), 0.5),
            Err(SignalError::DwellTooSmall { .. })
        ));
        assert!(box_smooth(&square(), 0.5).is_ok());
    }

    #[test]
    fn l1_distance_halves_with_delta() {
        let s = square();
        let d1 = l1_oracle(&smooth_square(&s, 0.2).unwrap(), &s, -1.0, 6.0);
        let d2 = l1_oracle(&smooth_square(&s, 0.1).unwrap(), &s, -1.0, 6.0);
        // δ |Δv| / 2 per breakpoint: jumps 1, 1.5, 0.75
        assert!((d1 - 0.2 * 3.25 / 2.0).abs() < 1e-12);
        assert!((d2 / d1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn box_smooth_matches_trapezoid_when_dwells_allow() {
        let s = square();
        let a = smooth_square(&s, 0.3).unwrap();
        let b = box_smooth(&s, 0.3).unwrap();
        for k in 0..=700 {
            let t = -1.0 + k as f64 * 0.01;
            assert!((a.eval(t).unwrap()[0] - b.eval(t).unwrap()[0]).abs() < 1e-14);
        }
    }

    #[test]
    fn box_smooth_averages_short_pieces() {
        // pulse of width 0.1 smoothed with δ = 0.5: peak is 0.1 / 1.0
        let s =
            InputSignal::piecewise_constant(vec![0.0, 0.1], vec![vec![0.0], vec![1.0], vec![0.0]])
                .unwrap();
        let b = box_smooth(&s, 0.5).unwrap();
        assert!((b.eval(0.05).unwrap()[0] - 0.1).abs() < 1e-15);
        assert!(b.sup_norm(-2.0, 2.0).unwrap() <= 1.0);
    }

    #[test]
    fn concat_and_sup_norms() {
        let c = InputSignal::constant(vec![0.4]);
        let cc = InputSignal::concat(c.clone(), c.clone(), 3.0);
        for t in [0.0, 2.9, 3.0, 10.0] {
            assert_eq!(cc.eval(t).unwrap(), vec![0.4]);
        }
        let z0 = 0.8;
        let tau = 1.5;
        let v = InputSignal::constant(vec![z0]);
        let w = InputSignal::exponential_tail(tau, vec![z0], 1.0);
        let u = InputSignal::concat(v, w, tau);
        assert_eq!(u.eval_left(tau).unwrap(), u.eval(tau).unwrap());
        assert_eq!(u.eval(tau).unwrap(), vec![z0]);

        assert_eq!(
            InputSignal::constant(vec![0.3]).sup_norm(0.0, 5.0).unwrap(),
            0.3
        );
        let tr = InputSignal::periodic_trapezoid(0.0, 1.0, 1.0, 0.25, 3).unwrap();
        assert_eq!(tr.sup_norm(0.0, 8.0).unwrap(), 1.0);
        let e = InputSignal::exponential_tail(0.0, vec![-2.0], 1.0);
        assert!((e.sup_norm(1.0, 2.0).unwrap() - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn ess_sup_ignores_single_points() {
        let pc =
            InputSignal::piecewise_constant(vec![1.0, 2.0], vec![vec![0.0], vec![5.0], vec![0.0]])
                .unwrap();
        assert_eq!(pc.sup_norm(2.0, 3.0).unwrap(), 0.0);
        assert_eq!(pc.sup_norm(0.0, 1.0).unwrap(), 0.0);
        assert_eq!(pc.sup_norm(0.0, 1.5).unwrap(), 5.0);
        let zo = InputSignal::zero_outside(InputSignal::constant(vec![2.0]), 0.0, 1.0);
        assert_eq!(zo.eval(1.0).unwrap(), vec![0.0]);
        assert_eq!(zo.eval_left(1.0).unwrap(), vec![2.0]);
        assert_eq!(zo.sup_norm(1.0, 4.0).unwrap(), 0.0);
        assert_eq!(zo.breakpoints(-1.0, 2.0), vec![0.0, 1.0]);
    }

    #[test]
    fn json_form_is_tagged() {
        let s = InputSignal::time_shift(square(), 0.5);
        let js = serde_json::to_string(&s).unwrap();
        assert!(js.contains("\"kind\":\"time_shift\""));
        let back: InputSignal = serde_json::from_str(&js).unwrap();
        assert_eq!(back, s);
    }
}
