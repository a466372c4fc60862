//! Continuous piecewise polynomials in the Dormand–Prince dense-output form.
//!
//! Each segment stores, per component, five coefficients `r1..r5` of
//!
//! ```text
//! y(θ) = r1 + θ (r2 + (1-θ) (r3 + θ (r4 + (1-θ) r5))),   θ = (t - origin) / h
//! ```
//!
//! With `r3 = r4 = r5 = 0` this is linear interpolation, with `r5 = 0` it is
//! cubic Hermite, and with all five it is the quartic continuous extension
//! of the Dormand–Prince pair. `origin` and `h` belong to the step that
//! produced the segment, so trimming a segment to a sub-window or shifting
//! time never re-expands the polynomial.

use serde::{Deserialize, Serialize};

pub const COEFFS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePoly {
    dim: usize,
    breaks: Vec<f64>,
    origins: Vec<f64>,
    widths: Vec<f64>,
    coeffs: Vec<f64>,
    first: Vec<f64>,
    last: Vec<f64>,
}

impl PiecewisePoly {
    /// Degenerate span `[t, t]` holding a single value.
    pub fn point(t: f64, value: Vec<f64>) -> Self {
        Self {
            dim: value.len(),
            breaks: vec![t],
            origins: Vec::new(),
            widths: Vec::new(),
            coeffs: Vec::new(),
            first: value.clone(),
            last: value,
        }
    }

    /// Continuous piecewise-linear interpolant through `(knots[i], values[i])`.
    ///
    /// Returns `None` unless knots are finite and strictly increasing and all
    /// values share one finite dimension.
    pub fn linear(knots: &[f64], values: &[Vec<f64>]) -> Option<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return None;
        }
        let dim = values[0].len();
        if values
            .iter()
            .any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite()))
            || knots.iter().any(|t| !t.is_finite())
            || knots.windows(2).any(|w| w[1] <= w[0])
        {
            return None;
        }
        let mut p = Self::point(knots[0], values[0].clone());
        let zeros = vec![0.0; dim];
        for i in 1..knots.len() {
            p.push_segment_to(
                knots[i],
                knots[i] - knots[i - 1],
                &values[i],
                [&zeros, &zeros, &zeros],
            );
        }
        Some(p)
    }

    /// Append a segment `[end(), t1]` with end value `y1` and higher
    /// coefficients `[r3, r4, r5]`, parameterized by `θ = (t - end()) / h`.
    ///
    /// `h` is normally `t1 - end()`; it is passed separately so a step that
    /// lands on a prescribed time keeps the exact width its coefficients
    /// were computed with.
    pub fn push_segment_to(&mut self, t1: f64, h: f64, y1: &[f64], higher: [&[f64]; 3]) {
        debug_assert_eq!(y1.len(), self.dim);
        debug_assert!(t1 > self.end());
        let t0 = self.end();
        self.origins.push(t0);
        self.widths.push(h);
        self.breaks.push(t1);
        let start = self.coeffs.len();
        self.coeffs.resize(start + COEFFS * self.dim, 0.0);
        let seg = &mut self.coeffs[start..];
        for c in 0..self.dim {
            seg[c] = self.last[c];
            seg[self.dim + c] = y1[c] - self.last[c];
            seg[2 * self.dim + c] = higher[0][c];
            seg[3 * self.dim + c] = higher[1][c];
            seg[4 * self.dim + c] = higher[2][c];
        }
        self.last.copy_from_slice(y1);
    }

    /// Append a segment of width `h` starting at the current end.
    pub fn push_segment(&mut self, h: f64, y1: &[f64], higher: [&[f64]; 3]) {
        let t1 = self.end() + h;
        self.push_segment_to(t1, h, y1, higher);
    }

    /// Append all segments of `other`, whose span must start where this one
    /// ends.
    pub fn append(&mut self, other: &PiecewisePoly) {
        assert_eq!(
            other.start(),
            self.end(),
            "appended span must be contiguous"
        );
        assert_eq!(other.dim, self.dim);
        self.breaks.extend_from_slice(&other.breaks[1..]);
        self.origins.extend_from_slice(&other.origins);
        self.widths.extend_from_slice(&other.widths);
        self.coeffs.extend_from_slice(&other.coeffs);
        if other.segment_count() > 0 {
            self.last.clone_from(&other.last);
        }
    }

    /// Drop every segment that starts at or after `t`.
    pub fn truncate_after(&mut self, t: f64) {
        let keep = self
            .origins
            .partition_point(|&o| o < t)
            .min(self.segment_count());
        if keep == self.segment_count() {
            return;
        }
        self.origins.truncate(keep);
        self.widths.truncate(keep);
        self.breaks.truncate(keep + 1);
        self.coeffs.truncate(keep * COEFFS * self.dim);
        let end = self.end();
        if keep == 0 {
            self.last.clone_from(&self.first);
        } else {
            let mut v = vec![0.0; self.dim];
            self.eval_segment(keep - 1, end, &mut v);
            self.last = v;
        }
    }

    /// Append a cubic Hermite segment from end value and end derivatives.
    pub fn push_hermite(&mut self, h: f64, y1: &[f64], f0: &[f64], f1: &[f64]) {
        let r2: Vec<f64> = y1.iter().zip(&self.last).map(|(a, b)| a - b).collect();
        let r3: Vec<f64> = f0.iter().zip(&r2).map(|(f, d)| h * f - d).collect();
        let r4: Vec<f64> = (0..self.dim).map(|c| r2[c] - h * f1[c] - r3[c]).collect();
        let zeros = vec![0.0; self.dim];
        self.push_segment(h, y1, [&r3, &r4, &zeros]);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn start(&self) -> f64 {
        self.breaks[0]
    }

    pub fn end(&self) -> f64 {
        *self.breaks.last().expect("breaks never empty")
    }

    pub fn segment_count(&self) -> usize {
        self.widths.len()
    }

    /// Segment boundaries including both ends.
    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn first_value(&self) -> &[f64] {
        &self.first
    }

    pub fn last_value(&self) -> &[f64] {
        &self.last
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start() && t <= self.end()
    }

    pub fn is_linear(&self) -> bool {
        self.coeffs
            .chunks(COEFFS * self.dim.max(1))
            .all(|seg| seg[2 * self.dim..].iter().all(|&c| c == 0.0))
    }

    fn segment_index(&self, t: f64) -> usize {
        let idx = self.breaks.partition_point(|&b| b <= t);
        idx.saturating_sub(1)
            .min(self.segment_count().saturating_sub(1))
    }

    /// Evaluate into `out`; returns `false` when `t` is outside the span.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> bool {
        if !self.contains(t) {
            return false;
        }
        if t == self.end() {
            out.copy_from_slice(&self.last);
            return true;
        }
        if t == self.start() {
            out.copy_from_slice(&self.first);
            return true;
        }
        let i = self.segment_index(t);
        self.eval_segment(i, t, out);
        true
    }

    pub fn eval(&self, t: f64) -> Option<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out).then_some(out)
    }

    fn eval_segment(&self, i: usize, t: f64, out: &mut [f64]) {
        let n = self.dim;
        let th = (t - self.origins[i]) / self.widths[i];
        let th1 = 1.0 - th;
        let seg = &self.coeffs[i * COEFFS * n..(i + 1) * COEFFS * n];
        for c in 0..n {
            out[c] = seg[c]
                + th * (seg[n + c]
                    + th1 * (seg[2 * n + c] + th * (seg[3 * n + c] + th1 * seg[4 * n + c])));
        }
    }

    /// Restriction to `[a, b]`, which must lie inside the span.
    pub fn window(&self, a: f64, b: f64) -> Option<Self> {
        if !(self.contains(a) && self.contains(b) && a <= b) {
            return None;
        }
        let first = self.eval(a)?;
        let last = self.eval(b)?;
        let mut out = Self::point(a, first);
        if a == b {
            return Some(out);
        }
        let n = self.dim;
        let lo = self.segment_index(a);
        let hi = self.segment_index(b);
        for i in lo..=hi {
            let seg_end = self.breaks[i + 1];
            if seg_end <= a {
                continue;
            }
            let end = seg_end.min(b);
            if end <= out.end() {
                continue;
            }
            out.origins.push(self.origins[i]);
            out.widths.push(self.widths[i]);
            out.breaks.push(end);
            out.coeffs
                .extend_from_slice(&self.coeffs[i * COEFFS * n..(i + 1) * COEFFS * n]);
        }
        out.last = last;
        Some(out)
    }

    /// Time translation: the returned `q` satisfies `q(t + dt) = self(t)`.
    pub fn shifted(&self, dt: f64) -> Self {
        let mut out = self.clone();
        out.breaks.iter_mut().for_each(|b| *b += dt);
        out.origins.iter_mut().for_each(|o| *o += dt);
        out
    }

    /// Interior segment boundaries, where derivatives may jump.
    pub fn interior_breaks(&self) -> &[f64] {
        let n = self.breaks.len();
        if n <= 2 {
            &[]
        } else {
            &self.breaks[1..n - 1]
        }
    }

    /// Componentwise bound on `|y|` over segment `i`: the sum of the
    /// absolute coefficients, since every basis factor lies in `[0, 1]`.
    pub fn segment_abs_bound(&self, i: usize, out: &mut [f64]) {
        let n = self.dim;
        let seg = &self.coeffs[i * COEFFS * n..(i + 1) * COEFFS * n];
        for (c, o) in out.iter_mut().enumerate() {
            *o = (0..COEFFS).map(|k| seg[k * n + c].abs()).sum();
        }
    }

    /// Times in `[a, b]` at which component `c` crosses `level`, segment
    /// by segment (see [`sign_changes`]).
    pub fn level_crossings(&self, c: usize, level: f64, a: f64, b: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let a = a.max(self.start());
        let b = b.min(self.end());
        if !(a < b) || self.segment_count() == 0 {
            return out;
        }
        let n = self.dim;
        let mut buf = vec![0.0; n];
        for i in self.segment_index(a)..=self.segment_index(b) {
            let s0 = self.breaks[i].max(a);
            let s1 = self.breaks[i + 1].min(b);
            if s1 <= s0 {
                continue;
            }
            let seg = &self.coeffs[i * COEFFS * n..(i + 1) * COEFFS * n];
            let linear = (2..COEFFS).all(|k| seg[k * n + c] == 0.0);
            let samples = if linear { 1 } else { 8 };
            sign_changes(
                s0,
                s1,
                samples,
                |t| {
                    self.eval_segment(i, t, &mut buf);
                    buf[c] - level
                },
                &mut out,
            );
        }
        out
    }

    /// Max of `|y(t)|_∞` over `[a, b] ∩ span`. Exact for linear segments;
    /// sampled and refined by golden-section search otherwise.
    pub fn sup_norm(&self, a: f64, b: f64) -> f64 {
        self.sup_of(a, b, inf_norm)
    }

    /// Max of `measure(y(t))` over `[a, b] ∩ span` for a measure that is
    /// convex along segments (any norm of any sub-vector). Exact when all
    /// segments are linear.
    pub fn sup_of(&self, a: f64, b: f64, measure: impl Fn(&[f64]) -> f64) -> f64 {
        let a = a.max(self.start());
        let b = b.min(self.end());
        if a > b {
            return 0.0;
        }
        let mut buf = vec![0.0; self.dim];
        let mut norm_at = |t: f64| {
            self.eval_into(t, &mut buf);
            measure(&buf)
        };
        let mut best = norm_at(a).max(norm_at(b));
        if a == b || self.segment_count() == 0 {
            return best;
        }
        let linear = self.is_linear();
        let lo = self.segment_index(a);
        let hi = self.segment_index(b);
        for i in lo..=hi {
            let s0 = self.breaks[i].max(a);
            let s1 = self.breaks[i + 1].min(b);
            if s1 <= s0 {
                continue;
            }
            best = best.max(norm_at(s0)).max(norm_at(s1));
            if linear {
                continue;
            }
            const SAMPLES: usize = 16;
            let dt = (s1 - s0) / SAMPLES as f64;
            let (mut arg, mut val) = (s0, norm_at(s0));
            for k in 1..=SAMPLES {
                let t = s0 + k as f64 * dt;
                let v = norm_at(t);
                if v > val {
                    (arg, val) = (t, v);
                }
            }
            let (mut x0, mut x1) = ((arg - dt).max(s0), (arg + dt).min(s1));
            let g = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..40 {
                let m0 = x1 - g * (x1 - x0);
                let m1 = x0 + g * (x1 - x0);
                if norm_at(m0) < norm_at(m1) {
                    x0 = m0;
                } else {
                    x1 = m1;
                }
            }
            best = best.max(val).max(norm_at(0.5 * (x0 + x1)));
        }
        best
    }
}

/// Points in `[a, b]` where `g` passes from strictly negative to strictly
/// positive or back. `samples` uniform subintervals are scanned and each
/// sign change is bisected to machine precision; zeros that do not
/// separate opposite signs, and non-finite values, are skipped.
pub fn sign_changes(
    a: f64,
    b: f64,
    samples: usize,
    mut g: impl FnMut(f64) -> f64,
    out: &mut Vec<f64>,
) {
    let samples = samples.max(1);
    let mut last: Option<(f64, bool)> = None;
    for i in 0..=samples {
        let t = if i == samples {
            b
        } else {
            a + (b - a) * i as f64 / samples as f64
        };
        let v = g(t);
        if v == 0.0 || !v.is_finite() {
            continue;
        }
        let neg = v < 0.0;
        if let Some((tl, neg_l)) = last {
            if neg != neg_l {
                let (mut lo, mut hi) = (tl, t);
                loop {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    let vm = g(mid);
                    if vm == 0.0 {
                        hi = mid;
                        break;
                    }
                    if (vm < 0.0) == neg_l {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                out.push(hi);
            }
        }
        last = Some((t, neg));
    }
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
