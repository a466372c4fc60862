use serde::{Deserialize, Serialize};

use super::IntegrateError;
use crate::poly::{inf_norm, PiecewisePoly};

/// Initial history on `[-τ, 0]`: a continuous piecewise polynomial whose
/// span ends at zero. `τ = 0` (a single point) serves nondelayed systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PiecewisePoly", into = "PiecewisePoly")]
pub struct HistoryFn {
    poly: PiecewisePoly,
}

impl HistoryFn {
    pub fn constant(tau: f64, value: Vec<f64>) -> Result<Self, IntegrateError> {
        if !(tau >= 0.0 && tau.is_finite()) || value.iter().any(|v| !v.is_finite()) {
            return Err(IntegrateError::BadHistoryDomain {
                start: -tau,
                end: 0.0,
            });
        }
        if tau == 0.0 {
            return Ok(Self {
                poly: PiecewisePoly::point(0.0, value),
            });
        }
        let poly =
            PiecewisePoly::linear(&[-tau, 0.0], &[value.clone(), value]).expect("valid knots");
        Ok(Self { poly })
    }

    pub fn zeros(tau: f64, dim: usize) -> Result<Self, IntegrateError> {
        Self::constant(tau, vec![0.0; dim])
    }

    /// Linear interpolation through `(knots[i], values[i])`; the last knot
    /// must be `0`.
    pub fn linear(knots: &[f64], values: &[Vec<f64>]) -> Result<Self, IntegrateError> {
        let poly =
            PiecewisePoly::linear(knots, values).ok_or(IntegrateError::BadHistoryDomain {
                start: knots.first().copied().unwrap_or(f64::NAN),
                end: knots.last().copied().unwrap_or(f64::NAN),
            })?;
        Self::from_poly(poly)
    }

    pub fn from_poly(poly: PiecewisePoly) -> Result<Self, IntegrateError> {
        if poly.end() != 0.0 || !(poly.start() <= 0.0) {
            return Err(IntegrateError::BadHistoryDomain {
                start: poly.start(),
                end: poly.end(),
            });
        }
        Ok(Self { poly })
    }

    pub fn dim(&self) -> usize {
        self.poly.dim()
    }

    /// Length of the domain.
    pub fn tau(&self) -> f64 {
        -self.poly.start()
    }

    pub fn poly(&self) -> &PiecewisePoly {
        &self.poly
    }

    pub fn into_poly(self) -> PiecewisePoly {
        self.poly
    }

    pub fn is_linear(&self) -> bool {
        self.poly.is_linear()
    }

    /// Knot times strictly inside the domain.
    pub fn interior_knots(&self) -> &[f64] {
        self.poly.interior_breaks()
    }

    pub fn eval(&self, s: f64) -> Option<Vec<f64>> {
        self.poly.eval(s)
    }

    pub fn eval_into(&self, s: f64, out: &mut [f64]) -> bool {
        self.poly.eval_into(s, out)
    }

    pub fn value_at_zero(&self) -> &[f64] {
        self.poly.last_value()
    }

    /// `‖φ‖ = max |φ(s)|_∞` over the domain.
    pub fn norm(&self) -> f64 {
        self.poly.sup_norm(self.poly.start(), 0.0)
    }

    /// Sup norm of the components in `range`.
    pub fn norm_of(&self, range: std::ops::Range<usize>) -> f64 {
        self.poly
            .sup_of(self.poly.start(), 0.0, |v| inf_norm(&v[range.clone()]))
    }

    /// The same history restricted to its last `tau` seconds.
    pub fn restrict(&self, tau: f64) -> Result<Self, IntegrateError> {
        if tau > self.tau() {
            return Err(IntegrateError::SpanTooShort {
                needed: tau,
                available: self.tau(),
            });
        }
        if tau == 0.0 {
            return Ok(Self {
                poly: PiecewisePoly::point(0.0, self.value_at_zero().to_vec()),
            });
        }
        let poly = self.poly.window(-tau, 0.0).expect("window inside span");
        Ok(Self { poly })
    }
}

impl TryFrom<PiecewisePoly> for HistoryFn {
    type Error = IntegrateError;

    fn try_from(poly: PiecewisePoly) -> Result<Self, Self::Error> {
        Self::from_poly(poly)
    }
}

impl From<HistoryFn> for PiecewisePoly {
    fn from(h: HistoryFn) -> Self {
        h.poly
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_history_evaluates_everywhere() {
        let h = HistoryFn::constant(2.0, vec![1.0, -3.0]).unwrap();
        assert_eq!(h.tau(), 2.0);
        assert_eq!(h.eval(-1.3).unwrap(), vec![1.0, -3.0]);
        assert_eq!(h.norm(), 3.0);
        assert!(h.eval(-2.1).is_none());
    }

    #[test]
    fn linear_history_norm_is_max_knot() {
        let h = HistoryFn::linear(&[-1.0, -0.5, 0.0], &[vec![0.2], vec![-0.7], vec![0.1]]).unwrap();
        assert_eq!(h.norm(), 0.7);
        assert_eq!(h.interior_knots(), &[-0.5]);
    }

    #[test]
    fn domain_must_end_at_zero() {
        assert!(HistoryFn::linear(&[-1.0, -0.5], &[vec![0.0], vec![1.0]]).is_err());
    }

    #[test]
    fn restrict_keeps_tail() {
        let h = HistoryFn::linear(&[-2.0, 0.0], &[vec![2.0], vec![0.0]]).unwrap();
        let r = h.restrict(1.0).unwrap();
        assert_eq!(r.tau(), 1.0);
        assert!((r.eval(-1.0).unwrap()[0] - 1.0).abs() < 1e-15);
        assert!(h.restrict(3.0).is_err());
    }
}
