//! Planar matrix algebra and Lyapunov certificates.
//!
//! Everything here is closed form: 2x2 matrices, the planar Hurwitz test,
//! the Lyapunov equation `AᵀP + PA = -I` solved as a 3x3 linear system in
//! the symmetric unknowns, and the constants that drive the exponential
//! envelope and the reach-time bound of the cascade system.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LyapunovError {
    #[error("matrix entries must be finite")]
    NonFinite,
    #[error("matrix is not Hurwitz (trace {trace}, det {det})")]
    NotHurwitz { trace: f64, det: f64 },
    #[error("Lyapunov linear system is numerically singular (det {det:e})")]
    SingularSystem { det: f64 },
    #[error("lambda = 0 violates the decay margin {margin} (min eigenvalue {min_eig})")]
    NoFeasibleLambda { margin: f64, min_eig: f64 },
    #[error(
        "feasible set of the decay margin is not an interval starting at 0 (grid point {lambda})"
    )]
    NonMonotoneConstraint { lambda: f64 },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
}

/// Dense 2x2 real matrix, row major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2::new(1.0, 0.0, 0.0, 1.0);

    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Self { a11, a12, a21, a22 }
    }

    /// Like [`Mat2::new`] but rejects NaN and infinite entries.
    pub fn try_new(a11: f64, a12: f64, a21: f64, a22: f64) -> Result<Self, LyapunovError> {
        let m = Self::new(a11, a12, a21, a22);
        if m.is_finite() {
            Ok(m)
        } else {
            Err(LyapunovError::NonFinite)
        }
    }

    pub fn from_rows(rows: [[f64; 2]; 2]) -> Self {
        Self::new(rows[0][0], rows[0][1], rows[1][0], rows[1][1])
    }

    pub fn rows(&self) -> [[f64; 2]; 2] {
        [[self.a11, self.a12], [self.a21, self.a22]]
    }

    pub fn is_finite(&self) -> bool {
        self.a11.is_finite() && self.a12.is_finite() && self.a21.is_finite() && self.a22.is_finite()
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.a11, self.a21, self.a12, self.a22)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(s * self.a11, s * self.a12, s * self.a21, s * self.a22)
    }

    pub fn add(&self, o: &Mat2) -> Self {
        Self::new(
            self.a11 + o.a11,
            self.a12 + o.a12,
            self.a21 + o.a21,
            self.a22 + o.a22,
        )
    }

    pub fn mul(&self, o: &Mat2) -> Self {
        Self::new(
            self.a11 * o.a11 + self.a12 * o.a21,
            self.a11 * o.a12 + self.a12 * o.a22,
            self.a21 * o.a11 + self.a22 * o.a21,
            self.a21 * o.a12 + self.a22 * o.a22,
        )
    }

    pub fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        [
            self.a11 * x[0] + self.a12 * x[1],
            self.a21 * x[0] + self.a22 * x[1],
        ]
    }

    /// `xᵀ M x`.
    pub fn quad_form(&self, x: [f64; 2]) -> f64 {
        let y = self.apply(x);
        x[0] * y[0] + x[1] * y[1]
    }

    pub fn max_abs(&self) -> f64 {
        self.a11
            .abs()
            .max(self.a12.abs())
            .max(self.a21.abs())
            .max(self.a22.abs())
    }

    /// Symmetric part `(M + Mᵀ)/2` as a [`Sym2`].
    pub fn sym_part(&self) -> Sym2 {
        Sym2::new(self.a11, 0.5 * (self.a12 + self.a21), self.a22)
    }
}

/// Symmetric 2x2 matrix `[[s11, s12], [s12, s22]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    pub s11: f64,
    pub s12: f64,
    pub s22: f64,
}

impl Sym2 {
    pub const fn new(s11: f64, s12: f64, s22: f64) -> Self {
        Self { s11, s12, s22 }
    }

    pub fn to_mat(&self) -> Mat2 {
        Mat2::new(self.s11, self.s12, self.s12, self.s22)
    }

    /// Eigenvalues `(min, max)` from the quadratic formula.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.s11 + self.s22);
        let radius = (0.5 * (self.s11 - self.s22)).hypot(self.s12);
        (mean - radius, mean + radius)
    }

    pub fn quad_form(&self, x: [f64; 2]) -> f64 {
        self.s11 * x[0] * x[0] + 2.0 * self.s12 * x[0] * x[1] + self.s22 * x[1] * x[1]
    }
}

/// Symmetric positive definite `P` together with its extreme eigenvalues,
/// so that `c1 |x|² <= xᵀPx <= c2 |x|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymPosDef2 {
    pub p11: f64,
    pub p12: f64,
    pub p22: f64,
    pub c1: f64,
    pub c2: f64,
}

impl SymPosDef2 {
    pub fn from_sym(s: Sym2) -> Result<Self, LyapunovError> {
        let (c1, c2) = s.eigenvalues();
        if !(s.s11 > 0.0 && s.s11 * s.s22 - s.s12 * s.s12 > 0.0 && c1 > 0.0) {
            return Err(LyapunovError::NotPositiveDefinite);
        }
        Ok(Self {
            p11: s.s11,
            p12: s.s12,
            p22: s.s22,
            c1,
            c2,
        })
    }

    pub fn sym(&self) -> Sym2 {
        Sym2::new(self.p11, self.p12, self.p22)
    }

    pub fn to_mat(&self) -> Mat2 {
        self.sym().to_mat()
    }

    /// `W(x) = xᵀPx`.
    pub fn quad_form(&self, x: [f64; 2]) -> f64 {
        self.sym().quad_form(x)
    }
}

/// Convex pencil `A(λ) = λ A1 + (1 - λ) A2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixPencil {
    pub a1: Mat2,
    pub a2: Mat2,
}

impl MatrixPencil {
    pub fn new(a1: Mat2, a2: Mat2) -> Self {
        Self { a1, a2 }
    }

    pub fn at(&self, lambda: f64) -> Mat2 {
        self.a1.scale(lambda).add(&self.a2.scale(1.0 - lambda))
    }
}

/// Exact planar criterion: both eigenvalues in the open left half plane iff
/// the trace is negative and the determinant positive.
pub fn is_hurwitz(a: &Mat2) -> bool {
    a.trace() < 0.0 && a.det() > 0.0
}

/// `AᵀP + PA`, for `P` symmetric.
pub fn lyapunov_operator(a: &Mat2, p: &Sym2) -> Sym2 {
    let pm = p.to_mat();
    let m = a.transpose().mul(&pm).add(&pm.mul(a));
    // exactly symmetric up to rounding; average the off-diagonal
    m.sym_part()
}

/// Max-norm of `AᵀP + PA + I`.
pub fn lyapunov_residual(a: &Mat2, p: &SymPosDef2) -> f64 {
    let r = lyapunov_operator(a, &p.sym());
    (r.s11 + 1.0)
        .abs()
        .max(r.s12.abs())
        .max((r.s22 + 1.0).abs())
}

/// Solve `AᵀP + PA = -I` for a Hurwitz `A`.
///
/// With `A = [[a, b], [c, d]]` the symmetric unknowns satisfy
///
/// ```text
/// [ 2a   2c    0 ] [p11]   [-1]
/// [  b  a+d    c ] [p12] = [ 0]
/// [  0   2b   2d ] [p22]   [-1]
/// ```
///
/// whose determinant is `4 tr(A) det(A)`.
pub fn solve_lyapunov(a: &Mat2) -> Result<SymPosDef2, LyapunovError> {
    if !a.is_finite() {
        return Err(LyapunovError::NonFinite);
    }
    if !is_hurwitz(a) {
        return Err(LyapunovError::NotHurwitz {
            trace: a.trace(),
            det: a.det(),
        });
    }
    let (ea, eb, ec, ed) = (a.a11, a.a12, a.a21, a.a22);
    let m = [
        [2.0 * ea, 2.0 * ec, 0.0],
        [eb, ea + ed, ec],
        [0.0, 2.0 * eb, 2.0 * ed],
    ];
    let rhs = [-1.0, 0.0, -1.0];
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    let det = 4.0 * a.trace() * a.det();
    if det.abs() <= 1e-14 * scale.powi(3) {
        return Err(LyapunovError::SingularSystem { det });
    }
    let p = solve3(m, rhs).ok_or(LyapunovError::SingularSystem { det })?;
    let sym = Sym2::new(p[0], p[1], p[2]);
    // one step of iterative refinement keeps the residual at rounding level
    let r = lyapunov_operator(a, &sym);
    let corr = solve3(m, [-1.0 - r.s11, -r.s12, -1.0 - r.s22])
        .ok_or(LyapunovError::SingularSystem { det })?;
    let refined = Sym2::new(p[0] + corr[0], p[1] + corr[1], p[2] + corr[2]);
    SymPosDef2::from_sym(refined)
}

/// Gaussian elimination with partial pivoting on a 3x3 system.
fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap_or(col);
        if m[pivot][col] == 0.0 {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            let top = m[col];
            for (v, t) in m[row].iter_mut().zip(top).skip(col) {
                *v -= f * t;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for k in row + 1..3 {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Smallest eigenvalue of `-(A(λ)ᵀP + P A(λ))`.
pub fn decay_margin(pencil: &MatrixPencil, p: &SymPosDef2, lambda: f64) -> f64 {
    let m = lyapunov_operator(&pencil.at(lambda), &p.sym());
    Sym2::new(-m.s11, -m.s12, -m.s22).eigenvalues().0
}

/// Number of grid intervals used to check that the feasible set of the
/// margin constraint is an interval `[0, Λ]`.
pub const LAMBDA_GRID: usize = 1000;
/// Absolute bisection tolerance for Λ.
pub const LAMBDA_TOL: f64 = 1e-9;

/// Largest `Λ ∈ (0, 1]` such that `A(λ)ᵀP₀ + P₀A(λ) <= -margin·I` for all
/// `λ ∈ [0, Λ]`.
///
/// The constraint is scanned on a grid first; every infeasible grid point
/// must lie after every feasible one, otherwise the search is refused. The
/// boundary is then bisected to [`LAMBDA_TOL`]. Returns 1 when the whole
/// unit interval is feasible.
pub fn find_capital_lambda(
    pencil: &MatrixPencil,
    p0: &SymPosDef2,
    margin: f64,
) -> Result<f64, LyapunovError> {
    let feasible = |l: f64| decay_margin(pencil, p0, l) >= margin;
    let at_zero = decay_margin(pencil, p0, 0.0);
    if at_zero < margin {
        return Err(LyapunovError::NoFeasibleLambda {
            margin,
            min_eig: at_zero,
        });
    }
    let mut first_bad: Option<usize> = None;
    for i in 1..=LAMBDA_GRID {
        let l = i as f64 / LAMBDA_GRID as f64;
        match (feasible(l), first_bad) {
            (false, None) => first_bad = Some(i),
            (true, Some(_)) => return Err(LyapunovError::NonMonotoneConstraint { lambda: l }),
            _ => {}
        }
    }
    let Some(bad) = first_bad else {
        return Ok(1.0);
    };
    let mut lo = (bad - 1) as f64 / LAMBDA_GRID as f64;
    let mut hi = bad as f64 / LAMBDA_GRID as f64;
    while hi - lo > LAMBDA_TOL {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Constants of the exponential envelope `|x(t)| <= k‖φ‖e^{-pt}` valid for
/// histories of norm at most Λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityConstants {
    pub capital_lambda: f64,
    pub k: f64,
    pub p: f64,
    pub c1: f64,
    pub c2: f64,
}

/// `k = sqrt(2 c2 / c1)`.
pub fn envelope_gain(c1: f64, c2: f64) -> f64 {
    (2.0 * c2 / c1).sqrt()
}

/// `p = min(1, 1 / (4 c2))`.
pub fn envelope_rate(c2: f64) -> f64 {
    (1.0 / (4.0 * c2)).min(1.0)
}

pub fn stability_constants(
    pencil: &MatrixPencil,
    p0: &SymPosDef2,
    margin: f64,
) -> Result<StabilityConstants, LyapunovError> {
    let capital_lambda = find_capital_lambda(pencil, p0, margin)?;
    Ok(StabilityConstants {
        capital_lambda,
        k: envelope_gain(p0.c1, p0.c2),
        p: envelope_rate(p0.c2),
        c1: p0.c1,
        c2: p0.c2,
    })
}

/// `P₀` for `A(0)` together with the constants derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCert {
    pub p0: SymPosDef2,
    pub constants: StabilityConstants,
    pub margin: f64,
}

impl LyapunovCert {
    pub fn capital_lambda(&self) -> f64 {
        self.constants.capital_lambda
    }

    /// `W(x) = xᵀP₀x`.
    pub fn w(&self, x: [f64; 2]) -> f64 {
        self.p0.quad_form(x)
    }
}

pub fn certify(pencil: &MatrixPencil, margin: f64) -> Result<LyapunovCert, LyapunovError> {
    let p0 = solve_lyapunov(&pencil.at(0.0))?;
    let constants = stability_constants(pencil, &p0, margin)?;
    Ok(LyapunovCert {
        p0,
        constants,
        margin,
    })
}

/// Default margin `m` in `A(λ)ᵀP₀ + P₀A(λ) <= -m·I`.
pub const DEFAULT_MARGIN: f64 = 0.5;

#[cfg(test)]
mod tests {
    use super::*;

    const A1: Mat2 = Mat2::new(0.0, 2.0, -0.5, -0.1);
    const A2: Mat2 = Mat2::new(-0.1, 0.5, -2.0, 0.0);

    /// Independent route: vectorize `AᵀP + PA = -I` with Kronecker products
    /// into a 4x4 system over all entries of `P` (symmetry not assumed).
    fn kron_oracle(a: &Mat2) -> [f64; 4] {
        let at = a.transpose().rows();
        // vec(AᵀP + PA) = (I ⊗ Aᵀ + Aᵀ ⊗ I) vec(P), column-major vec
        let mut m = [[0.0; 5]; 4];
        for i in 0..2 {
            for j in 0..2 {
                let row = j * 2 + i;
                for k in 0..2 {
                    // (AᵀP)_{ij} = Σ_k Aᵀ_{ik} P_{kj}
                    m[row][j * 2 + k] += at[i][k];
                    // (PA)_{ij} = Σ_k P_{ik} A_{kj} = Σ_k P_{ik} Aᵀ_{jk}
                    m[row][k * 2 + i] += at[j][k];
                }
                m[row][4] = if i == j { -1.0 } else { 0.0 };
            }
        }
        for c in 0..4 {
            let piv = (c..4)
                .max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs()))
                .unwrap();
            m.swap(c, piv);
            for r in 0..4 {
                if r != c {
                    let f = m[r][c] / m[c][c];
                    let top = m[c];
                    for (v, t) in m[r].iter_mut().zip(top).skip(c) {
                        *v -= f * t;
                    }
                }
            }
        }
        [
            m[0][4] / m[0][0],
            m[1][4] / m[1][1],
            m[2][4] / m[2][2],
            m[3][4] / m[3][3],
        ]
    }

    #[test]
    fn hurwitz_examples() {
        assert!(is_hurwitz(&A1));
        assert_eq!(A1.trace(), -0.1);
        assert_eq!(A1.det(), 1.0);
        assert!(!is_hurwitz(&Mat2::IDENTITY));
        assert!(is_hurwitz(&Mat2::IDENTITY.scale(-1.0)));
    }

    #[test]
    fn minus_identity_gives_half_identity() {
        let p = solve_lyapunov(&Mat2::IDENTITY.scale(-1.0)).unwrap();
        assert_eq!((p.p11, p.p12, p.p22), (0.5, 0.0, 0.5));
        assert_eq!((p.c1, p.c2), (0.5, 0.5));
    }

    #[test]
    fn a2_matches_kronecker_oracle() {
        let p = solve_lyapunov(&A2).unwrap();
        let o = kron_oracle(&A2);
        // column-major: [p11, p21, p12, p22]
        assert!((p.p11 - o[0]).abs() < 1e-12);
        assert!((p.p12 - o[1]).abs() < 1e-12 && (p.p12 - o[2]).abs() < 1e-12);
        assert!((p.p22 - o[3]).abs() < 1e-12);
        assert!(lyapunov_residual(&A2, &p) <= 1e-12);
        // hand solution for A2: p11 = 25, p12 = -1, p22 = 6.3
        assert!((p.p11 - 25.0).abs() < 1e-12 && (p.p12 + 1.0).abs() < 1e-12);
        assert!((p.p22 - 6.3).abs() < 1e-12);
    }

    #[test]
    fn midpoint_pencil_is_positive_definite() {
        let pencil = MatrixPencil::new(A1, A2);
        let a = pencil.at(0.5);
        assert_eq!(a, Mat2::new(-0.05, 1.25, -1.25, -0.05));
        let p = solve_lyapunov(&a).unwrap();
        let o = kron_oracle(&a);
        assert!((p.p11 - o[0]).abs() < 1e-12 && (p.p22 - o[3]).abs() < 1e-12);
        assert!(p.c1 > 0.0 && lyapunov_residual(&a, &p) <= 1e-12);
    }

    #[test]
    fn rejects_non_hurwitz_and_singular() {
        assert!(matches!(
            solve_lyapunov(&Mat2::IDENTITY),
            Err(LyapunovError::NotHurwitz { .. })
        ));
        // trace 0: purely oscillatory, the 3x3 system is singular but the
        // Hurwitz test fires first
        assert!(solve_lyapunov(&Mat2::new(0.0, 1.0, -1.0, 0.0)).is_err());
        assert!(matches!(
            solve_lyapunov(&Mat2::new(f64::NAN, 0.0, 0.0, -1.0)),
            Err(LyapunovError::NonFinite)
        ));
    }

    #[test]
    fn capital_lambda_brackets_the_margin() {
        let pencil = MatrixPencil::new(A1, A2);
        let p0 = solve_lyapunov(&pencil.at(0.0)).unwrap();
        assert!((decay_margin(&pencil, &p0, 0.0) - 1.0).abs() < 1e-12);
        let lam = find_capital_lambda(&pencil, &p0, 0.5).unwrap();
        assert!(lam > 0.0 && lam < 1.0);
        assert!(decay_margin(&pencil, &p0, lam - 1e-9) >= 0.5);
        assert!(decay_margin(&pencil, &p0, lam + 1e-6) < 0.5);
        // brute-force grid oracle
        let grid = (0..=100_000)
            .map(|i| i as f64 * 1e-5)
            .take_while(|&l| decay_margin(&pencil, &p0, l) >= 0.5)
            .last()
            .unwrap();
        assert!((grid - lam).abs() < 1e-3);
    }

    #[test]
    fn constants_from_formula() {
        assert_eq!(envelope_gain(0.5, 0.5), 2f64.sqrt());
        assert_eq!(envelope_rate(0.5), 0.5);
        assert_eq!(envelope_gain(1.0, 4.0), 8f64.sqrt());
        assert_eq!(envelope_rate(4.0), 1.0 / 16.0);
    }

    #[test]
    fn constants_match_eigen_rederivation() {
        let pencil = MatrixPencil::new(A1, A2);
        let p0 = solve_lyapunov(&pencil.at(0.0)).unwrap();
        let c = stability_constants(&pencil, &p0, 0.5).unwrap();
        // eigenvalues of [[25,-1],[-1,6.3]] from the characteristic polynomial
        let (tr, det): (f64, f64) = (25.0 + 6.3, 25.0 * 6.3 - 1.0);
        let disc = ((tr * tr) - 4.0 * det).sqrt();
        let (e1, e2) = ((tr - disc) / 2.0, (tr + disc) / 2.0);
        assert!((c.c1 - e1).abs() < 1e-12 && (c.c2 - e2).abs() < 1e-12);
        assert!((c.k - (2.0 * e2 / e1).sqrt()).abs() < 1e-12);
        assert!((c.p - 1.0 / (4.0 * e2)).abs() < 1e-15);
    }
}
