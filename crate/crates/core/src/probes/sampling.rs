//! Random histories and inputs drawn from the classes used by the probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::integrator::HistoryFn;
use crate::signal::InputSignal;

/// Most knots (histories) or pieces (inputs) in a random draw.
pub const MAX_PIECES: usize = 20;

/// Generator for draw `index` of the experiment seeded with `seed`.
pub fn draw_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn unit_vector_value(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Piecewise-linear history on `[-tau, 0]` with 2 to [`MAX_PIECES`] knots
/// and `‖φ‖ = |φ(0)| = norm`.
///
/// Knot values are uniform in `[-1, 1]ⁿ` and one component at `s = 0` is
/// set to `±1` before scaling, so the sup is attained at the present time.
pub fn random_history(rng: &mut ChaCha8Rng, dim: usize, tau: f64, norm: f64) -> HistoryFn {
    assert!(dim > 0 && tau > 0.0 && norm >= 0.0);
    let n = rng.random_range(2..=MAX_PIECES);
    let mut knots: Vec<f64> = (0..n - 2)
        .map(|_| -tau * rng.random::<f64>())
        .filter(|&k| k > -tau && k < 0.0)
        .collect();
    knots.push(-tau);
    knots.push(0.0);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut values: Vec<Vec<f64>> = knots.iter().map(|_| unit_vector_value(rng, dim)).collect();
    let c = rng.random_range(0..dim);
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    values.last_mut().expect("two knots")[c] = sign;
    for v in &mut values {
        for x in v.iter_mut() {
            *x *= norm;
        }
    }
    HistoryFn::linear(&knots, &values).expect("knots are strictly increasing")
}

/// Piecewise-constant input from `t = 0` with 1 to [`MAX_PIECES`] pieces of
/// `Exp(1)` length, values uniform in `[-radius, radius]ᵐ` and one entry
/// set to `±radius`.
pub fn random_piecewise_constant(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> InputSignal {
    if dim == 0 {
        return InputSignal::none();
    }
    let n = rng.random_range(1..=MAX_PIECES);
    let mut t = 0.0;
    let mut breakpoints = Vec::with_capacity(n - 1);
    for _ in 1..n {
        let len: f64 = Exp1.sample(rng);
        t += len.max(1e-6);
        breakpoints.push(t);
    }
    let mut values: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            unit_vector_value(rng, dim)
                .into_iter()
                .map(|x| x * radius)
                .collect()
        })
        .collect();
    let (p, c) = (rng.random_range(0..n), rng.random_range(0..dim));
    values[p][c] = if rng.random::<bool>() {
        radius
    } else {
        -radius
    };
    InputSignal::piecewise_constant(breakpoints, values).expect("valid schedule")
}

/// Continuous piecewise-linear input with knots from `t = 0`, gaps
/// `mean_gap · Exp(1)`, values uniform in `[-radius, radius]ᵐ`.
pub fn random_trapezoid(
    rng: &mut ChaCha8Rng,
    dim: usize,
    radius: f64,
    mean_gap: f64,
) -> InputSignal {
    let n = rng.random_range(2..=MAX_PIECES);
    let mut t = 0.0;
    let mut knots = vec![0.0];
    for _ in 1..n {
        let len: f64 = Exp1.sample(rng);
        t += mean_gap * len.max(1e-6);
        knots.push(t);
    }
    let values = knots
        .iter()
        .map(|_| {
            unit_vector_value(rng, dim)
                .into_iter()
                .map(|x| x * radius)
                .collect()
        })
        .collect();
    InputSignal::trapezoid_train(knots, values).expect("valid knots")
}
