use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DiscreteDelaySystem, IntegrateError, Rhs, Trajectory};
use crate::signal::InputSignal;

const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

const DEFAULT_SEED: u64 = 0x5eed_a0d1;

/// Gauss–Legendre integral of the right-hand side along `traj` over
/// `[a, b]`, added into `acc`. The interval must not contain a step
/// boundary, so every node sees a smooth integrand.
fn integrate_rhs(
    rhs: &mut Rhs,
    traj: &Trajectory,
    a: f64,
    b: f64,
    x: &mut [f64],
    f: &mut [f64],
    acc: &mut [f64],
) -> Result<(), IntegrateError> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    for (node, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
        let s = mid + half * node;
        traj.eval_into(s, x);
        rhs.eval(traj.poly(), s, x, false, f)?;
        for (acc_c, f_c) in acc.iter_mut().zip(f.iter()) {
            *acc_c += half * w * f_c;
        }
    }
    Ok(())
}

/// `max |x(t) - x(0) - ∫_0^t f(x_s, u(s)) ds|_∞` over `samples` uniformly
/// random times in `(0, end]`, with a fixed seed.
pub fn residual_audit(
    traj: &Trajectory,
    sys: &DiscreteDelaySystem,
    u: &InputSignal,
    samples: usize,
) -> Result<f64, IntegrateError> {
    residual_audit_seeded(traj, sys, u, samples, DEFAULT_SEED)
}

pub fn residual_audit_seeded(
    traj: &Trajectory,
    sys: &DiscreteDelaySystem,
    u: &InputSignal,
    samples: usize,
    seed: u64,
) -> Result<f64, IntegrateError> {
    let n = sys.dim();
    let steps = traj.step_times();
    if steps.len() < 2 || samples == 0 {
        return Ok(0.0);
    }
    let mut rhs = Rhs::new(sys, u);
    let (mut x, mut f) = (vec![0.0; n], vec![0.0; n]);

    // Integral from 0 to each step boundary.
    let mut cumulative = vec![vec![0.0; n]];
    let mut acc = vec![0.0; n];
    for w in steps.windows(2) {
        integrate_rhs(&mut rhs, traj, w[0], w[1], &mut x, &mut f, &mut acc)?;
        cumulative.push(acc.clone());
    }

    let x0 = traj.initial_value();
    let end = traj.end();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut xt = vec![0.0; n];
    for _ in 0..samples {
        let t = end * (1.0 - rng.random::<f64>());
        let i = steps
            .partition_point(|&b| b <= t)
            .saturating_sub(1)
            .min(steps.len() - 2);
        acc.clone_from(&cumulative[i]);
        if t > steps[i] {
            integrate_rhs(&mut rhs, traj, steps[i], t, &mut x, &mut f, &mut acc)?;
        }
        traj.eval_into(t, &mut xt);
        for c in 0..n {
            worst = worst.max((xt[c] - x0[c] - acc[c]).abs());
        }
    }
    Ok(worst)
}
