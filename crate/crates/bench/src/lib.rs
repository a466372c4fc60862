//! Fixtures shared by the benchmarks.

use escapade_core::lyapunov::DEFAULT_MARGIN;
use escapade_core::systems::{
    default_cascade_delay, greedy_with_dwell, run_switching, DEFAULT_DWELL,
};
use escapade_core::{certify, IntegratorOptions, LyapunovCert, PlanarParams};

pub fn options() -> IntegratorOptions {
    IntegratorOptions::default().with_tolerances(1e-10, 1e-10)
}

pub fn certificate(params: &PlanarParams) -> LyapunovCert {
    certify(&params.pencil(), DEFAULT_MARGIN).expect("default pencil certifies")
}

/// Cascade delay derived from the greedy escape time from `(0, 1)`.
pub fn cascade_delay(params: &PlanarParams) -> f64 {
    let policy = greedy_with_dwell(params, DEFAULT_DWELL).expect("valid dwell");
    let run = run_switching(params, &policy, [0.0, 1.0], 20.0, &options()).expect("greedy run");
    default_cascade_delay(run.t_escape.expect("greedy run escapes"))
}
