//! Sampling experiments on the planar system and its cascade: exponential
//! envelope fits, reach-time tables, the smoothing sweep that exposes
//! unbounded intermediate peaks, reachable-set lower bounds, decay audits
//! and the delay/nondelayed equivalence check.
//!
//! Every probe fans its independent runs out over rayon. Run `i` draws from
//! its own ChaCha8 stream derived from the master seed, and results are
//! combined with order-independent reductions, so output depends only on
//! the seed and options.

use thiserror::Error;

use crate::integrator::IntegrateError;
use crate::lyapunov::LyapunovError;
use crate::signal::SignalError;
use crate::systems::SystemError;

mod decay;
mod envelope;
mod equivalence;
mod reach;
mod reach_time;
mod rfc;
pub mod sampling;

pub use decay::{constant_input_slope, decay_audit, DecayAudit};
pub use envelope::{es_check, es_draw, EnvelopeFit, EnvelopeRun, EsConfig};
pub use equivalence::{equivalence_check, EquivalenceConfig, EquivalenceReport};
pub use reach::{estimate_r, estimate_r_sweep, ReachConfig, ReachEstimate, SystemKind};
pub use reach_time::{last_exit_time, uga_bound, uga_table, UgaCell, UgaConfig, UgaTable};
pub use rfc::{rfc_sweep, RfcConfig, RfcSweep};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbeError {
    #[error("run {index} for r = {r} still exceeds {eps} at t = {t} beyond the horizon {horizon}")]
    HorizonTooShort {
        index: usize,
        r: f64,
        eps: f64,
        t: f64,
        horizon: f64,
    },
    #[error("run {index} escaped at t = {t_escape} although its history is continuous")]
    UnexpectedEscape { index: usize, t_escape: f64 },
    #[error("no part of the trajectory satisfies the window condition |z(t - tau)| <= {bound}")]
    WindowInvalid { bound: f64 },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
}

pub(crate) fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<(), ProbeError> {
    if cond {
        Ok(())
    } else {
        Err(ProbeError::BadParameter(msg()))
    }
}
