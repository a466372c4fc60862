//! Numerical machinery for delay systems with inputs: a method-of-steps
//! integrator, piecewise input signals, planar Lyapunov certificates, the
//! switched planar system and its delayed cascade, and sampling probes for
//! stability and reachability properties.

pub mod integrator;
pub mod lyapunov;
pub mod poly;
pub mod probes;
pub mod signal;
pub mod systems;

pub use integrator::{
    integrate, residual_audit, DiscreteDelaySystem, Escape, EscapeCause, HistoryFn, IntegrateError,
    IntegratorOptions, Kink, KinkSource, SimOutcome, Trajectory,
};
pub use lyapunov::{
    certify, LyapunovCert, LyapunovError, Mat2, MatrixPencil, StabilityConstants, SymPosDef2,
};
pub use poly::PiecewisePoly;
pub use probes::ProbeError;
pub use signal::{InputSignal, SignalError};
pub use systems::{PlanarParams, SystemError};
