use alloc::boxed::Box;
use alloc::string::String;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Invalid input: dimension mismatch, non-finite value, broken invariant.
    #[error("domain error: {0}")]
    Domain(String),
    /// The integrator produced a non-finite state.
    #[error("integration blew up at t = {time}")]
    Blowup { time: f64 },
    /// No Poincaré crossing was observed within the search budget.
    #[error("no limit-cycle crossing found within {budget} time units")]
    NoCycle { budget: f64 },
    /// Successive period estimates never agreed to the requested tolerance.
    #[error("period estimates did not converge (last two: {prev}, {last})")]
    NonConvergence { prev: f64, last: f64 },
    /// A per-sample optimization failed.
    #[error("sample {index}: {source}")]
    Sample { index: usize, source: Box<Error> },
    /// Strong coupling did not reach the tolerance within the time budget.
    #[error("synchronization not reached within {budget} time units")]
    PhaseOneTimeout { budget: f64 },
    /// The coupled network diverged while following the gain schedule.
    #[error("coupled state diverged at t = {time}")]
    Divergence { time: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
