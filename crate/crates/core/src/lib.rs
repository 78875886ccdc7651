//! Two-phase synchronization of heterogeneous Van der Pol oscillator networks.
//!
//! Phase one couples all oscillators with a large static gain until they sit
//! on the limit cycle of the blended (node-averaged) dynamics. Phase two
//! replaces the static gain by an offline-optimized, periodic, edge-wise gain
//! schedule computed from linearizations along that cycle.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dynamics;
pub mod error;
pub mod gain_opt;
pub mod graph;
pub mod limit_cycle;
pub mod simulate;

pub use dynamics::{GlobalState, LocalState, OscillatorSet};
pub use error::{Error, Result};
pub use gain_opt::{GainSchedule, SolverOptions};
pub use graph::{CouplingGraph, EdgeGainSet};
pub use limit_cycle::{CycleAnchor, CycleSample};
