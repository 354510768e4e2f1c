//! Echo state networks with designed chaotic itinerancy.
//!
//! The crate builds a two-part network (a contracting input network feeding
//! a sparse chaotic network), embeds per-symbol reproducible trajectories by
//! recursive-least-squares training of half the chaotic rows, fits linear
//! readouts, and closes the loop with a softmax classifier that chooses the
//! next symbol from the network state. The [`analysis`] module measures what
//! comes out: Lyapunov exponents, timer-task capacity, transition
//! statistics, spectral radius and terminal-symbol entropy.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod container;
pub mod dynamics;
pub mod error;
pub mod feedback;
pub mod innate;
pub mod linalg;
pub mod optim;
pub mod readout;
pub mod rng;
pub mod schedule;

pub use config::SimConfig;
pub use dynamics::{transient_envelope, BridgeConfig, BridgeReport, Network, State, Trajectory};
pub use error::{Error, Result};
pub use schedule::{make_periodic_schedule, sample_fsm_schedule, Fsm, SymbolId, SymbolSchedule};
