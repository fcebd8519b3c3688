//! Approximation of causal, time-invariant i/o maps with approximately finite
//! memory by ReLU temporal convolutional nets.
//!
//! The crate is split along the lines of the underlying theory:
//!
//! - [`seqcore`]: finite-horizon sequences with zero extension and the
//!   shift/window operators.
//! - [`iomap`]: the i/o map abstraction, causality and time-invariance checks,
//!   and sampled estimators for memory horizons and moduli of continuity.
//! - [`statespace`]: recurrent realizations, flows, incremental-stability
//!   functions and the memory/modulus bound calculators.
//! - [`stability`]: Demidovich certificates, Lyapunov checks, H-infinity norms,
//!   the bounded-real equations and the Lur'e certification pipeline.
//! - [`tcn`]: ReLU nets, TCN models, fitting, filter truncation and the
//!   Volterra comparison.
//!
//! Every sampled estimator is a lower bound on the supremum it targets and is
//! labelled as such in its report.

// `!(x > 0.0)` style guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod iomap;
pub mod rng;
pub mod seqcore;
pub mod stability;
pub mod statespace;
pub mod tcn;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use iomap::IoMap;
pub use seqcore::{InputBall, Sequence};
