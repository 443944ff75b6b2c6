//! Truncated vertical federated learning for cooperative spectrum sensing.
//!
//! A split neural network is trained across `K` secondary users (SUs) and
//! a server. Each round, SUs whose small-scale fading falls below an aligned
//! truncation threshold stay silent and the server reuses their latest
//! uploaded activations. The crate covers dataset synthesis, the split
//! network, the uplink channel, the training loop, and the latency and
//! convergence calculators used to reason about the scheduling trade-off.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod nn;
pub mod scenario;
pub mod trainer;

pub use error::{Error, Result};
pub use linalg::Matrix;
