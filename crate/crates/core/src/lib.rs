//! Throughput and energy efficiency of block-fading wireless links fed by
//! Markovian traffic under statistical queueing (QoS exponent) constraints.
//!
//! * [`sources`]: discrete Markov, Markov fluid and MMPP sources and their
//!   effective bandwidths.
//! * [`channel`]: Gauss-Markov block fading, service rates and effective
//!   capacity (closed form, quadrature, Monte Carlo).
//! * [`throughput`]: maximum average arrival rates and their low-theta and
//!   high-SNR behaviour.
//! * [`energy`]: minimum energy per bit and wideband slope.
//! * [`queuesim`]: queue simulator checking the exponential tail predictions.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod energy;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod quad;
pub mod queuesim;
pub mod rng;
pub mod sources;
mod special;
pub mod throughput;

pub use error::{Error, Result};
pub use exec::Execution;
