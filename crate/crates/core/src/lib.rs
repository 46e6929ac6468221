//! Straggler mitigation for distributed gradient descent.
//!
//! The crate models a master node and `n` workers that each hold a subset of
//! the training data. Workers compute partial gradients, encode them into a
//! message, and the master decodes the full gradient once it has heard from
//! enough workers. The centerpiece is the batched coupon's collector (BCC)
//! scheme: data is cut into `⌈m/r⌉` batches, every worker picks one batch
//! uniformly at random and sends the sum of its partial gradients, and the
//! master stops as soon as every batch has been seen once.
//!
//! Modules:
//!
//! - [`data`]: synthetic logistic-regression data and batch partitioning.
//! - [`schemes`]: placement, encoding, completion and decoding for the
//!   uncoded, simple randomized, cyclic repetition, BCC and generalized BCC
//!   schemes.
//! - [`latency`]: shift-exponential worker latency.
//! - [`sim`]: discrete-event iteration simulator and Monte-Carlo harness.
//! - [`analysis`]: closed-form thresholds and bounds.
//! - [`hetero`]: heterogeneous clusters, load optimization and coverage-time
//!   bounds.
//! - [`train`]: logistic regression with Nesterov's method driven through any
//!   scheme.
//!
//! Index sets are 0-based in the API; CSV exports use 1-based worker and unit
//! ids.

pub mod analysis;
pub mod data;
mod error;
pub mod hetero;
pub mod latency;
pub mod rng;
pub mod schemes;
pub mod sim;
pub mod stats;
pub mod train;

pub use error::{Error, Result};
