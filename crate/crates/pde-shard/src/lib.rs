//! Domain-decomposed learned surrogates for 2-D linearized Euler acoustics.
//!
//! The grid is split into rectangular subdomains, and each one gets its own
//! small convolutional network trained purely on local data: training is
//! embarrassingly parallel and provably communication-free. Ranks talk only
//! during rollout inference, exchanging halo strips with their eight
//! neighbors once per predicted step, exactly like a stencil solver.
//!
//! Module map:
//! - [`euler`]: finite-volume reference solver that manufactures truth data
//! - [`field`]: dense tensors, snapshots, and the dataset file format
//! - [`partition`]: grid decomposition, halo geometry, scatter/gather
//! - [`neural`]: convolution stack, loss, optimizer, checkpoints
//! - [`pool`]: deterministic scoped-thread worker pool
//! - [`exchange`]: instrumented point-to-point halo messaging
//! - [`train`]: per-rank independent training
//! - [`infer`]: bulk-synchronous parallel rollout and evaluation
//! - [`bench`]: strong-scaling runs and the manifest experiment driver

pub mod bench;
pub mod error;
pub mod euler;
pub mod exchange;
pub mod field;
pub mod infer;
pub mod neural;
pub mod partition;
pub mod pool;
pub mod train;

pub use error::{Error, Result};
