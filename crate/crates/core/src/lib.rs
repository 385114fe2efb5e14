//! Mesh-free neural solvers for the fourth-order biharmonic equation
//! `Δ²u = f(x, u, Δu)` under Dirichlet or Navier boundary conditions.
//!
//! The crate is `no_std` (with `alloc`) and contains only the pure numerical
//! pieces:
//!
//! * [`diffengine`]: exact propagation of input-derivative jets (up to fourth
//!   order) through expression graphs, with reverse-mode parameter gradients.
//! * [`network`]: fully connected networks with an optional Fourier feature
//!   first layer.
//! * [`problems`]: problem definitions and the benchmark registry.
//! * [`residuals`]: loss assembly for the direct, coupled and mixed strategies.
//! * [`sampling`]: Latin hypercube interior sampling, boundary sampling, test sets.
//! * [`training`]: Adam, learning-rate and penalty schedules, the training loop.
//! * [`metrics`]: relative L² errors.
//!
//! File formats, the CLI and experiment orchestration live in the `biharm` crate.
//!
//! ## Features
//!
//! * `std` (default): links the standard library into the dependencies.
//! * `parallel`: evaluates batch chunks on the rayon thread pool. The reduction
//!   order is fixed, so results do not depend on the number of threads.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod diffengine;
mod error;
pub(crate) mod math;
pub mod metrics;
pub mod network;
pub mod problems;
pub mod residuals;
mod rng;
pub mod sampling;
pub mod training;

pub use error::{Error, Result};
