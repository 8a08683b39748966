//! Simulation and statistical verification toolkit for the stochastic Burgers
//! equation driven by a Hermite sheet of order `q`.
//!
//! The crate is organized bottom-up:
//!
//! * [`kernels`]: closed-form kernels, the sheet covariance and parameter validation.
//! * [`noise`]: white noise and Hermite-sheet samplers (exact Gaussian for `q = 1`,
//!   a kernel-discretization sampler and a noncentral-limit sampler for any `q`),
//!   plus the binary/CSV field formats.
//! * [`stochint`]: the weighted inner product of the noise Hilbert space, discrete
//!   stochastic integrals and the heat-kernel integral `I(t)`.
//! * [`solver`]: the mild-form solver on a periodic 1-D domain (Picard iteration and
//!   exponential-Euler stepping) and the Cole-Hopf reference solution.
//! * [`analysis`]: ensemble moments, Hölder exponent fits and scaling tests.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod kernels;
pub mod noise;
pub mod solver;
pub mod stochint;
mod quad;
mod tensor;

pub use error::{Error, Result};
pub use kernels::{HermiteParams, SigmaSpec, ValidationReport};
pub use noise::{FieldKind, FieldSample, GridSpec, SamplerSpec, SeedSpec};
