//! Weak-coupling-limit machinery on finite-dimensional models.
//!
//! A global system is split by an orthogonal coordinate projector `P0` into an
//! observed block and an environment block. The free dynamics is generated by a
//! diagonal skew-Hermitian `Z`, perturbed by a skew-Hermitian `A` with coupling
//! constant `lambda`. The crate provides
//!
//! * the exact projected evolution `P0 exp((Z + lambda A) t) P0` and its
//!   memory-kernel (Volterra) representation,
//! * the Gaussian-damped family of Markov generators `K(alpha, q, T)`, the
//!   Davies generator, the dynamically time-averaged generator `K_T` in three
//!   quadrature routes and its spectral average,
//! * the dissipative/conservative split of `K_T` on the full space,
//! * convergence sweeps, contraction scans and resolvent checks.
//!
//! Every operator is a dense complex matrix and norms are spectral norms.

pub mod analysis;
pub mod error;
pub mod generators;
pub mod io;
pub mod kernels;
pub mod model;
pub mod opalg;
pub mod propagate;
pub mod quadrature;

pub use error::{Error, Result};
pub use opalg::{Operator, C64};
