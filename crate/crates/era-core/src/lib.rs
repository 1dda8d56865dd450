//! Identification of discrete-time LTI state-space models from
//! impulse-response data (Markov parameters).
//!
//! The pipeline factorizes the block Hankel matrix of the Markov parameters
//! and recovers `(A, B, C, D)` from its truncated SVD. Three factorization
//! routes are provided:
//!
//! * dense full SVD (the reference path, size-capped),
//! * randomized truncated SVD over the materialized matrix,
//! * randomized truncated SVD over an implicit FFT-accelerated block-Hankel
//!   operator that never forms the matrix.
//!
//! For systems with many inputs/outputs, [`tera`] adds tangential
//! interpolation: Markov blocks are compressed through orthonormal
//! input/output projectors before identification, which shrinks the Hankel
//! factorization while preserving its block-Hankel structure.
//!
//! [`metrics`] collects the accuracy and stability diagnostics used to audit
//! an identification run: spectral variation and Hausdorff distance between
//! spectra, Markov reconstruction errors, canonical angles between singular
//! subspaces, an eigenvalue perturbation bound, and a stability margin test.
//! [`systems`] generates the synthetic test systems used throughout the test
//! suite and by the benchmark harness.

pub mod era;
pub mod error;
pub mod hankel;
pub mod metrics;
pub mod numeric;
pub mod rsvd;
pub mod systems;
pub mod tera;

pub use error::{CoreError, Result};
pub use numeric::{Matrix, Vector};
