//! Robust recovery of single-index models `y = f(xᵀβ*) + ζ` under strong
//! adversarial contamination.
//!
//! * [`gaussian`]: Gaussian expectations by quadrature, Stein checks.
//! * [`link`]: link functions and the landscape constants derived from them.
//! * [`data`]: synthetic data, heavy-tailed noise, adversaries, buckets.
//! * [`robust`]: filtered robust mean and top-eigenvector estimators.
//! * [`recover`]: spectral initialization, robust gradient descent, baselines.
//! * [`bench`]: constant tables, sweeps and structural checks.
//! * [`cli`]: the `simrobust` command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod data;
pub mod error;
pub mod gaussian;
pub mod linalg;
pub mod link;
pub mod par;
pub mod recover;
pub mod robust;

pub use error::{Error, Result};
pub use par::Exec;
