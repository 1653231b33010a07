//! Sparse-view CT reconstruction by unrolled quasi-Newton iterations.
//!
//! The learned gradient `lambda_t A^+ (A x - y) + G(x)` pairs a data term
//! with an Inception + MLP-Mixer regulariser `G`; the step is taken in a
//! small latent space where a dense BFGS inverse Hessian stays affordable.
//!
//! Building blocks:
//! - [`solvers`]: classical gradient descent and full-dimensional BFGS
//! - [`mixer`], [`codec`]: the regulariser network and the latent encoder/decoder
//! - [`unroll`]: the unrolled network itself
//! - [`train`]: AdamW training and evaluation
//! - [`metrics`], [`nps`], [`ood`]: image quality, noise power spectrum,
//!   out-of-distribution probes

pub mod codec;
pub mod config;
mod error;
pub mod metrics;
pub mod mixer;
pub mod nn;
pub mod nps;
pub mod ood;
pub mod seeds;
pub mod solvers;
pub mod train;
pub mod unroll;

pub use error::{Error, Result};
pub use unroll::{InitMode, Problem, PseudoInverse, UnrolledNet, UpdateRule};
