//! Image compression by downsampling plus learned super-resolution.
//!
//! The pipeline stores a small downsampled payload and reconstructs the full
//! resolution image with a residual convolutional generator trained with a
//! mix of pixel, adversarial, feature-space, and actor-critic objectives. The
//! crate bundles everything needed to run it end to end on a CPU:
//!
//! - [`tensor`]: a minimal reverse-mode autodiff engine with the ops the
//!   models need (conv2d, batch norm, pixel shuffle, matmul, ...), ADAM, and
//!   a binary checkpoint format.
//! - [`gradcheck`]: finite-difference gradient verification used by tests.
//! - [`resample`]: classical separable resampling (Lanczos, Catmull-Rom,
//!   nearest) used both as the downsampling front end and as baselines.
//! - [`metrics`]: PSNR, SSIM, and multi-scale SSIM.
//! - [`model`]: the generator (with its action head) and discriminator.
//! - [`losses`]: the composite training objective and the reward window.
//! - [`codec`]: the byte-accounted container format plus compress/decompress.
//! - [`corpus`]: training data loading, patch sampling, synthetic images.
//! - [`train`] / [`eval`]: the training loop and the evaluation harness.
//!
//! The `examples/` directory demonstrates each capability as a runnable
//! program; the `rlsr` binary exposes the same surface as subcommands.

pub mod cli;
pub mod codec;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod raster;
pub mod resample;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;
