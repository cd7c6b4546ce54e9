//! Hierarchical predictive-coding video prediction.
//!
//! - [`autograd`]: tape-based reverse-mode differentiation, checkpoints
//! - [`nn`]: convolution, pooling, ConvLSTM and softmax kernels
//! - [`prednet`]: the A / Â / E / R hierarchy, rollouts and losses
//! - [`plus`]: classification head with class feedback (PredNet+)
//! - [`datagen`]: moving-glyph synthetic videos and the `VSEQ` container
//! - [`metrics`]: MAE, PSNR, SSIM, conditioned SSIM, sharpness
//! - [`harness`]: training, evaluation, extrapolation and probing pipelines

pub mod autograd;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod plus;
pub mod prednet;

pub use error::{Error, Result};
