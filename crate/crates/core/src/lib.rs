//! Stacked attention models that answer questions about images.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: a small reverse-mode tape over dense `f64` tensors.
//! - [`question`]: LSTM and n-gram CNN question encoders.
//! - [`image`]: region feature maps, the `SANF` file format and the region projection.
//! - [`model`]: stacked attention layers, the answer classifier and `SANC` checkpoints.
//! - [`train`]: loss, global-norm clipping, momentum SGD, dropout, the training loop.
//! - [`data`]: a synthetic grid-scene QA generator with an independent answer resolver.
//! - [`metrics`]: accuracy, the VQA consensus score and WUPS.
//! - [`viz`]: attention heatmaps (bilinear upsampling, Gaussian blur, PGM export).
//! - [`cli`]: the `san` command line driver.

// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod image;
pub mod metrics;
pub mod model;
pub mod params;
pub mod question;
pub mod train;
pub mod viz;

pub use error::{Result, SanError};
