//! Blind video deflickering built on scale-time equalization (STE) of
//! illumination histograms.
//!
//! The pipeline has three stages:
//!
//! 1. [`priors`]: extract the per-frame illumination map (`max(R,G,B)`), smooth
//!    the histogram series with [`ste`], flag singular frames by the KL
//!    divergence between smoothed and original histograms, and mark over- and
//!    under-exposed pixels.
//! 2. [`repair`]: re-project the filtered illumination onto each RGB frame and
//!    migrate texture from flow-warped neighbours into exposed regions of
//!    singular frames.
//! 3. An optional flow-guided temporal blend.
//!
//! [`synth`] generates flickering clips with known ground truth and
//! [`metrics`] scores results (PSNR, SSIM, warping error).

// Parameter checks use `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod flow;
pub mod histogram;
pub mod image;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod priors;
pub mod repair;
pub mod ste;
pub mod synth;

pub use error::{Error, Result};

// `std::time::Instant` panics on wasm32-unknown-unknown.
#[cfg(not(target_arch = "wasm32"))]
pub(crate) use std::time::Instant;
#[cfg(target_arch = "wasm32")]
pub(crate) use web_time::Instant;
pub use image::{FrameRgb, FrameSequence, IlluminationMap};
