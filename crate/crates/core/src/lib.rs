//! Parameter-free classical image filters.
//!
//! A base filter (bilateral, median, rolling guidance, ...) is run under a
//! fixed list of configurations to produce a *filtered basis*. A tiny
//! dual-branch linear model then blends the basis planes and their residuals
//! into the final image, so the end user never tunes filter parameters.
//!
//! Module map:
//! - [`image`], [`pnm`], [`metrics`], [`noise`], [`synth`]: rasters, I/O and measurement
//! - [`filters`]: Gaussian, bilateral, joint bilateral, median, rolling guidance
//! - [`basis`]: basis construction, direct and score-isometric parameter sampling
//! - [`model`]: composition model, loss, analytic gradients, model files
//! - [`trainer`]: Adam, schedule, datasets, training loop, evaluation, ablation
//! - [`bench`]: cost measurements

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod bench;
pub mod error;
pub mod filters;
pub mod image;
pub mod metrics;
pub mod model;
pub mod noise;
mod par;
pub mod pnm;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use filters::FilterConfig;
pub use image::{Image, Raster, Shape};
