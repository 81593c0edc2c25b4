//! Deterministic benign perturbations and the pipeline language that composes them.

pub mod filter;
pub mod jpeg;
pub mod kernel;
pub mod noise;
mod pipeline;
pub mod resize;
pub mod tone;

use std::fmt;

use thiserror::Error;

use crate::buffer::ImageBuffer;

pub use filter::{gaussian_blur, mean_blur, median_blur};
pub use jpeg::jpeg_transcode;
pub use kernel::{make_gaussian_kernel, Kernel1D};
pub use noise::add_gaussian_noise;
pub use pipeline::{apply_pipeline, parse_pipeline, PipelineError, PipelineRunError, PipelineSpec, StageError};
pub use resize::resize_bilinear;
pub use tone::gamma_correct;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OpError {
    #[error("{0}")]
    InvalidParam(String),
    #[error("codec failure: {0}")]
    Codec(String),
}

/// One conventional perturbation with validated parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    Identity,
    Jpeg { quality: u32 },
    GaussianBlur { ks: usize },
    MeanBlur { ks: usize },
    MedianBlur { ks: usize },
    GaussianNoise { mean: f64, var: f64 },
    Gamma { g: f64 },
    Resize { scale: f64 },
}

impl Operator {
    pub fn name(&self) -> &'static str {
        match self {
            Operator::Identity => "identity",
            Operator::Jpeg { .. } => "jpeg",
            Operator::GaussianBlur { .. } => "gblur",
            Operator::MeanBlur { .. } => "meanblur",
            Operator::MedianBlur { .. } => "medianblur",
            Operator::GaussianNoise { .. } => "gnoise",
            Operator::Gamma { .. } => "gamma",
            Operator::Resize { .. } => "resize",
        }
    }

    /// Parameters in canonical order, as `(key, value)` pairs.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            Operator::Identity => vec![],
            Operator::Jpeg { quality } => vec![("quality", f64::from(quality))],
            Operator::GaussianBlur { ks } | Operator::MeanBlur { ks } | Operator::MedianBlur { ks } => {
                vec![("ks", ks as f64)]
            }
            Operator::GaussianNoise { mean, var } => vec![("mean", mean), ("var", var)],
            Operator::Gamma { g } => vec![("g", g)],
            Operator::Resize { scale } => vec![("scale", scale)],
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, Operator::GaussianNoise { .. })
    }

    /// Applies the operator. `rng` is only consulted by stochastic operators.
    pub fn apply<R: rand_core::RngCore>(&self, img: &ImageBuffer, rng: impl FnOnce() -> R) -> Result<ImageBuffer, OpError> {
        match *self {
            Operator::Identity => Ok(img.clone()),
            Operator::Jpeg { quality } => jpeg_transcode(img, quality),
            Operator::GaussianBlur { ks } => gaussian_blur(img, ks),
            Operator::MeanBlur { ks } => mean_blur(img, ks),
            Operator::MedianBlur { ks } => median_blur(img, ks),
            Operator::GaussianNoise { mean, var } => add_gaussian_noise(img, mean, var, rng()),
            Operator::Gamma { g } => gamma_correct(img, g),
            Operator::Resize { scale } => resize_bilinear(img, scale),
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())?;
        for (i, (key, value)) in self.params().into_iter().enumerate() {
            let sep = if i == 0 { ':' } else { ',' };
            write!(f, "{sep}{key}={value}")?;
        }
        Ok(())
    }
}
