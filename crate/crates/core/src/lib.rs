//! Structured uncertainty similarity scoring for images.
//!
//! The crate models each perceptual component of an image (multi-scale luma,
//! quarter-scale chroma) with a multivariate Normal whose precision matrix is
//! given through a sparse lower-triangular Cholesky factor on the pixel
//! lattice. Models are fitted self-supervised against perceptually calibrated
//! augmentations; component log-likelihoods combine through learned weights
//! into a single similarity score that stays inspectable: whitened residuals,
//! per-pixel score maps, samples, and pixel-space gradients are all
//! first-class outputs.

pub mod augment;
pub mod error;
pub mod eval;
pub mod fitting;
pub mod imaging;
pub mod score;
pub mod supn;
pub mod synth;
pub mod util;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
