//! Frequency-domain adaptation of synthetic ultrasound images.
//!
//! * [`spectral`]: 2D DFT, magnitude/phase split, DC centring.
//! * [`fda`]: low-frequency mask and magnitude swap.
//! * [`simulator`]: convolution-model speckle phantoms with anechoic regions.
//! * [`dataset`]: seeded splits, source→target pairing, hashed manifests.
//! * [`metrics`]: Dice coefficient and batch reports.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod fda;
pub mod image;
pub mod metrics;
pub mod simulator;
pub mod spectral;

pub use error::{Error, Result};
pub use image::Image2D;
