//! Framework-independent data pipeline for semi-supervised object detection.
//!
//! The crate covers the data side of a mean-teacher detection recipe without
//! training a network: pseudo-label threshold and empty-image filtering, a
//! previous-iteration cache with lossless pad/unpad, pixel-blend and
//! four-way mosaic compositions that carry their labels, repeat-factor
//! oversampling of tail categories, gradient-density analysis over anchor
//! samples, and a seeded simulator that reproduces the pseudo-label
//! distribution phenomena at desk scale.
//!
//! Everything randomized takes an explicit seed; identical seeds give
//! byte-identical outputs. The `mixpl` binary exposes the pieces as
//! subcommands (`split`, `mix`, `mosaic`, `resample-plan`, `grad-density`,
//! `simulate`, `stats`).

pub mod augment;
pub mod coco;
pub mod config;
pub mod dataset;
pub mod error;
pub mod geom;
pub mod grad;
pub mod pipeline;
pub mod raster;
pub mod resample;
pub mod rng;
pub mod sim;
pub mod synthetic;

pub use dataset::{Annotation, CategoryId, DatasetIndex, Detection, ImageId, LabeledImage};
pub use error::{Error, Result};
pub use geom::{BBox, ScaleClass};
pub use raster::{ImageRaster, PadState};
