//! Self-supervised multimodal anomaly detection for map tiles.
//!
//! The pipeline rasterizes several geospatial modalities onto a shared
//! pixel grid, fuses them channel-wise, synthesizes anomalies by perturbing
//! road casement polygons, and trains a small conv net to tell normal tiles
//! from perturbed ones.

pub mod augment;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod manifest;
pub mod model;
pub mod objective;
pub mod raster;
pub mod rng;
pub mod scoring;
pub mod synthgen;
pub mod tilemath;

pub use error::{Error, Result};
