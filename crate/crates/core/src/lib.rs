//! Cellular-automaton edge detection with particle-swarm parameter search.
//!
//! - [`image`]: grayscale images, edge maps and preprocessing.
//! - [`ca`]: rule numbering and the two-phase detector.
//! - [`pso`]: global-best swarm over the normalized parameter cube.
//! - [`metrics`]: Dice, MSE/PSNR and SSIM.
//! - [`canny`]: the Canny baseline.
//! - [`dataset`]: manifests, PNG I/O and dataset loading.
//! - [`harness`]: k-fold, general and per-category experiments.
//! - [`synthetic`]: procedurally generated images with annotator maps.

pub mod ca;
pub mod canny;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod image;
pub mod metrics;
pub mod pso;
pub mod synthetic;

pub use ca::{decode_particle, decode_rule, detect_edges, max_rule, CellTable, DetectorParams, Radius, RuleMask};
pub use error::{Error, Result};
pub use image::{EdgeMap, GrayImage, ProbabilityMap};
