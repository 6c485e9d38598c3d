//! Context-aware description of 3-D LiDAR segments.
//!
//! The library covers the full loop-closure pipeline on synthetic data:
//!
//! - [`synth`] simulates a spinning multi-beam LiDAR scanning a procedural
//!   world with a rolling-shutter model, and imports generic point records.
//! - [`imaging`] synthesizes intensity/range images on a cylindrical grid,
//!   computes motion-aware segment masks, and interpolates irregular scans.
//! - [`segmentation`] clusters point clouds into segments incrementally and
//!   voxelizes them for the geometry branch.
//! - [`net`] is a small two-branch convolutional network with hand-written
//!   reverse-mode gradients that produces 64-d segment descriptors.
//! - [`attention`] computes score-based class activation heatmaps, including
//!   a variant for descriptor outputs, plus a segment attention score.
//! - [`localization`] matches descriptors (k-NN with a ratio-test policy),
//!   verifies matches by pairwise geometric consistency, and estimates a
//!   closed-form 6-DoF pose.
//! - [`evaluation`] produces rank/completeness, closure and attention
//!   reports as CSV and SVG.
//! - [`pipeline`] wires scans through segmentation, description and
//!   localization for the CLI and the end-to-end tests.

pub mod attention;
pub mod evaluation;
pub mod imaging;
pub mod localization;
pub mod logging;
pub mod net;
pub mod oracles;
pub mod pipeline;
pub mod rng;
pub mod segmentation;
pub mod svg;
pub mod synth;
pub mod types;
