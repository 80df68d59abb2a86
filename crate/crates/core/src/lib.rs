//! Curve-based style transfer.
//!
//! Shape-editing rules with exact Jacobians are applied to an all-cubic
//! curve set, the result is soft-rasterized, and a fixed convolutional
//! feature pyramid scores it against a style image through Gram-matrix
//! statistics. Gradients flow back through every stage to the rule
//! parameters, which Adam optimizes.

pub mod features;
pub mod geometry;
pub mod gradcheck;
pub mod optim;
pub mod raster;
pub mod rules;
pub mod svg;

pub use geometry::{CubicBezier, CurveSet, Point, Subpath, ViewBox, WeldGroups};
