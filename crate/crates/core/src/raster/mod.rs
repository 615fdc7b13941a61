//! Differentiable splatting rasterizer.
//!
//! Gaussians are projected with the EWA affine approximation, sorted once by
//! depth, and alpha-blended front to back. [`render_reference`] evaluates
//! every visible splat at every pixel and serves as the oracle;
//! [`render_tiled`] bins splats into 16x16 tiles and stops a pixel once its
//! transmittance falls below [`MIN_TRANSMITTANCE`]. [`render_backward`]
//! replays the tiled forward pass to produce analytic gradients.

mod backward;
mod project;
mod reference;
mod tiled;

pub use backward::{project_backward, render_backward, SceneGrads, SplatGrad};
pub use project::{depth_order, project_gaussian, splat_alpha, Splat2D};
pub use reference::render_reference;
pub use tiled::{render_tiled, TileBins};

/// Screen-space low-pass filter added to the projected covariance diagonal.
pub const LOW_PASS: f64 = 0.3;
pub const MAX_ALPHA: f64 = 0.999;
/// Contributions with a blending weight below this are skipped.
pub const MIN_ALPHA: f64 = 1.0 / 255.0;
pub const TILE_SIZE: usize = 16;
pub const MIN_TRANSMITTANCE: f64 = 1e-4;
