//! Hierarchical 3D Gaussian scenes: parameterization, a differentiable
//! tile-based splatting rasterizer, regularizers and desk-scale fitting.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod camera;
pub mod error;
pub mod gaussian;
pub mod hierarchy;
pub mod image;
pub mod io;
pub mod losses;
pub mod raster;
pub mod train;

pub use camera::Camera;
pub use error::{Error, Result};
pub use gaussian::{GaussianGrad, GaussianSet, Quat, RawGaussian, Vec3};
pub use hierarchy::{HierarchyConfig, LevelResiduals, ResidualParams, Scene};
pub use image::Image;
pub use losses::LossWeights;
