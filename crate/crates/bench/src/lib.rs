//! Fixtures shared by the benchmarks.

use hgs_core::hierarchy::{build_scene, init_residuals, HierarchyConfig};
use hgs_core::{Camera, RawGaussian, Scene};

/// Freshly initialized scene for `cfg`, seed 0.
pub fn initial_scene(cfg: &HierarchyConfig) -> Scene {
    build_scene(&init_residuals(cfg, 0, 0.02), cfg).expect("valid configuration")
}

/// The default 87,296-Gaussian render list.
pub fn default_render_set() -> Vec<RawGaussian> {
    initial_scene(&HierarchyConfig::default()).render_set()
}

pub fn bench_camera(size: usize) -> Camera {
    Camera::orbit(0.3, 0.1, 2.7, (size, size))
}
