use nalgebra::{Matrix2, Matrix3, Vector2};

use super::{LOW_PASS, MAX_ALPHA, MIN_ALPHA};
use crate::camera::{jacobian_unchecked, world_to_camera, Camera};
use crate::error::{Error, Result};
use crate::gaussian::{RawGaussian, Vec3};

/// Screen-space footprint of one Gaussian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Splat2D {
    pub mean2d: Vector2<f64>,
    /// Includes the low-pass term.
    pub cov2d: Matrix2<f64>,
    /// Inverse of `cov2d`.
    pub conic: Matrix2<f64>,
    pub depth: f64,
    pub color: Vec3,
    pub opacity: f64,
    /// Pixel radius beyond which the blending weight is below [`MIN_ALPHA`].
    pub radius: f64,
    /// Exponent below which the blending weight is below [`MIN_ALPHA`].
    min_power: f64,
}

/// EWA projection of `g`. Returns `Ok(None)` when the Gaussian is behind the
/// near plane, too transparent to ever pass the alpha threshold, or entirely
/// outside the frame.
pub fn project_gaussian(g: &RawGaussian, cam: &Camera) -> Result<Option<Splat2D>> {
    let (pc, depth) = world_to_camera(&g.mu, cam);
    if depth < cam.near_plane {
        return Ok(None);
    }
    let opacity = g.opacity();
    if !(opacity >= MIN_ALPHA) {
        return Ok(None);
    }
    let sigma = g.covariance()?.sigma;
    let cov2d = screen_covariance(&pc, cam, &sigma);
    let det = cov2d.determinant();
    if !(det > 1e-12) {
        return Err(Error::SingularCovariance { index: 0, det });
    }
    let conic = Matrix2::new(cov2d[(1, 1)], -cov2d[(0, 1)], -cov2d[(1, 0)], cov2d[(0, 0)]) / det;

    let mid = 0.5 * (cov2d[(0, 0)] + cov2d[(1, 1)]);
    let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
    let min_power = (MIN_ALPHA / opacity).ln();
    let sigmas = (-2.0 * min_power).max(0.0).sqrt().max(3.0);
    let radius = sigmas * lambda_max.sqrt();

    let mean2d = Vector2::new(
        cam.focal.x * pc.x / pc.z + cam.principal_point.x,
        cam.focal.y * pc.y / pc.z + cam.principal_point.y,
    );
    if pixel_span(mean2d.x, radius, cam.width).is_none() || pixel_span(mean2d.y, radius, cam.height).is_none() {
        return Ok(None);
    }
    Ok(Some(Splat2D {
        mean2d,
        cov2d,
        conic,
        depth,
        color: g.color(),
        opacity,
        radius,
        min_power,
    }))
}

pub(crate) fn project_indexed(g: &RawGaussian, cam: &Camera, index: usize) -> Result<Option<Splat2D>> {
    project_gaussian(g, cam).map_err(|e| match e {
        Error::SingularCovariance { det, .. } => Error::SingularCovariance { index, det },
        other => other,
    })
}

/// `J W Sigma W^T J^T + LOW_PASS * I` at camera-space point `pc`.
pub(crate) fn screen_covariance(pc: &Vec3, cam: &Camera, sigma: &Matrix3<f64>) -> Matrix2<f64> {
    let t = jacobian_unchecked(pc, cam) * cam.rotation;
    t * sigma * t.transpose() + Matrix2::identity() * LOW_PASS
}

/// Inclusive range of pixel indices whose centers lie within `radius` of
/// `center` along one axis, clipped to `[0, size)`.
pub(crate) fn pixel_span(center: f64, radius: f64, size: usize) -> Option<(usize, usize)> {
    let lo = (center - radius - 0.5).ceil().max(0.0);
    let hi = (center + radius - 0.5).floor().min(size as f64 - 1.0);
    if !(lo <= hi) {
        return None;
    }
    Some((lo as usize, hi as usize))
}

/// Blending weight of `splat` at pixel `(px, py)` together with the raw
/// Gaussian falloff, or `None` when the weight is below [`MIN_ALPHA`].
/// The boolean is true when the weight was clamped to [`MAX_ALPHA`].
#[inline]
pub fn splat_alpha(splat: &Splat2D, px: usize, py: usize) -> Option<(f64, f64, bool)> {
    let dx = px as f64 + 0.5 - splat.mean2d.x;
    let dy = py as f64 + 0.5 - splat.mean2d.y;
    let power = -0.5 * (splat.conic[(0, 0)] * dx * dx + splat.conic[(1, 1)] * dy * dy)
        - splat.conic[(0, 1)] * dx * dy;
    if power < splat.min_power {
        return None;
    }
    let falloff = power.exp();
    let alpha = splat.opacity * falloff;
    if alpha < MIN_ALPHA {
        return None;
    }
    if alpha > MAX_ALPHA {
        Some((MAX_ALPHA, falloff, true))
    } else {
        Some((alpha, falloff, false))
    }
}

/// Indices of visible splats sorted front to back, ties broken by index.
pub fn depth_order(splats: &[Option<Splat2D>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..splats.len()).filter(|&i| splats[i].is_some()).collect();
    order.sort_by(|&a, &b| {
        let da = splats[a].as_ref().map_or(0.0, |s| s.depth);
        let db = splats[b].as_ref().map_or(0.0, |s| s.depth);
        da.total_cmp(&db).then(a.cmp(&b))
    });
    order
}
