use nalgebra::{Matrix2, Matrix3, Vector2};
use rayon::prelude::*;

use super::project::{splat_alpha, Splat2D};
use super::tiled::TileBins;
use super::MIN_TRANSMITTANCE;
use crate::camera::{jacobian_unchecked, world_to_camera, Camera};
use crate::error::{Error, Result};
use crate::gaussian::{rotation_backward, rotation_of, GaussianGrad, RawGaussian, Vec3};
use crate::image::Image;

/// Per-Gaussian raw-parameter gradients, indexed like the render input.
pub type SceneGrads = Vec<GaussianGrad>;

/// Gradient with respect to the screen-space quantities of one splat.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SplatGrad {
    pub mean2d: Vector2<f64>,
    /// Treats the two off-diagonal entries as independent.
    pub conic: Matrix2<f64>,
    pub color: Vec3,
    pub opacity: f64,
}

impl std::ops::AddAssign for SplatGrad {
    fn add_assign(&mut self, rhs: Self) {
        self.mean2d += rhs.mean2d;
        self.conic += rhs.conic;
        self.color += rhs.color;
        self.opacity += rhs.opacity;
    }
}

struct Contribution {
    entry: usize,
    alpha: f64,
    falloff: f64,
    clamped: bool,
    transmittance: f64,
}

/// Reverse-mode gradient of `<grad_image, render_tiled(gaussians, cam)>`.
///
/// The forward pass is replayed tile by tile; per-tile partial sums are merged
/// in tile order so the result is reproducible bit for bit.
pub fn render_backward(gaussians: &[RawGaussian], cam: &Camera, grad_image: &Image) -> Result<SceneGrads> {
    if grad_image.width != cam.width || grad_image.height != cam.height {
        return Err(Error::ShapeMismatch(format!(
            "gradient image is {}x{}, camera is {}x{}",
            grad_image.width, grad_image.height, cam.width, cam.height
        )));
    }
    let bins = TileBins::build(gaussians, cam)?;
    let partials: Vec<Vec<SplatGrad>> = (0..bins.tile_count())
        .into_par_iter()
        .map(|tile| tile_backward(&bins, tile, cam, grad_image))
        .collect();

    let mut splat_grads = vec![SplatGrad::default(); bins.splats.len()];
    for (tile, partial) in partials.into_iter().enumerate() {
        for (&k, g) in bins.tile_entries(tile).iter().zip(partial) {
            splat_grads[k as usize] += g;
        }
    }

    let mut out = vec![GaussianGrad::default(); gaussians.len()];
    let chained: Vec<(usize, GaussianGrad)> = bins
        .source
        .par_iter()
        .zip(bins.splats.par_iter())
        .zip(splat_grads.par_iter())
        .map(|((&src, splat), g)| (src, project_backward(&gaussians[src], cam, splat, g)))
        .collect();
    for (src, g) in chained {
        out[src] = g;
    }
    Ok(out)
}

fn tile_backward(bins: &TileBins, tile: usize, cam: &Camera, grad_image: &Image) -> Vec<SplatGrad> {
    let (x0, x1, y0, y1) = bins.tile_pixels(tile, cam);
    let list = bins.tile_entries(tile);
    let mut grads = vec![SplatGrad::default(); list.len()];
    if list.is_empty() {
        return grads;
    }
    let mut trace: Vec<Contribution> = Vec::new();
    for py in y0..y1 {
        for px in x0..x1 {
            let d_out = Vec3::from(grad_image.pixel(px, py));
            if d_out == Vec3::zeros() {
                continue;
            }
            trace.clear();
            let mut transmittance = 1.0;
            for (entry, &k) in list.iter().enumerate() {
                let Some((alpha, falloff, clamped)) = splat_alpha(&bins.splats[k as usize], px, py) else {
                    continue;
                };
                trace.push(Contribution {
                    entry,
                    alpha,
                    falloff,
                    clamped,
                    transmittance,
                });
                transmittance *= 1.0 - alpha;
                if transmittance < MIN_TRANSMITTANCE {
                    break;
                }
            }

            let pixel = Vector2::new(px as f64 + 0.5, py as f64 + 0.5);
            // Gradient with respect to the transmittance entering the next splat.
            let mut grad_t_next = 0.0;
            for c in trace.iter().rev() {
                let splat: &Splat2D = &bins.splats[list[c.entry] as usize];
                let g = &mut grads[c.entry];
                let d_color_dot = d_out.dot(&splat.color);
                g.color += d_out * (c.transmittance * c.alpha);
                let d_alpha = (d_color_dot - grad_t_next) * c.transmittance;
                grad_t_next = d_color_dot * c.alpha + grad_t_next * (1.0 - c.alpha);
                if c.clamped {
                    continue;
                }
                g.opacity += d_alpha * c.falloff;
                let d_power = d_alpha * splat.opacity * c.falloff;
                let d = pixel - splat.mean2d;
                g.conic += (d * d.transpose()) * (-0.5 * d_power);
                g.mean2d += (splat.conic * d) * d_power;
            }
        }
    }
    grads
}

/// Chains screen-space gradients of one splat back to the raw parameters of
/// the Gaussian it was projected from.
pub fn project_backward(g: &RawGaussian, cam: &Camera, splat: &Splat2D, grad: &SplatGrad) -> GaussianGrad {
    let w = cam.rotation;
    let (pc, _) = world_to_camera(&g.mu, cam);
    let j = jacobian_unchecked(&pc, cam);
    let t = j * w;
    let rot = rotation_of(&g.quat).expect("quaternion was valid in the forward pass");
    let scale = g.scale();
    let m = rot * Matrix3::from_diagonal(&scale);
    let sigma = m * m.transpose();

    // conic = cov^-1  =>  dL/dcov = -conic^T dL/dconic conic^T
    let grad_cov = -(splat.conic * grad.conic * splat.conic);
    let grad_cov = 0.5 * (grad_cov + grad_cov.transpose());
    let grad_sigma = t.transpose() * grad_cov * t;
    let grad_t = 2.0 * grad_cov * t * sigma;
    let grad_j = grad_t * w.transpose();

    let (fx, fy) = (cam.focal.x, cam.focal.y);
    let iz = 1.0 / pc.z;
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    let mut grad_pc = j.transpose() * grad.mean2d;
    grad_pc.x += grad_j[(0, 2)] * (-fx * iz2);
    grad_pc.y += grad_j[(1, 2)] * (-fy * iz2);
    grad_pc.z += grad_j[(0, 0)] * (-fx * iz2)
        + grad_j[(0, 2)] * (2.0 * fx * pc.x * iz3)
        + grad_j[(1, 1)] * (-fy * iz2)
        + grad_j[(1, 2)] * (2.0 * fy * pc.y * iz3);

    let grad_m = 2.0 * grad_sigma * m;
    let mut grad_rot = Matrix3::zeros();
    let mut grad_log_scale = Vec3::zeros();
    for k in 0..3 {
        let col = grad_m.column(k);
        grad_log_scale[k] = col.dot(&rot.column(k)) * scale[k];
        grad_rot.set_column(k, &(col * scale[k]));
    }

    let color = splat.color;
    let opacity = splat.opacity;
    GaussianGrad {
        mu: w.transpose() * grad_pc,
        log_scale: grad_log_scale,
        quat: rotation_backward(&g.quat, &grad_rot),
        opacity_logit: grad.opacity * opacity * (1.0 - opacity),
        color_logit: grad.color.component_mul(&color.component_mul(&color.map(|c| 1.0 - c))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{logit, Quat};
    use crate::raster::render_tiled;

    fn cam() -> Camera {
        Camera::new(
            Matrix3::identity(),
            Vec3::new(0.0, 0.0, 3.0),
            Vector2::new(40.0, 40.0),
            Vector2::new(8.0, 8.0),
            (16, 16),
        )
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let g = RawGaussian {
            log_scale: Vec3::repeat(-1.5),
            opacity_logit: 0.5,
            ..Default::default()
        };
        let grads = render_backward(&[g, g], &cam(), &Image::new(16, 16)).unwrap();
        assert!(grads.iter().all(|g| g.max_abs() == 0.0));
    }

    /// L = sum of the center pixel; dL/dcolor_logit by central differences.
    #[test]
    fn single_gaussian_color_gradient() {
        let g = RawGaussian {
            mu: Vec3::new(0.01, -0.02, 0.0),
            log_scale: Vec3::new(-1.2, -1.5, -1.3),
            quat: Quat::new(0.9, 0.1, 0.2, -0.1),
            opacity_logit: logit(0.6),
            color_logit: Vec3::new(0.3, -0.4, 1.0),
        };
        let c = cam();
        let mut upstream = Image::new(16, 16);
        upstream.set_pixel(8, 8, [1.0, 1.0, 1.0]);
        let loss = |g: &RawGaussian| render_tiled(&[*g], &c).unwrap().pixel(8, 8).iter().sum::<f64>();
        let analytic = render_backward(&[g], &c, &upstream).unwrap()[0];
        let h = 1e-4;
        for k in 0..3 {
            let mut gp = g;
            let mut gm = g;
            gp.color_logit[k] += h;
            gm.color_logit[k] -= h;
            let fd = (loss(&gp) - loss(&gm)) / (2.0 * h);
            let rel = (fd - analytic.color_logit[k]).abs() / fd.abs().max(1e-12);
            assert!(rel < 1e-5, "channel {k}: fd {fd} analytic {}", analytic.color_logit[k]);
        }
    }

    #[test]
    fn rejects_mismatched_gradient_image() {
        assert!(matches!(
            render_backward(&[], &cam(), &Image::new(8, 8)),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
