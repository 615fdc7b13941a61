use rayon::prelude::*;

use super::project::{depth_order, project_indexed, splat_alpha, Splat2D};
use crate::camera::Camera;
use crate::error::Result;
use crate::gaussian::RawGaussian;
use crate::image::Image;

/// Brute-force front-to-back blend of every visible splat at every pixel.
///
/// No tiling and no early termination; only contributions below the global
/// alpha threshold are skipped.
pub fn render_reference(gaussians: &[RawGaussian], cam: &Camera) -> Result<Image> {
    let projected = gaussians
        .iter()
        .enumerate()
        .map(|(i, g)| project_indexed(g, cam, i))
        .collect::<Result<Vec<_>>>()?;
    let sorted: Vec<Splat2D> = depth_order(&projected)
        .into_iter()
        .filter_map(|i| projected[i])
        .collect();

    let mut image = Image::new(cam.width, cam.height);
    if cam.width == 0 {
        return Ok(image);
    }
    // Rows are independent. Within a row every splat is visited in depth
    // order and blended into every pixel, which keeps the per-pixel order of
    // operations identical to a pixel-outer loop.
    image
        .rgb
        .par_chunks_mut(3 * cam.width)
        .enumerate()
        .for_each(|(py, row)| {
            let mut transmittance = vec![1.0; cam.width];
            for splat in &sorted {
                for (px, (out, t)) in row.chunks_exact_mut(3).zip(transmittance.iter_mut()).enumerate() {
                    let Some((alpha, _, _)) = splat_alpha(splat, px, py) else {
                        continue;
                    };
                    let weight = *t * alpha;
                    for c in 0..3 {
                        out[c] += weight * splat.color[c];
                    }
                    *t *= 1.0 - alpha;
                }
            }
        });
    Ok(image)
}
