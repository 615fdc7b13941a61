use rayon::prelude::*;

use super::project::{depth_order, pixel_span, project_indexed, splat_alpha, Splat2D};
use super::{MIN_TRANSMITTANCE, TILE_SIZE};
use crate::camera::Camera;
use crate::error::Result;
use crate::gaussian::RawGaussian;
use crate::image::Image;

/// Visible splats in global depth order plus, for every tile, the slice of
/// splats whose extent overlaps it (still in depth order).
#[derive(Clone, Debug)]
pub struct TileBins {
    pub splats: Vec<Splat2D>,
    /// Input index of each entry of `splats`.
    pub source: Vec<usize>,
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// `tile_offsets[t]..tile_offsets[t + 1]` indexes `entries` for tile `t`.
    pub tile_offsets: Vec<usize>,
    /// Positions into `splats`.
    pub entries: Vec<u32>,
}

impl TileBins {
    pub fn build(gaussians: &[RawGaussian], cam: &Camera) -> Result<Self> {
        let projected = gaussians
            .par_iter()
            .enumerate()
            .map(|(i, g)| project_indexed(g, cam, i))
            .collect::<Result<Vec<_>>>()?;
        let source = depth_order(&projected);
        let splats: Vec<Splat2D> = source.iter().filter_map(|&i| projected[i]).collect();

        let tiles_x = cam.width.div_ceil(TILE_SIZE);
        let tiles_y = cam.height.div_ceil(TILE_SIZE);
        let rects: Vec<(usize, usize, usize, usize)> = splats
            .iter()
            .map(|s| {
                let (x0, x1) = pixel_span(s.mean2d.x, s.radius, cam.width).unwrap_or((1, 0));
                let (y0, y1) = pixel_span(s.mean2d.y, s.radius, cam.height).unwrap_or((1, 0));
                (x0 / TILE_SIZE, x1 / TILE_SIZE, y0 / TILE_SIZE, y1 / TILE_SIZE)
            })
            .collect();

        // Counting sort keeps each tile's list in global depth order.
        let mut counts = vec![0usize; tiles_x * tiles_y + 1];
        for &(tx0, tx1, ty0, ty1) in &rects {
            for ty in ty0..=ty1 {
                for tx in tx0..=tx1 {
                    counts[ty * tiles_x + tx + 1] += 1;
                }
            }
        }
        for t in 1..counts.len() {
            counts[t] += counts[t - 1];
        }
        let tile_offsets = counts.clone();
        let mut cursor = counts;
        let mut entries = vec![0u32; *tile_offsets.last().unwrap_or(&0)];
        for (k, &(tx0, tx1, ty0, ty1)) in rects.iter().enumerate() {
            for ty in ty0..=ty1 {
                for tx in tx0..=tx1 {
                    let t = ty * tiles_x + tx;
                    entries[cursor[t]] = k as u32;
                    cursor[t] += 1;
                }
            }
        }
        Ok(Self {
            splats,
            source,
            tiles_x,
            tiles_y,
            tile_offsets,
            entries,
        })
    }

    pub fn tile_count(&self) -> usize {
        self.tiles_x * self.tiles_y
    }

    pub fn tile_entries(&self, tile: usize) -> &[u32] {
        &self.entries[self.tile_offsets[tile]..self.tile_offsets[tile + 1]]
    }

    /// Pixel bounds `(x0, x1, y0, y1)` (exclusive ends) of a tile.
    pub fn tile_pixels(&self, tile: usize, cam: &Camera) -> (usize, usize, usize, usize) {
        let (tx, ty) = (tile % self.tiles_x, tile / self.tiles_x);
        let x0 = tx * TILE_SIZE;
        let y0 = ty * TILE_SIZE;
        (x0, (x0 + TILE_SIZE).min(cam.width), y0, (y0 + TILE_SIZE).min(cam.height))
    }
}

/// Tile-binned forward render. Matches [`super::render_reference`] up to the
/// per-pixel early termination at [`MIN_TRANSMITTANCE`].
pub fn render_tiled(gaussians: &[RawGaussian], cam: &Camera) -> Result<Image> {
    let bins = TileBins::build(gaussians, cam)?;
    let tiles: Vec<(usize, Vec<f64>)> = (0..bins.tile_count())
        .into_par_iter()
        .map(|tile| (tile, shade_tile(&bins, tile, cam)))
        .collect();

    let mut image = Image::new(cam.width, cam.height);
    for (tile, pixels) in tiles {
        let (x0, x1, y0, y1) = bins.tile_pixels(tile, cam);
        let w = x1 - x0;
        for y in y0..y1 {
            let src = &pixels[3 * (y - y0) * w..3 * (y - y0 + 1) * w];
            let dst = 3 * (y * cam.width + x0);
            image.rgb[dst..dst + 3 * w].copy_from_slice(src);
        }
    }
    Ok(image)
}

fn shade_tile(bins: &TileBins, tile: usize, cam: &Camera) -> Vec<f64> {
    let (x0, x1, y0, y1) = bins.tile_pixels(tile, cam);
    let list = bins.tile_entries(tile);
    let mut out = Vec::with_capacity(3 * (x1 - x0) * (y1 - y0));
    for py in y0..y1 {
        for px in x0..x1 {
            let mut transmittance = 1.0;
            let mut color = [0.0; 3];
            for &k in list {
                let splat = &bins.splats[k as usize];
                let Some((alpha, _, _)) = splat_alpha(splat, px, py) else {
                    continue;
                };
                let weight = transmittance * alpha;
                for c in 0..3 {
                    color[c] += weight * splat.color[c];
                }
                transmittance *= 1.0 - alpha;
                if transmittance < MIN_TRANSMITTANCE {
                    break;
                }
            }
            out.extend_from_slice(&color);
        }
    }
    out
}
