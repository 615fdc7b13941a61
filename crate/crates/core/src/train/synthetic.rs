use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::camera::{Camera, ORBIT_RADIUS};
use crate::error::{Error, Result};
use crate::gaussian::{identity_quat, logit, GaussianSet, Quat, RawGaussian, Vec3};
use crate::hierarchy::{delta_s, HierarchyConfig, Level, Scene};
use crate::image::Image;
use crate::raster::render_reference;

pub const SYNTHETIC_SPECS: [&str; 3] = ["blob-cluster", "two-tone-sphere", "checker-card"];

/// Elevation of views after the first, alternating above and below the equator.
const VIEW_PITCH: f64 = 0.3;

#[derive(Clone, Debug)]
pub struct SyntheticTarget {
    pub scene: Scene,
    pub cameras: Vec<Camera>,
    pub images: Vec<Image>,
}

/// Hand-built ground truth rendered from `camera_count` poses on the orbit.
/// View `i` sits at yaw `2 pi i / camera_count`; view 0 faces the scene head on.
pub fn make_synthetic_target(
    spec: &str,
    seed: u64,
    camera_count: usize,
    (width, height): (usize, usize),
) -> Result<SyntheticTarget> {
    let gaussians = match spec {
        "blob-cluster" => blob_cluster(seed),
        "two-tone-sphere" => two_tone_sphere(seed),
        "checker-card" => checker_card(seed),
        other => return Err(Error::UnknownSpec(other.to_string())),
    };
    let scene = single_level_scene(gaussians, (height, width))?;
    let cameras = orbit_views(camera_count, (width, height));
    let render = scene.render_set();
    let images = cameras
        .iter()
        .map(|cam| render_reference(&render, cam))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticTarget { scene, cameras, images })
}

pub(crate) fn orbit_views(count: usize, res: (usize, usize)) -> Vec<Camera> {
    (0..count)
        .map(|i| {
            let yaw = std::f64::consts::TAU * i as f64 / count as f64;
            let pitch = match i {
                0 => 0.0,
                i if i % 2 == 0 => VIEW_PITCH,
                _ => -VIEW_PITCH,
            };
            Camera::orbit(yaw, pitch, ORBIT_RADIUS, res)
        })
        .collect()
}

fn single_level_scene(gaussians: Vec<RawGaussian>, (height, width): (usize, usize)) -> Result<Scene> {
    let n = gaussians.len();
    let ds = delta_s(height, width, 1, n).unwrap_or(-1.0);
    let config = HierarchyConfig::with_delta_s(1, n, 1, ds)?;
    let set = GaussianSet::new(gaussians);
    Ok(Scene {
        config,
        levels: vec![Level {
            gaussians: set.clone(),
            anchors: set,
        }],
        background: None,
    })
}

fn color_logit(rgb: [f64; 3]) -> Vec3 {
    Vec3::from_fn(|i, _| logit(rgb[i].clamp(0.02, 0.98)))
}

fn random_quat(rng: &mut ChaCha8Rng) -> Quat {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let q = Quat::from_fn(|_, _| normal.sample(rng));
        if q.norm() > 0.1 {
            return q.normalize();
        }
    }
}

fn blob_cluster(seed: u64) -> Vec<RawGaussian> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, 0.07).expect("finite sigma");
    let clusters = [
        (Vec3::new(-0.25, -0.15, 0.1), [0.9, 0.3, 0.2]),
        (Vec3::new(0.25, -0.1, -0.1), [0.2, 0.8, 0.3]),
        (Vec3::new(0.0, 0.25, 0.0), [0.25, 0.35, 0.9]),
        (Vec3::new(0.05, -0.05, 0.3), [0.9, 0.85, 0.3]),
    ];
    let mut out = Vec::new();
    for (center, rgb) in clusters {
        for _ in 0..12 {
            let tint: f64 = rng.random_range(-0.08..0.08);
            out.push(RawGaussian {
                mu: center + Vec3::from_fn(|_, _| jitter.sample(&mut rng)),
                log_scale: Vec3::from_fn(|_, _| rng.random_range(0.04f64..0.09).ln()),
                quat: random_quat(&mut rng),
                opacity_logit: logit(rng.random_range(0.75..0.95)),
                color_logit: color_logit([rgb[0] + tint, rgb[1] + tint, rgb[2] + tint]),
            });
        }
    }
    out
}

fn two_tone_sphere(seed: u64) -> Vec<RawGaussian> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = 120;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let ring = (1.0 - y * y).sqrt();
            let phi = golden * i as f64 + rng.random_range(-0.05..0.05);
            let dir = Vec3::new(ring * phi.cos(), y, ring * phi.sin());
            let rgb = if y > 0.0 { [0.9, 0.25, 0.2] } else { [0.2, 0.35, 0.9] };
            RawGaussian {
                mu: dir * 0.45,
                log_scale: Vec3::repeat(0.09f64.ln()),
                quat: identity_quat(),
                opacity_logit: logit(0.9),
                color_logit: color_logit(rgb),
            }
        })
        .collect()
}

fn checker_card(seed: u64) -> Vec<RawGaussian> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = 8;
    let pitch = 0.8 / cells as f64;
    let mut out = Vec::with_capacity(cells * cells);
    for row in 0..cells {
        for col in 0..cells {
            let x = -0.4 + pitch * (col as f64 + 0.5);
            let y = -0.4 + pitch * (row as f64 + 0.5);
            let light = (row + col) % 2 == 0;
            let v = if light { 0.9 } else { 0.15 } + rng.random_range(-0.03..0.03);
            out.push(RawGaussian {
                mu: Vec3::new(x, y, 0.0),
                log_scale: Vec3::new((0.55 * pitch).ln(), (0.55 * pitch).ln(), 0.005f64.ln()),
                quat: identity_quat(),
                opacity_logit: logit(0.95),
                color_logit: color_logit([v, v, v]),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_sized() {
        let a = make_synthetic_target("blob-cluster", 0, 8, (32, 32)).unwrap();
        let b = make_synthetic_target("blob-cluster", 0, 8, (32, 32)).unwrap();
        assert_eq!(a.images.len(), 8);
        assert_eq!(a.images, b.images);
        for spec in SYNTHETIC_SPECS {
            let t = make_synthetic_target(spec, 3, 2, (16, 16)).unwrap();
            let n = t.scene.foreground_count();
            assert!((20..=200).contains(&n), "{spec}: {n}");
        }
    }

    #[test]
    fn unknown_spec() {
        assert!(matches!(
            make_synthetic_target("teapot", 0, 1, (8, 8)),
            Err(Error::UnknownSpec(_))
        ));
    }

    #[test]
    fn sphere_visible_in_every_view() {
        let t = make_synthetic_target("two-tone-sphere", 1, 6, (32, 32)).unwrap();
        for img in &t.images {
            assert!(img.rgb.iter().any(|&v| v > 0.05));
        }
    }

    #[test]
    fn checker_face_on_has_two_tones() {
        let t = make_synthetic_target("checker-card", 0, 4, (64, 64)).unwrap();
        let img = &t.images[0];
        let greys: Vec<f64> = (0..64).map(|x| img.pixel(x, 32)[0]).collect();
        assert!(greys.iter().any(|&v| v > 0.6));
        assert!(greys.iter().any(|&v| v > 0.02 && v < 0.3));
    }
}
