//! Pinhole camera: world-to-camera rigid transform plus intrinsics.
//!
//! Camera space is right-handed with `+z` forward and `+y` pointing down the
//! image. Pixel `(px, py)` covers `[px, px + 1) x [py, py + 1)`, so its center
//! sits at `(px + 0.5, py + 0.5)`.

use nalgebra::{Matrix2x3, Matrix3, Vector2};

use crate::error::{Error, Result};
use crate::gaussian::Vec3;

/// Orbit radius used for synthetic and default cameras.
pub const ORBIT_RADIUS: f64 = 2.7;
pub const DEFAULT_NEAR_PLANE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
    pub focal: Vector2<f64>,
    pub principal_point: Vector2<f64>,
    pub width: usize,
    pub height: usize,
    pub near_plane: f64,
}

impl Camera {
    pub fn new(
        rotation: Matrix3<f64>,
        translation: Vec3,
        focal: Vector2<f64>,
        principal_point: Vector2<f64>,
        (width, height): (usize, usize),
    ) -> Self {
        Self {
            rotation,
            translation,
            focal,
            principal_point,
            width,
            height,
            near_plane: DEFAULT_NEAR_PLANE,
        }
    }

    /// Focal length (pixels) at which the `[-1, 1]` extent at the orbit
    /// distance spans 80% of a frame `size` pixels wide.
    pub fn default_focal(size: usize) -> f64 {
        0.4 * size as f64 * ORBIT_RADIUS
    }

    /// Camera at `eye` looking at the world origin, world `+y` up.
    pub fn look_at_origin(eye: Vec3, (width, height): (usize, usize)) -> Self {
        let forward = (-eye).normalize();
        let mut up = Vec3::new(0.0, 1.0, 0.0);
        if forward.cross(&up).norm() < 1e-9 {
            up = Vec3::new(0.0, 0.0, 1.0);
        }
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        let f = Self::default_focal(width.max(height));
        Self::new(
            rotation,
            translation,
            Vector2::new(f, f),
            Vector2::new(width as f64 / 2.0, height as f64 / 2.0),
            (width, height),
        )
    }

    /// Camera on a sphere of `radius` around the origin. Yaw rotates about
    /// world `y`; positive pitch lifts the camera above the equator. Yaw 0,
    /// pitch 0 looks down `+z` from `z = -radius`.
    pub fn orbit(yaw: f64, pitch: f64, radius: f64, resolution: (usize, usize)) -> Self {
        let eye = radius
            * Vec3::new(
                yaw.sin() * pitch.cos(),
                pitch.sin(),
                -yaw.cos() * pitch.cos(),
            );
        Self::look_at_origin(eye, resolution)
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn with_resolution(&self, (width, height): (usize, usize)) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self {
            focal: Vector2::new(self.focal.x * sx, self.focal.y * sy),
            principal_point: Vector2::new(self.principal_point.x * sx, self.principal_point.y * sy),
            width,
            height,
            ..self.clone()
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Camera-space position and its depth.
pub fn world_to_camera(p: &Vec3, cam: &Camera) -> (Vec3, f64) {
    let pc = cam.rotation * p + cam.translation;
    (pc, pc.z)
}

pub fn project_point(p_cam: &Vec3, cam: &Camera) -> Result<Vector2<f64>> {
    check_depth(p_cam, cam)?;
    Ok(Vector2::new(
        cam.focal.x * p_cam.x / p_cam.z + cam.principal_point.x,
        cam.focal.y * p_cam.y / p_cam.z + cam.principal_point.y,
    ))
}

/// Jacobian of [`project_point`] with respect to the camera-space point.
pub fn projection_jacobian(p_cam: &Vec3, cam: &Camera) -> Result<Matrix2x3<f64>> {
    check_depth(p_cam, cam)?;
    Ok(jacobian_unchecked(p_cam, cam))
}

pub(crate) fn jacobian_unchecked(p: &Vec3, cam: &Camera) -> Matrix2x3<f64> {
    let (fx, fy) = (cam.focal.x, cam.focal.y);
    let iz = 1.0 / p.z;
    let iz2 = iz * iz;
    Matrix2x3::new(fx * iz, 0.0, -fx * p.x * iz2, 0.0, fy * iz, -fy * p.y * iz2)
}

fn check_depth(p_cam: &Vec3, cam: &Camera) -> Result<()> {
    if p_cam.z < cam.near_plane {
        Err(Error::BehindCamera {
            z: p_cam.z,
            near: cam.near_plane,
        })
    } else {
        Ok(())
    }
}
