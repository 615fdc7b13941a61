//! Elementary Gaussian math: quaternions, covariance construction and the
//! scalar activations used when realizing raw parameters.
//!
//! Quaternions are stored as `(w, x, y, z)` in a [`Vector4`]. Raw storage is
//! always pre-activation: scales live in log space, opacity and color are
//! logits, and quaternions are unnormalized until realization.

use nalgebra::{Matrix3, Vector3, Vector4};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Quat = Vector4<f64>;

/// Smallest quaternion norm accepted by [`normalize_quaternion`].
pub const MIN_QUAT_NORM: f64 = 1e-8;

pub fn identity_quat() -> Quat {
    Quat::new(1.0, 0.0, 0.0, 0.0)
}

/// Normalizes `q` to unit length with the canonical sign `w >= 0`.
pub fn normalize_quaternion(q: &Quat) -> Result<Quat> {
    let norm = q.norm();
    if !(norm > MIN_QUAT_NORM) {
        return Err(Error::DegenerateQuaternion(norm));
    }
    let unit = q / norm;
    Ok(if unit[0] < 0.0 { -unit } else { unit })
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn quat_to_rotation(q: &Quat) -> Matrix3<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Rotation of an unnormalized quaternion. Fails on degenerate input.
pub fn rotation_of(q: &Quat) -> Result<Matrix3<f64>> {
    Ok(quat_to_rotation(&normalize_quaternion(q)?))
}

/// Pulls a gradient with respect to `R(q / |q|)` back onto the raw quaternion.
///
/// The sign canonicalization in [`normalize_quaternion`] does not matter here
/// because the rotation is an even function of the quaternion.
pub fn rotation_backward(q_raw: &Quat, grad_r: &Matrix3<f64>) -> Quat {
    let norm = q_raw.norm();
    let q = q_raw / norm;
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let g = grad_r;
    // dR/dw, dR/dx, dR/dy, dR/dz contracted with g.
    let gw = 2.0
        * (-z * g[(0, 1)] + y * g[(0, 2)] + z * g[(1, 0)] - x * g[(1, 2)] - y * g[(2, 0)]
            + x * g[(2, 1)]);
    let gx = 2.0
        * (y * g[(0, 1)] + z * g[(0, 2)] + y * g[(1, 0)] - 2.0 * x * g[(1, 1)] - w * g[(1, 2)]
            + z * g[(2, 0)]
            + w * g[(2, 1)]
            - 2.0 * x * g[(2, 2)]);
    let gy = 2.0
        * (-2.0 * y * g[(0, 0)] + x * g[(0, 1)] + w * g[(0, 2)] + x * g[(1, 0)]
            + z * g[(1, 2)]
            - w * g[(2, 0)]
            + z * g[(2, 1)]
            - 2.0 * y * g[(2, 2)]);
    let gz = 2.0
        * (-2.0 * z * g[(0, 0)] - w * g[(0, 1)] + x * g[(0, 2)] + w * g[(1, 0)]
            - 2.0 * z * g[(1, 1)]
            + y * g[(1, 2)]
            + x * g[(2, 0)]
            + y * g[(2, 1)]);
    let g_unit = Quat::new(gw, gx, gy, gz);
    (g_unit - q * q.dot(&g_unit)) / norm
}

/// Symmetric 3x3 world-space covariance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Covariance3 {
    pub sigma: Matrix3<f64>,
}

impl Covariance3 {
    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let eig = self.sigma.symmetric_eigen();
        let mut ev = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]];
        ev.sort_by(f64::total_cmp);
        ev
    }
}

/// `R diag(exp(log_scale))^2 R^T` for the (possibly unnormalized) quaternion `q`.
pub fn build_covariance(log_scale: &Vec3, q: &Quat) -> Result<Covariance3> {
    let r = rotation_of(q)?;
    let m = r * Matrix3::from_diagonal(&log_scale.map(f64::exp));
    Ok(Covariance3 {
        sigma: m * m.transpose(),
    })
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(1 + e^x)` without overflow for large `|x|`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// One Gaussian in raw (pre-activation) form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawGaussian {
    pub mu: Vec3,
    pub log_scale: Vec3,
    pub quat: Quat,
    pub opacity_logit: f64,
    pub color_logit: Vec3,
}

impl Default for RawGaussian {
    fn default() -> Self {
        Self {
            mu: Vec3::zeros(),
            log_scale: Vec3::zeros(),
            quat: identity_quat(),
            opacity_logit: 0.0,
            color_logit: Vec3::zeros(),
        }
    }
}

impl RawGaussian {
    pub fn scale(&self) -> Vec3 {
        self.log_scale.map(f64::exp)
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn color(&self) -> Vec3 {
        self.color_logit.map(sigmoid)
    }

    pub fn rotation(&self) -> Result<Matrix3<f64>> {
        rotation_of(&self.quat)
    }

    pub fn covariance(&self) -> Result<Covariance3> {
        build_covariance(&self.log_scale, &self.quat)
    }

    pub fn is_finite(&self) -> bool {
        self.mu.iter().all(|v| v.is_finite())
            && self.log_scale.iter().all(|v| v.is_finite())
            && self.quat.iter().all(|v| v.is_finite())
            && self.opacity_logit.is_finite()
            && self.color_logit.iter().all(|v| v.is_finite())
    }
}

/// Gradient of a scalar with respect to every raw field of one Gaussian.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GaussianGrad {
    pub mu: Vec3,
    pub log_scale: Vec3,
    pub quat: Quat,
    pub opacity_logit: f64,
    pub color_logit: Vec3,
}

impl std::ops::AddAssign for GaussianGrad {
    fn add_assign(&mut self, rhs: Self) {
        self.mu += rhs.mu;
        self.log_scale += rhs.log_scale;
        self.quat += rhs.quat;
        self.opacity_logit += rhs.opacity_logit;
        self.color_logit += rhs.color_logit;
    }
}

impl GaussianGrad {
    pub fn max_abs(&self) -> f64 {
        self.mu
            .iter()
            .chain(self.log_scale.iter())
            .chain(self.quat.iter())
            .chain(std::iter::once(&self.opacity_logit))
            .chain(self.color_logit.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// A flat list of Gaussians at one hierarchy level (or the background).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GaussianSet {
    pub gaussians: Vec<RawGaussian>,
}

impl GaussianSet {
    pub fn new(gaussians: Vec<RawGaussian>) -> Self {
        Self { gaussians }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, RawGaussian> {
        self.gaussians.iter()
    }

    pub fn as_slice(&self) -> &[RawGaussian] {
        &self.gaussians
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.gaussians.iter().map(|g| g.mu).collect()
    }
}

impl FromIterator<RawGaussian> for GaussianSet {
    fn from_iter<I: IntoIterator<Item = RawGaussian>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

impl std::ops::Index<usize> for GaussianSet {
    type Output = RawGaussian;

    fn index(&self, index: usize) -> &RawGaussian {
        &self.gaussians[index]
    }
}
