//! Training objectives: adversarial terms, the pose-contrastive loss and the
//! two regularizers on the level-0 anchor positions.
//!
//! The adversarial losses use the usual non-saturating convention
//! (`softplus(fake) + softplus(-real)` for the discriminator,
//! `softplus(-fake)` for the generator). The R1 penalty is taken as a
//! precomputed squared gradient norm.

use crate::error::{Error, Result};
use crate::gaussian::{softplus, Vec3};

#[derive(Clone, Debug, PartialEq)]
pub struct LossWeights {
    /// R1 strength.
    pub lambda_adv: f64,
    pub lambda_pose: f64,
    pub lambda_center: f64,
    pub lambda_knn: f64,
    /// Contrastive temperature.
    pub tau: f64,
    /// Neighbor count for the KNN regularizer.
    pub k: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_adv: 1.0,
            lambda_pose: 1.0,
            lambda_center: 1.0,
            lambda_knn: 10.0,
            tau: 0.1,
            k: 4,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::InvalidConfig(format!("tau must be positive, got {}", self.tau)));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// `(1/N) * |sum_j mu_j|^2`.
pub fn loss_center(positions: &[Vec3]) -> f64 {
    if positions.is_empty() {
        return 0.0;
    }
    let sum: Vec3 = positions.iter().sum();
    sum.norm_squared() / positions.len() as f64
}

/// Gradient of [`loss_center`] with respect to each position.
pub fn loss_center_grad(positions: &[Vec3]) -> Vec<Vec3> {
    if positions.is_empty() {
        return Vec::new();
    }
    let sum: Vec3 = positions.iter().sum();
    let g = sum * (2.0 / positions.len() as f64);
    vec![g; positions.len()]
}

/// For each point, the indices of its `k` nearest other points, nearest first.
/// Equal distances are broken by the lower index.
pub fn knn_indices(positions: &[Vec3], k: usize) -> Result<Vec<Vec<usize>>> {
    let n = positions.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidK { k, n });
    }
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    Ok(positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            scratch.clear();
            scratch.extend(
                positions
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(j, q)| ((p - q).norm_squared(), j)),
            );
            let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < scratch.len() {
                scratch.select_nth_unstable_by(k - 1, by_distance);
            }
            let nearest = &mut scratch[..k];
            nearest.sort_unstable_by(by_distance);
            nearest.iter().map(|&(_, j)| j).collect()
        })
        .collect())
}

/// `(1/(N K)) * sum_j |sum_k (mu_j - knn(mu_j, k))|^2`, summing the neighbor
/// differences before taking the norm.
pub fn loss_knn(positions: &[Vec3], k: usize) -> Result<f64> {
    let neighbors = knn_indices(positions, k)?;
    Ok(knn_value(positions, &neighbors, k))
}

fn knn_residuals(positions: &[Vec3], neighbors: &[Vec<usize>]) -> Vec<Vec3> {
    positions
        .iter()
        .zip(neighbors)
        .map(|(p, nn)| nn.iter().map(|&j| p - positions[j]).sum())
        .collect()
}

fn knn_value(positions: &[Vec3], neighbors: &[Vec<usize>], k: usize) -> f64 {
    let total: f64 = knn_residuals(positions, neighbors).iter().map(|v| v.norm_squared()).sum();
    total / (positions.len() * k) as f64
}

/// Value and gradient of [`loss_knn`], holding the neighbor assignment fixed.
pub fn loss_knn_with_grad(positions: &[Vec3], k: usize) -> Result<(f64, Vec<Vec3>)> {
    let neighbors = knn_indices(positions, k)?;
    let residuals = knn_residuals(positions, &neighbors);
    let norm = 2.0 / (positions.len() * k) as f64;
    let mut grad = vec![Vec3::zeros(); positions.len()];
    for (j, (v, nn)) in residuals.iter().zip(&neighbors).enumerate() {
        grad[j] += v * (norm * k as f64);
        for &i in nn {
            grad[i] -= v * norm;
        }
    }
    Ok((knn_value(positions, &neighbors, k), grad))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbeddingSource {
    Image,
    Camera,
}

/// A batch of pose embeddings, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseEmbeddingBatch {
    pub embeddings: Vec<Vec<f64>>,
    pub source: EmbeddingSource,
}

impl PoseEmbeddingBatch {
    pub fn new(embeddings: Vec<Vec<f64>>, source: EmbeddingSource) -> Self {
        Self { embeddings, source }
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }
}

fn unit_rows(batch: &PoseEmbeddingBatch) -> Result<Vec<Vec<f64>>> {
    batch
        .embeddings
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0) {
                return Err(Error::ZeroNormEmbedding(i));
            }
            Ok(e.iter().map(|v| v / norm).collect())
        })
        .collect()
}

/// Cross-entropy of cosine similarities over temperature, positives on the
/// diagonal, averaged over the batch (image to camera direction only).
pub fn loss_pose_contrastive(p_img: &PoseEmbeddingBatch, p_cam: &PoseEmbeddingBatch, tau: f64) -> Result<f64> {
    let b = p_img.len();
    if b == 0 || b != p_cam.len() {
        return Err(Error::ShapeMismatch(format!("batch sizes {} and {}", b, p_cam.len())));
    }
    let d = p_img.embeddings[0].len();
    if p_img.embeddings.iter().chain(&p_cam.embeddings).any(|e| e.len() != d) {
        return Err(Error::ShapeMismatch("embedding dimensions differ".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidConfig(format!("tau must be positive, got {tau}")));
    }
    let img = unit_rows(p_img)?;
    let cam = unit_rows(p_cam)?;
    let total: f64 = img
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let logits: Vec<f64> = cam
                .iter()
                .map(|c| a.iter().zip(c).map(|(x, y)| x * y).sum::<f64>() / tau)
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
            lse - logits[i]
        })
        .sum();
    Ok(total / b as f64)
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Discriminator loss: `mean softplus(fake) + mean softplus(-real) + lambda * r1`.
pub fn adv_d_loss(real_logits: &[f64], fake_logits: &[f64], r1_grad_sq_norm: f64, lambda: f64) -> f64 {
    let fake: Vec<f64> = fake_logits.iter().map(|&t| softplus(t)).collect();
    let real: Vec<f64> = real_logits.iter().map(|&t| softplus(-t)).collect();
    mean(&fake) + mean(&real) + lambda * r1_grad_sq_norm
}

/// Generator loss: `mean softplus(-fake)`.
pub fn adv_g_loss(fake_logits: &[f64]) -> f64 {
    let v: Vec<f64> = fake_logits.iter().map(|&t| softplus(-t)).collect();
    mean(&v)
}

/// Individual objective values combined by [`total_loss`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents {
    pub adv: f64,
    pub pose: f64,
    pub center: f64,
    pub knn: f64,
}

pub fn total_loss(c: &LossComponents, w: &LossWeights) -> f64 {
    c.adv + w.lambda_pose * c.pose + w.lambda_center * c.center + w.lambda_knn * c.knn
}
