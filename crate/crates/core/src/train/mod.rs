//! Multi-view reconstruction: fit hierarchical residuals to target images by
//! SGD with momentum through the differentiable rasterizer.

mod synthetic;

pub use synthetic::{make_synthetic_target, SyntheticTarget, SYNTHETIC_SPECS};

use std::time::Instant;

use rayon::prelude::*;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::hierarchy::{
    build_scene, init_residuals, scene_backward, HierarchyConfig, InvariantViolation, LevelResiduals,
    ResidualParams, Scene, DEFAULT_INIT_SIGMA,
};
use crate::image::Image;
use crate::losses::{loss_center, loss_center_grad, loss_knn_with_grad, LossWeights};
use crate::raster::{render_backward, render_tiled};

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

/// Per-group SGD step sizes. The defaults are tuned for the image term as
/// defined in [`fit`] at 64x64.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSizes {
    pub position: f64,
    pub scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub color: f64,
}

impl Default for StepSizes {
    fn default() -> Self {
        Self {
            position: 5e-4,
            scale: 2e-3,
            rotation: 5e-4,
            opacity: 2e-2,
            color: 1e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub iterations: usize,
    pub step_sizes: StepSizes,
    pub momentum: f64,
    pub camera_count: usize,
    pub hierarchy: HierarchyConfig,
    pub weights: LossWeights,
    pub seed: u64,
    /// Standard deviation of the initial non-root residuals.
    pub init_sigma: f64,
    /// Invariants are checked every this many iterations (and at the end).
    pub checkpoint_every: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            step_sizes: StepSizes::default(),
            momentum: 0.9,
            camera_count: 8,
            hierarchy: HierarchyConfig::default(),
            weights: LossWeights::default(),
            seed: 0,
            init_sigma: DEFAULT_INIT_SIGMA,
            checkpoint_every: 100,
        }
    }
}

impl FitConfig {
    /// `iterations = 0` is accepted and evaluates the initialization only.
    pub fn validate(&self) -> Result<()> {
        self.hierarchy.validate()?;
        self.weights.validate()?;
        let s = &self.step_sizes;
        for (name, v) in [
            ("position", s.position),
            ("scale", s.scale),
            ("rotation", s.rotation),
            ("opacity", s.opacity),
            ("color", s.color),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("step size for {name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if !(self.init_sigma >= 0.0 && self.init_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("init_sigma must be >= 0, got {}", self.init_sigma)));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::InvalidConfig("checkpoint_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// One point of the loss curve, measured before that iteration's update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loss: f64,
    /// Image term alone.
    pub image_loss: f64,
    /// Mean PSNR over the target views.
    pub psnr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub iteration: usize,
    pub invariants: Result<(), InvariantViolation>,
}

#[derive(Clone, Debug)]
pub struct FitReport {
    pub curve: Vec<IterationRecord>,
    /// PSNR of the final scene against each target.
    pub final_psnr: Vec<f64>,
    pub wall_time: f64,
    pub scene: Scene,
    pub residuals: Vec<LevelResiduals>,
    pub checkpoints: Vec<Checkpoint>,
    /// Loss of the final scene.
    pub final_loss: f64,
}

impl FitReport {
    pub fn losses(&self) -> Vec<f64> {
        self.curve.iter().map(|r| r.loss).collect()
    }

    pub fn mean_psnr(&self) -> f64 {
        mean_or_cap(&self.final_psnr)
    }

    pub fn invariants_held(&self) -> bool {
        self.checkpoints.iter().all(|c| c.invariants.is_ok())
    }
}

fn mean_or_cap(values: &[f64]) -> f64 {
    if values.is_empty() {
        PSNR_CAP
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// `10 log10(1 / MSE)`, capped at [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(psnr_from_mse(mse(a, b)))
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    }
}

fn mse(a: &Image, b: &Image) -> f64 {
    if a.rgb.is_empty() {
        return 0.0;
    }
    a.rgb.iter().zip(&b.rgb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.rgb.len() as f64
}

/// Fits from a fresh initialization drawn with `cfg.seed`.
///
/// The objective is the squared image error summed over pixels and channels
/// and averaged over views, plus the weighted center and KNN terms on the
/// level-0 anchor positions.
pub fn fit(targets: &[Image], cameras: &[Camera], cfg: &FitConfig) -> Result<FitReport> {
    fit_observed(targets, cameras, cfg, |_| {})
}

/// [`fit`] calling `observe` after each loss evaluation, before the update.
pub fn fit_observed(
    targets: &[Image],
    cameras: &[Camera],
    cfg: &FitConfig,
    observe: impl FnMut(&IterationRecord),
) -> Result<FitReport> {
    cfg.validate()?;
    let residuals = init_residuals(&cfg.hierarchy, cfg.seed, cfg.init_sigma);
    fit_from(targets, cameras, cfg, residuals, observe)
}

/// Value of the objective for one set of residuals, with gradients.
struct Evaluation {
    scene: Scene,
    loss: f64,
    image_loss: f64,
    view_mse: Vec<f64>,
    grads: Vec<LevelResiduals>,
}

/// [`fit_observed`] starting from explicit residuals.
pub fn fit_from(
    targets: &[Image],
    cameras: &[Camera],
    cfg: &FitConfig,
    mut residuals: Vec<LevelResiduals>,
    mut observe: impl FnMut(&IterationRecord),
) -> Result<FitReport> {
    cfg.validate()?;
    check_views(targets, cameras)?;
    let start = Instant::now();
    let mut velocity: Vec<LevelResiduals> = residuals.iter().map(|r| LevelResiduals::zeros(r.len())).collect();
    let mut curve = Vec::with_capacity(cfg.iterations);
    let mut checkpoints = Vec::new();

    for iteration in 0..cfg.iterations {
        let eval = evaluate(targets, cameras, cfg, &residuals, true)?;
        if iteration % cfg.checkpoint_every == 0 {
            checkpoints.push(Checkpoint {
                iteration,
                invariants: eval.scene.check_invariants(0.0, 0.0),
            });
        }
        let record = IterationRecord {
            iteration,
            loss: eval.loss,
            image_loss: eval.image_loss,
            psnr: mean_or_cap(&eval.view_mse.iter().map(|&m| psnr_from_mse(m)).collect::<Vec<_>>()),
        };
        observe(&record);
        curve.push(record);
        if !eval.loss.is_finite() {
            return Err(Error::DivergedLoss {
                iteration,
                value: eval.loss,
            });
        }
        sgd_step(&mut residuals, &mut velocity, &eval.grads, cfg);
    }

    let last = evaluate(targets, cameras, cfg, &residuals, false)?;
    if !last.loss.is_finite() {
        return Err(Error::DivergedLoss {
            iteration: cfg.iterations,
            value: last.loss,
        });
    }
    checkpoints.push(Checkpoint {
        iteration: cfg.iterations,
        invariants: last.scene.check_invariants(0.0, 0.0),
    });
    Ok(FitReport {
        curve,
        final_psnr: last.view_mse.iter().map(|&m| psnr_from_mse(m)).collect(),
        wall_time: start.elapsed().as_secs_f64(),
        scene: last.scene,
        residuals,
        checkpoints,
        final_loss: last.loss,
    })
}

fn check_views(targets: &[Image], cameras: &[Camera]) -> Result<()> {
    if targets.len() != cameras.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} targets but {} cameras",
            targets.len(),
            cameras.len()
        )));
    }
    for (i, (t, c)) in targets.iter().zip(cameras).enumerate() {
        if t.width != c.width || t.height != c.height {
            return Err(Error::ShapeMismatch(format!(
                "view {i}: target is {}x{}, camera is {}x{}",
                t.width, t.height, c.width, c.height
            )));
        }
    }
    Ok(())
}

/// Image term: squared error summed over pixels and channels, averaged over
/// views. Regularizers act on the level-0 anchor positions.
fn evaluate(
    targets: &[Image],
    cameras: &[Camera],
    cfg: &FitConfig,
    residuals: &[LevelResiduals],
    with_grads: bool,
) -> Result<Evaluation> {
    let scene = build_scene(residuals, &cfg.hierarchy)?;
    let gaussians = scene.foreground();
    let views = targets.len().max(1) as f64;

    let per_view: Vec<(f64, Option<Vec<crate::gaussian::GaussianGrad>>)> = targets
        .par_iter()
        .zip(cameras.par_iter())
        .map(|(target, cam)| -> Result<_> {
            let render = render_tiled(&gaussians, cam)?;
            let mut residual = render.clone();
            let mut sse = 0.0;
            for (r, t) in residual.rgb.iter_mut().zip(&target.rgb) {
                *r -= t;
                sse += *r * *r;
            }
            let grads = if with_grads {
                for r in residual.rgb.iter_mut() {
                    *r *= 2.0 / views;
                }
                Some(render_backward(&gaussians, cam, &residual)?)
            } else {
                None
            };
            Ok((sse, grads))
        })
        .collect::<Result<_>>()?;

    let image_loss = per_view.iter().map(|(sse, _)| sse).sum::<f64>() / views;
    let view_mse: Vec<f64> = per_view
        .iter()
        .zip(targets)
        .map(|((sse, _), t)| if t.rgb.is_empty() { 0.0 } else { sse / t.rgb.len() as f64 })
        .collect();

    let anchors = scene.root_anchor_positions();
    let w = &cfg.weights;
    let mut loss = image_loss;
    let mut anchor_grad = vec![crate::gaussian::Vec3::zeros(); anchors.len()];
    if w.lambda_center != 0.0 {
        loss += w.lambda_center * loss_center(&anchors);
        for (g, c) in anchor_grad.iter_mut().zip(loss_center_grad(&anchors)) {
            *g += c * w.lambda_center;
        }
    }
    if w.lambda_knn != 0.0 && w.k < anchors.len() {
        let (value, grad) = loss_knn_with_grad(&anchors, w.k)?;
        loss += w.lambda_knn * value;
        for (g, c) in anchor_grad.iter_mut().zip(grad) {
            *g += c * w.lambda_knn;
        }
    }

    let grads = if with_grads {
        let mut total = vec![crate::gaussian::GaussianGrad::default(); gaussians.len()];
        for (_, g) in &per_view {
            for (t, v) in total.iter_mut().zip(g.as_ref().expect("gradients requested")) {
                *t += *v;
            }
        }
        scene_backward(&scene, residuals, &total, Some(&anchor_grad))
    } else {
        Vec::new()
    };
    Ok(Evaluation {
        scene,
        loss,
        image_loss,
        view_mse,
        grads,
    })
}

fn sgd_step(params: &mut [LevelResiduals], velocity: &mut [LevelResiduals], grads: &[LevelResiduals], cfg: &FitConfig) {
    let m = cfg.momentum;
    let s = &cfg.step_sizes;
    let update = |p: &mut ResidualParams, v: &mut ResidualParams, g: &ResidualParams| {
        v.mu = v.mu * m + g.mu;
        v.scale = v.scale * m + g.scale;
        v.quat = v.quat * m + g.quat;
        v.opacity = v.opacity * m + g.opacity;
        v.color = v.color * m + g.color;
        p.mu -= v.mu * s.position;
        p.scale -= v.scale * s.scale;
        p.quat -= v.quat * s.rotation;
        p.opacity -= v.opacity * s.opacity;
        p.color -= v.color * s.color;
    };
    for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grads) {
        for ((pp, vv), gg) in p.iter_params_mut().zip(v.iter_params_mut()).zip(g.iter_params()) {
            update(pp, vv, gg);
        }
    }
}
