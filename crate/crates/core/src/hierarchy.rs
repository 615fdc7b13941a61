//! Coarse-to-fine Gaussian hierarchy.
//!
//! Every level `l` holds `r^l * N` rendered Gaussians `G^l` and the same number
//! of anchors `A^l`. Child `j` at level `l` hangs off anchor `i = j / r` at
//! level `l - 1`; both its rendered Gaussian and its anchor are derived from
//! that parent anchor by [`densify`]. Anchors are never rendered.
//!
//! Level-0 anchors have no parent: their raw residuals are realized directly,
//! with the position squashed through `tanh` so it stays inside `[-1, 1]^3`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::gaussian::{
    identity_quat, logit, rotation_backward, rotation_of, sigmoid, softplus, GaussianGrad,
    GaussianSet, Quat, RawGaussian, Vec3,
};

/// Default residual initialization spread for every level below the root.
pub const DEFAULT_INIT_SIGMA: f64 = 0.02;
pub const DEFAULT_BACKGROUND_RADIUS: f64 = 3.0;
pub const DEFAULT_BACKGROUND_COUNT: usize = 10_000;
pub const INIT_OPACITY: f64 = 0.1;

/// `-ln(sqrt(H W) / (L sqrt(N)))`, the per-level log-scale decrement.
pub fn delta_s(height: usize, width: usize, levels: usize, base_count: usize) -> Result<f64> {
    if height == 0 || width == 0 || levels == 0 || base_count == 0 {
        return Err(Error::InvalidConfig(
            "resolution, level count and base count must be positive".into(),
        ));
    }
    let pixels = ((height * width) as f64).sqrt();
    let value = -(pixels / (levels as f64 * (base_count as f64).sqrt())).ln();
    if value >= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "scale decrement {value} is not negative for {height}x{width}, L={levels}, N={base_count}"
        )));
    }
    Ok(value)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HierarchyConfig {
    pub levels: usize,
    pub base_count: usize,
    pub upsample_ratio: usize,
    pub delta_s: f64,
    /// `(height, width)` the decrement was derived from, when known.
    pub image_resolution: Option<(usize, usize)>,
}

impl Default for HierarchyConfig {
    /// `N = 256`, `r = 4`, `L = 5` at 256x256.
    fn default() -> Self {
        Self::for_resolution(5, 256, 4, (256, 256)).expect("default hierarchy is valid")
    }
}

impl HierarchyConfig {
    pub fn for_resolution(
        levels: usize,
        base_count: usize,
        upsample_ratio: usize,
        (height, width): (usize, usize),
    ) -> Result<Self> {
        let ds = delta_s(height, width, levels, base_count)?;
        let mut cfg = Self::with_delta_s(levels, base_count, upsample_ratio, ds)?;
        cfg.image_resolution = Some((height, width));
        Ok(cfg)
    }

    pub fn with_delta_s(
        levels: usize,
        base_count: usize,
        upsample_ratio: usize,
        delta_s: f64,
    ) -> Result<Self> {
        let cfg = Self {
            levels,
            base_count,
            upsample_ratio,
            delta_s,
            image_resolution: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.base_count == 0 || self.upsample_ratio == 0 {
            return Err(Error::InvalidConfig(
                "levels, base_count and upsample_ratio must all be >= 1".into(),
            ));
        }
        if !(self.delta_s < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "delta_s must be negative, got {}",
                self.delta_s
            )));
        }
        if self.checked_total().is_none() {
            return Err(Error::InvalidConfig("gaussian count overflows".into()));
        }
        Ok(())
    }

    /// `r^l * N`.
    pub fn level_count(&self, level: usize) -> usize {
        self.upsample_ratio.pow(level as u32) * self.base_count
    }

    fn checked_total(&self) -> Option<usize> {
        (0..self.levels).try_fold(0usize, |acc, l| {
            let per = self.upsample_ratio.checked_pow(l as u32)?.checked_mul(self.base_count)?;
            acc.checked_add(per)
        })
    }

    /// Number of rendered foreground Gaussians, `sum_l r^l N`.
    pub fn total_count(&self) -> usize {
        (0..self.levels).map(|l| self.level_count(l)).sum()
    }

    pub fn parent_index(&self, child: usize) -> usize {
        child / self.upsample_ratio
    }
}

/// Raw residual parameters of one Gaussian or anchor.
///
/// `mu` is pre-`tanh` and `scale` pre-`-softplus`; the remaining fields are
/// added to the parent's raw values unchanged.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualParams {
    pub mu: Vec3,
    pub scale: Vec3,
    pub quat: Quat,
    pub opacity: f64,
    pub color: Vec3,
}

impl Default for ResidualParams {
    fn default() -> Self {
        Self {
            mu: Vec3::zeros(),
            scale: Vec3::zeros(),
            quat: Quat::zeros(),
            opacity: 0.0,
            color: Vec3::zeros(),
        }
    }
}

impl std::ops::AddAssign for ResidualParams {
    fn add_assign(&mut self, rhs: Self) {
        self.mu += rhs.mu;
        self.scale += rhs.scale;
        self.quat += rhs.quat;
        self.opacity += rhs.opacity;
        self.color += rhs.color;
    }
}

impl ResidualParams {
    pub fn is_finite(&self) -> bool {
        self.mu.iter().chain(self.scale.iter()).chain(self.quat.iter()).chain(self.color.iter()).all(|v| v.is_finite())
            && self.opacity.is_finite()
    }
}

/// Residual after the output activations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActivatedResidual {
    /// In `(-1, 1)^3`.
    pub mu: Vec3,
    /// Strictly negative.
    pub scale: Vec3,
    pub quat: Quat,
    pub opacity: f64,
    pub color: Vec3,
}

pub fn activate(raw: &ResidualParams) -> ActivatedResidual {
    ActivatedResidual {
        mu: raw.mu.map(f64::tanh),
        scale: raw.scale.map(|v| -softplus(v)),
        quat: raw.quat,
        opacity: raw.opacity,
        color: raw.color,
    }
}

/// Residuals for all Gaussians (`G-hat`) and anchors (`A-hat`) of one level.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LevelResiduals {
    pub gaussians: Vec<ResidualParams>,
    pub anchors: Vec<ResidualParams>,
}

impl LevelResiduals {
    pub fn zeros(count: usize) -> Self {
        Self {
            gaussians: vec![ResidualParams::default(); count],
            anchors: vec![ResidualParams::default(); count],
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn iter_params(&self) -> impl Iterator<Item = &ResidualParams> {
        self.gaussians.iter().chain(self.anchors.iter())
    }

    pub fn iter_params_mut(&mut self) -> impl Iterator<Item = &mut ResidualParams> {
        self.gaussians.iter_mut().chain(self.anchors.iter_mut())
    }
}

/// Activates every residual of a level: `(G-hat, A-hat)`.
pub fn activate_residuals(raw: &LevelResiduals) -> (Vec<ActivatedResidual>, Vec<ActivatedResidual>) {
    (
        raw.gaussians.iter().map(activate).collect(),
        raw.anchors.iter().map(activate).collect(),
    )
}

/// Derives a finer-level Gaussian from `parent` and an activated residual.
///
/// Position moves inside the parent's rotated, scaled frame; log-scale drops by
/// `-res.scale - delta_s`; quaternion, opacity and color add in raw space.
pub fn densify(parent: &RawGaussian, res: &ActivatedResidual, delta_s: f64) -> Result<RawGaussian> {
    let rot = rotation_of(&parent.quat)?;
    let offset = rot * parent.scale().component_mul(&res.mu);
    Ok(RawGaussian {
        mu: parent.mu + offset,
        log_scale: parent.log_scale + res.scale + Vec3::repeat(delta_s),
        quat: parent.quat + res.quat,
        opacity_logit: parent.opacity_logit + res.opacity,
        color_logit: parent.color_logit + res.color,
    })
}

/// Reverse of [`densify`] composed with [`activate`]: returns the gradient on
/// the parent and on the raw residual.
pub fn densify_backward(
    parent: &RawGaussian,
    raw: &ResidualParams,
    grad_child: &GaussianGrad,
) -> (GaussianGrad, ResidualParams) {
    let rot = rotation_of(&parent.quat).expect("parent quaternion was valid in the forward pass");
    let scale = parent.scale();
    let t = raw.mu.map(f64::tanh);
    let local = scale.component_mul(&t);
    let gv = grad_child.mu;
    let rt_gv = rot.transpose() * gv;

    let grad_parent = GaussianGrad {
        mu: gv,
        log_scale: grad_child.log_scale + rt_gv.component_mul(&local),
        quat: grad_child.quat + rotation_backward(&parent.quat, &(gv * local.transpose())),
        opacity_logit: grad_child.opacity_logit,
        color_logit: grad_child.color_logit,
    };
    let grad_raw = ResidualParams {
        mu: scale.component_mul(&rt_gv).component_mul(&t.map(|v| 1.0 - v * v)),
        scale: -grad_child.log_scale.component_mul(&raw.scale.map(sigmoid)),
        quat: grad_child.quat,
        opacity: grad_child.opacity_logit,
        color: grad_child.color_logit,
    };
    (grad_parent, grad_raw)
}

/// Realizes a level-0 anchor from its raw residual.
pub fn realize_root_anchor(raw: &ResidualParams) -> RawGaussian {
    RawGaussian {
        mu: raw.mu.map(f64::tanh),
        log_scale: raw.scale,
        quat: raw.quat,
        opacity_logit: raw.opacity,
        color_logit: raw.color,
    }
}

fn root_anchor_backward(raw: &ResidualParams, grad: &GaussianGrad) -> ResidualParams {
    ResidualParams {
        mu: grad.mu.component_mul(&raw.mu.map(|v| {
            let t = v.tanh();
            1.0 - t * t
        })),
        scale: grad.log_scale,
        quat: grad.quat,
        opacity: grad.opacity_logit,
        color: grad.color_logit,
    }
}

/// Realized Gaussians and anchors of one level.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Level {
    pub gaussians: GaussianSet,
    pub anchors: GaussianSet,
}

/// Builds level `level >= 1` from the anchors of the level above it.
pub fn build_level(
    anchors_prev: &GaussianSet,
    residuals: &LevelResiduals,
    cfg: &HierarchyConfig,
    level: usize,
) -> Result<Level> {
    let expected_prev = cfg.level_count(level - 1);
    let expected = cfg.level_count(level);
    if anchors_prev.len() != expected_prev {
        return Err(Error::ShapeMismatch(format!(
            "level {level}: expected {expected_prev} parent anchors, got {}",
            anchors_prev.len()
        )));
    }
    check_residual_shape(residuals, expected, level)?;
    let derive = |params: &[ResidualParams]| -> Result<GaussianSet> {
        params
            .iter()
            .enumerate()
            .map(|(j, raw)| densify(&anchors_prev[cfg.parent_index(j)], &activate(raw), cfg.delta_s))
            .collect::<Result<Vec<_>>>()
            .map(GaussianSet::new)
    };
    Ok(Level {
        gaussians: derive(&residuals.gaussians)?,
        anchors: derive(&residuals.anchors)?,
    })
}

fn check_residual_shape(residuals: &LevelResiduals, expected: usize, level: usize) -> Result<()> {
    if residuals.gaussians.len() != expected || residuals.anchors.len() != expected {
        return Err(Error::ShapeMismatch(format!(
            "level {level}: expected {expected} residuals, got {} gaussians and {} anchors",
            residuals.gaussians.len(),
            residuals.anchors.len()
        )));
    }
    Ok(())
}

/// A realized hierarchical scene.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub config: HierarchyConfig,
    pub levels: Vec<Level>,
    pub background: Option<GaussianSet>,
}

impl Scene {
    /// Foreground Gaussians of all levels in level order, then the background.
    pub fn render_set(&self) -> Vec<RawGaussian> {
        let mut out = self.foreground();
        if let Some(bg) = &self.background {
            out.extend_from_slice(bg.as_slice());
        }
        out
    }

    /// Concatenation of every level's rendered Gaussians.
    pub fn foreground(&self) -> Vec<RawGaussian> {
        let mut out = Vec::with_capacity(self.foreground_count());
        for level in &self.levels {
            out.extend_from_slice(level.gaussians.as_slice());
        }
        out
    }

    pub fn foreground_count(&self) -> usize {
        self.levels.iter().map(|l| l.gaussians.len()).sum()
    }

    pub fn root_anchor_positions(&self) -> Vec<Vec3> {
        self.levels.first().map(|l| l.anchors.positions()).unwrap_or_default()
    }

    /// Checks locality and scale monotonicity for every parent/child pair.
    ///
    /// `position_slack` is an absolute world-space tolerance applied before the
    /// local-frame test (zero for in-memory scenes); `scale_slack` is added to
    /// the log-scale bound.
    pub fn check_invariants(&self, position_slack: f64, scale_slack: f64) -> Result<(), InvariantViolation> {
        let cfg = &self.config;
        for l in 1..self.levels.len() {
            let parents = &self.levels[l - 1].anchors;
            for (kind, set) in [(ChildKind::Gaussian, &self.levels[l].gaussians), (ChildKind::Anchor, &self.levels[l].anchors)] {
                for (j, child) in set.iter().enumerate() {
                    let i = cfg.parent_index(j);
                    let Some(parent) = parents.gaussians.get(i) else {
                        return Err(InvariantViolation { level: l, index: j, kind, detail: format!("missing parent anchor {i}") });
                    };
                    check_pair(parent, child, cfg.delta_s, position_slack, scale_slack)
                        .map_err(|detail| InvariantViolation { level: l, index: j, kind, detail })?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChildKind {
    Gaussian,
    Anchor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvariantViolation {
    pub level: usize,
    pub index: usize,
    pub kind: ChildKind,
    pub detail: String,
}

impl std::fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.kind {
            ChildKind::Gaussian => "gaussian",
            ChildKind::Anchor => "anchor",
        };
        write!(f, "level {} {kind} {}: {}", self.level, self.index, self.detail)
    }
}

/// Position of `child` in the local frame of `parent`: `S^-1 R^T (mu_c - mu_p)`.
pub fn local_offset(parent: &RawGaussian, child: &RawGaussian) -> Option<Vec3> {
    let rot = rotation_of(&parent.quat).ok()?;
    Some((rot.transpose() * (child.mu - parent.mu)).component_div(&parent.scale()))
}

fn check_pair(
    parent: &RawGaussian,
    child: &RawGaussian,
    delta_s: f64,
    position_slack: f64,
    scale_slack: f64,
) -> Result<(), String> {
    let local = local_offset(parent, child).ok_or_else(|| "degenerate parent quaternion".to_string())?;
    let scale = parent.scale();
    for k in 0..3 {
        let bound = 1.0 + position_slack / scale[k];
        if !(local[k].abs() < bound) {
            return Err(format!("locality violated on axis {k}: local offset {}", local[k]));
        }
        let limit = parent.log_scale[k] + delta_s + scale_slack;
        if !(child.log_scale[k] < limit) {
            return Err(format!(
                "scale not decreasing on axis {k}: child log-scale {} >= {}",
                child.log_scale[k], limit
            ));
        }
    }
    Ok(())
}

/// Realizes every level of the hierarchy from its residuals.
pub fn build_scene(all: &[LevelResiduals], cfg: &HierarchyConfig) -> Result<Scene> {
    cfg.validate()?;
    if all.len() != cfg.levels {
        return Err(Error::InvalidConfig(format!(
            "expected residuals for {} levels, got {}",
            cfg.levels,
            all.len()
        )));
    }
    check_residual_shape(&all[0], cfg.base_count, 0)?;
    let anchors: GaussianSet = all[0].anchors.iter().map(realize_root_anchor).collect();
    let gaussians = all[0]
        .gaussians
        .iter()
        .zip(anchors.iter())
        .map(|(raw, anchor)| densify(anchor, &activate(raw), cfg.delta_s))
        .collect::<Result<Vec<_>>>()?;
    let mut levels = vec![Level {
        gaussians: GaussianSet::new(gaussians),
        anchors,
    }];
    for l in 1..cfg.levels {
        let next = build_level(&levels[l - 1].anchors, &all[l], cfg, l)?;
        levels.push(next);
    }
    Ok(Scene {
        config: cfg.clone(),
        levels,
        background: None,
    })
}

/// Pulls gradients on the rendered Gaussians (in [`Scene::foreground`] order)
/// and on the level-0 anchor positions back to every raw residual.
pub fn scene_backward(
    scene: &Scene,
    residuals: &[LevelResiduals],
    grad_foreground: &[GaussianGrad],
    grad_root_anchor_mu: Option<&[Vec3]>,
) -> Vec<LevelResiduals> {
    let cfg = &scene.config;
    let offsets: Vec<usize> = scene
        .levels
        .iter()
        .scan(0, |acc, level| {
            let start = *acc;
            *acc += level.gaussians.len();
            Some(start)
        })
        .collect();
    let mut grads: Vec<LevelResiduals> = residuals.iter().map(|r| LevelResiduals::zeros(r.len())).collect();
    // Gradient arriving at each anchor of the level currently being processed.
    let mut anchor_grad = vec![GaussianGrad::default(); scene.levels.last().map_or(0, |l| l.anchors.len())];

    for l in (0..scene.levels.len()).rev() {
        let level_grads = &grad_foreground[offsets[l]..offsets[l] + scene.levels[l].gaussians.len()];
        let parents: &GaussianSet = &scene.levels[l].anchors;
        if l == 0 {
            if let Some(extra) = grad_root_anchor_mu {
                for (g, e) in anchor_grad.iter_mut().zip(extra) {
                    g.mu += e;
                }
            }
            for (j, g) in level_grads.iter().enumerate() {
                let (gp, gr) = densify_backward(&parents[j], &residuals[0].gaussians[j], g);
                grads[0].gaussians[j] = gr;
                anchor_grad[j] += gp;
            }
            for (j, g) in anchor_grad.iter().enumerate() {
                grads[0].anchors[j] = root_anchor_backward(&residuals[0].anchors[j], g);
            }
            break;
        }
        let parents = &scene.levels[l - 1].anchors;
        let mut parent_grad = vec![GaussianGrad::default(); parents.len()];
        for (j, g) in level_grads.iter().enumerate() {
            let i = cfg.parent_index(j);
            let (gp, gr) = densify_backward(&parents[i], &residuals[l].gaussians[j], g);
            grads[l].gaussians[j] = gr;
            parent_grad[i] += gp;
        }
        for (j, g) in anchor_grad.iter().enumerate() {
            let i = cfg.parent_index(j);
            let (gp, gr) = densify_backward(&parents[i], &residuals[l].anchors[j], g);
            grads[l].anchors[j] = gr;
            parent_grad[i] += gp;
        }
        anchor_grad = parent_grad;
    }
    grads
}

/// Initial residuals: identity rotations, root opacity 0.1, root scale
/// `e^{-1/sqrt(N)}`, root positions uniform in `[-0.5, 0.5]^3`, and every
/// other raw value drawn from `N(0, sigma)`.
pub fn init_residuals(cfg: &HierarchyConfig, seed: u64, sigma: f64) -> Vec<LevelResiduals> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    let noise = |rng: &mut ChaCha8Rng| if sigma > 0.0 { normal.sample(rng) } else { 0.0 };
    let random_residual = |rng: &mut ChaCha8Rng| ResidualParams {
        mu: Vec3::from_fn(|_, _| noise(rng)),
        scale: Vec3::from_fn(|_, _| noise(rng)),
        quat: Quat::from_fn(|_, _| noise(rng)),
        opacity: noise(rng),
        color: Vec3::from_fn(|_, _| noise(rng)),
    };

    let root_scale = -1.0 / (cfg.base_count as f64).sqrt();
    let root_anchors = (0..cfg.base_count)
        .map(|_| ResidualParams {
            mu: Vec3::from_fn(|_, _| rng.random_range(-0.5f64..0.5).atanh()),
            scale: Vec3::repeat(root_scale),
            quat: identity_quat(),
            opacity: logit(INIT_OPACITY),
            color: Vec3::zeros(),
        })
        .collect();
    let root_gaussians = (0..cfg.base_count).map(|_| random_residual(&mut rng)).collect();
    let mut out = vec![LevelResiduals {
        gaussians: root_gaussians,
        anchors: root_anchors,
    }];
    for l in 1..cfg.levels {
        let n = cfg.level_count(l);
        let gaussians = (0..n).map(|_| random_residual(&mut rng)).collect();
        let anchors = (0..n).map(|_| random_residual(&mut rng)).collect();
        out.push(LevelResiduals { gaussians, anchors });
    }
    out
}

/// Projects every background Gaussian's position onto the sphere of `radius`.
pub fn build_background(raw: &GaussianSet, radius: f64) -> Result<GaussianSet> {
    raw.iter()
        .enumerate()
        .map(|(i, g)| {
            let n = g.mu.norm();
            if !(n > 1e-8) {
                return Err(Error::DegeneratePosition(i));
            }
            Ok(RawGaussian {
                mu: g.mu * (radius / n),
                ..*g
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(GaussianSet::new)
}

/// Random background shell: `count` Gaussians on a sphere of `radius`.
pub fn random_background(count: usize, radius: f64, seed: u64) -> GaussianSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let spacing = (4.0 * std::f64::consts::PI * radius * radius / count.max(1) as f64).sqrt();
    let raw: GaussianSet = (0..count)
        .map(|_| {
            let mut dir = Vec3::from_fn(|_, _| normal.sample(&mut rng));
            while dir.norm() < 1e-6 {
                dir = Vec3::from_fn(|_, _| normal.sample(&mut rng));
            }
            let tone: f64 = rng.random_range(-1.5..0.5);
            RawGaussian {
                mu: dir,
                log_scale: Vec3::repeat((0.75 * spacing).ln()),
                quat: identity_quat(),
                opacity_logit: logit(0.9),
                color_logit: Vec3::repeat(tone),
            }
        })
        .collect();
    build_background(&raw, radius).expect("directions are non-degenerate")
}

/// Multiplies the realized scale of every rendered Gaussian by `factor`.
pub fn shrink_scales(scene: &Scene, factor: f64) -> Result<Scene> {
    if !(factor > 0.0) {
        return Err(Error::InvalidConfig(format!("shrink factor must be positive, got {factor}")));
    }
    let shift = factor.ln();
    let mut out = scene.clone();
    let shrink = |set: &mut GaussianSet| {
        for g in &mut set.gaussians {
            g.log_scale.add_scalar_mut(shift);
        }
    };
    for level in &mut out.levels {
        shrink(&mut level.gaussians);
    }
    if let Some(bg) = out.background.as_mut() {
        shrink(bg);
    }
    Ok(out)
}
