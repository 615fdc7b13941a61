//! Scene file layout (all little endian):
//!
//! ```text
//! "GSHS" | u16 version | u32 L | u32 N | u32 r | f32 delta_s | u32 flags
//! [u32 height | u32 width]                      if flags & HAS_RESOLUTION
//! per level: u32 count | gaussian block | anchor block
//! [u32 count | gaussian block]                  if flags & HAS_BACKGROUND
//! ```
//!
//! A block for `n` Gaussians is the f32 arrays `mu[3n]`, `log_scale[3n]`,
//! `quat[4n]`, `opacity_logit[n]`, `color_logit[3n]` in that order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::gaussian::{GaussianSet, Quat, RawGaussian, Vec3};
use crate::hierarchy::{HierarchyConfig, Level, Scene};

pub const SCENE_MAGIC: [u8; 4] = *b"GSHS";
pub const SCENE_VERSION: u16 = 1;

const HAS_BACKGROUND: u32 = 1;
const HAS_RESOLUTION: u32 = 2;
/// f32 values stored per Gaussian.
const FLOATS_PER_GAUSSIAN: usize = 14;

pub fn write_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_scene(scene)).map_err(|e| Error::io(path, e))
}

pub fn read_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_scene(&bytes)
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("count fits in u32").to_le_bytes());
}

fn put_f32(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&(v as f32).to_le_bytes());
}

fn put_block(out: &mut Vec<u8>, set: &GaussianSet) {
    for g in set.iter() {
        g.mu.iter().for_each(|&v| put_f32(out, v));
    }
    for g in set.iter() {
        g.log_scale.iter().for_each(|&v| put_f32(out, v));
    }
    for g in set.iter() {
        g.quat.iter().for_each(|&v| put_f32(out, v));
    }
    for g in set.iter() {
        put_f32(out, g.opacity_logit);
    }
    for g in set.iter() {
        g.color_logit.iter().for_each(|&v| put_f32(out, v));
    }
}

/// Serializes `scene`, narrowing every value to f32.
pub fn encode_scene(scene: &Scene) -> Vec<u8> {
    let cfg = &scene.config;
    let mut out = Vec::new();
    out.extend_from_slice(&SCENE_MAGIC);
    out.extend_from_slice(&SCENE_VERSION.to_le_bytes());
    put_u32(&mut out, cfg.levels);
    put_u32(&mut out, cfg.base_count);
    put_u32(&mut out, cfg.upsample_ratio);
    put_f32(&mut out, cfg.delta_s);
    let mut flags = 0;
    if scene.background.is_some() {
        flags |= HAS_BACKGROUND;
    }
    if cfg.image_resolution.is_some() {
        flags |= HAS_RESOLUTION;
    }
    put_u32(&mut out, flags as usize);
    if let Some((h, w)) = cfg.image_resolution {
        put_u32(&mut out, h);
        put_u32(&mut out, w);
    }
    for level in &scene.levels {
        put_u32(&mut out, level.gaussians.len());
        put_block(&mut out, &level.gaussians);
        put_block(&mut out, &level.anchors);
    }
    if let Some(bg) = &scene.background {
        put_u32(&mut out, bg.len());
        put_block(&mut out, bg);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::TruncatedFile);
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(4).ok_or(Error::TruncatedFile)?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect())
    }

    fn block(&mut self, n: usize) -> Result<GaussianSet> {
        if n.saturating_mul(FLOATS_PER_GAUSSIAN * 4) > self.bytes.len() {
            return Err(Error::TruncatedFile);
        }
        let mu = self.f32s(3 * n)?;
        let log_scale = self.f32s(3 * n)?;
        let quat = self.f32s(4 * n)?;
        let opacity = self.f32s(n)?;
        let color = self.f32s(3 * n)?;
        Ok((0..n)
            .map(|i| RawGaussian {
                mu: Vec3::from_column_slice(&mu[3 * i..3 * i + 3]),
                log_scale: Vec3::from_column_slice(&log_scale[3 * i..3 * i + 3]),
                quat: Quat::from_column_slice(&quat[4 * i..4 * i + 4]),
                opacity_logit: opacity[i],
                color_logit: Vec3::from_column_slice(&color[3 * i..3 * i + 3]),
            })
            .collect())
    }
}

pub fn decode_scene(bytes: &[u8]) -> Result<Scene> {
    let mut r = Reader { bytes };
    if r.take(4).map_err(|_| Error::BadMagic)? != SCENE_MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.u16()?;
    if version != SCENE_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: SCENE_VERSION,
        });
    }
    let levels = r.u32()? as usize;
    let base_count = r.u32()? as usize;
    let ratio = r.u32()? as usize;
    let delta_s = r.f32s(1)?[0];
    let flags = r.u32()?;
    if flags & !(HAS_BACKGROUND | HAS_RESOLUTION) != 0 {
        return Err(Error::CountMismatch(format!("unknown header flags {flags:#x}")));
    }
    let mut config = HierarchyConfig::with_delta_s(levels, base_count, ratio, delta_s)?;
    if flags & HAS_RESOLUTION != 0 {
        let h = r.u32()? as usize;
        let w = r.u32()? as usize;
        config.image_resolution = Some((h, w));
    }

    let mut out_levels = Vec::with_capacity(levels);
    for l in 0..levels {
        let count = r.u32()? as usize;
        let expected = config.level_count(l);
        if count != expected {
            return Err(Error::CountMismatch(format!(
                "level {l} declares {count} gaussians, header implies {expected}"
            )));
        }
        let gaussians = r.block(count)?;
        let anchors = r.block(count)?;
        out_levels.push(Level { gaussians, anchors });
    }
    let background = if flags & HAS_BACKGROUND != 0 {
        let count = r.u32()? as usize;
        Some(r.block(count)?)
    } else {
        None
    };
    if !r.bytes.is_empty() {
        return Err(Error::CountMismatch(format!("{} trailing bytes", r.bytes.len())));
    }
    Ok(Scene {
        config,
        levels: out_levels,
        background,
    })
}
