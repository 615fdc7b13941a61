//! `key = value` configuration files. `#` starts a comment; blank lines are
//! ignored; every key is optional.
//!
//! | key | default |
//! |-----|---------|
//! | `levels` | 5 |
//! | `base_count` | 256 |
//! | `upsample_ratio` | 4 |
//! | `height`, `width` | 256 |
//! | `delta_s` | derived from the above |
//! | `iterations` | 2000 |
//! | `lr_position`, `lr_scale`, `lr_rotation`, `lr_opacity`, `lr_color` | see [`StepSizes`] |
//! | `momentum` | 0.9 |
//! | `camera_count` | 8 |
//! | `seed` | 0 |
//! | `init_sigma` | 0.02 |
//! | `checkpoint_every` | 100 |
//! | `lambda_adv`, `lambda_pose`, `lambda_center` | 1 |
//! | `lambda_knn` | 10 |
//! | `tau` | 0.1 |
//! | `knn_k` | 4 |

use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hierarchy::HierarchyConfig;
use crate::losses::LossWeights;
use crate::train::{FitConfig, StepSizes};

pub fn read_config(path: impl AsRef<Path>) -> Result<(HierarchyConfig, FitConfig, LossWeights)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

fn value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::ParseError {
        line,
        message: format!("invalid value '{raw}' for {key}"),
    })
}

pub fn parse_config(text: &str) -> Result<(HierarchyConfig, FitConfig, LossWeights)> {
    let mut fit = FitConfig::default();
    let mut weights = LossWeights::default();
    let mut steps = StepSizes::default();
    let (mut levels, mut base_count, mut ratio) = (5usize, 256usize, 4usize);
    let (mut height, mut width) = (256usize, 256usize);
    let mut delta_s: Option<f64> = None;
    let mut seen = HashSet::new();

    for (i, raw_line) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, raw)) = content.split_once('=') else {
            return Err(Error::ParseError {
                line,
                message: format!("expected 'key = value', found '{content}'"),
            });
        };
        let (key, raw) = (key.trim(), raw.trim());
        match key {
            "levels" => levels = value(line, key, raw)?,
            "base_count" => base_count = value(line, key, raw)?,
            "upsample_ratio" => ratio = value(line, key, raw)?,
            "height" => height = value(line, key, raw)?,
            "width" => width = value(line, key, raw)?,
            "delta_s" => delta_s = Some(value(line, key, raw)?),
            "iterations" => fit.iterations = value(line, key, raw)?,
            "lr_position" => steps.position = value(line, key, raw)?,
            "lr_scale" => steps.scale = value(line, key, raw)?,
            "lr_rotation" => steps.rotation = value(line, key, raw)?,
            "lr_opacity" => steps.opacity = value(line, key, raw)?,
            "lr_color" => steps.color = value(line, key, raw)?,
            "momentum" => fit.momentum = value(line, key, raw)?,
            "camera_count" => fit.camera_count = value(line, key, raw)?,
            "seed" => fit.seed = value(line, key, raw)?,
            "init_sigma" => fit.init_sigma = value(line, key, raw)?,
            "checkpoint_every" => fit.checkpoint_every = value(line, key, raw)?,
            "lambda_adv" => weights.lambda_adv = value(line, key, raw)?,
            "lambda_pose" => weights.lambda_pose = value(line, key, raw)?,
            "lambda_center" => weights.lambda_center = value(line, key, raw)?,
            "lambda_knn" => weights.lambda_knn = value(line, key, raw)?,
            "tau" => weights.tau = value(line, key, raw)?,
            "knn_k" => weights.k = value(line, key, raw)?,
            other => return Err(Error::UnknownKey(other.to_string())),
        }
        if !seen.insert(key.to_string()) {
            return Err(Error::ParseError {
                line,
                message: format!("duplicate key {key}"),
            });
        }
    }

    let hierarchy = match delta_s {
        Some(ds) => {
            let mut cfg = HierarchyConfig::with_delta_s(levels, base_count, ratio, ds)?;
            cfg.image_resolution = Some((height, width));
            cfg
        }
        None => HierarchyConfig::for_resolution(levels, base_count, ratio, (height, width))?,
    };
    fit.step_sizes = steps;
    fit.hierarchy = hierarchy.clone();
    fit.weights = weights.clone();
    fit.validate()?;
    Ok((hierarchy, fit, weights))
}
