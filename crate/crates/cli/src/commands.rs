use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use hgs_core::camera::ORBIT_RADIUS;
use hgs_core::hierarchy::{build_scene, init_residuals, shrink_scales};
use hgs_core::io::{
    format_cameras, parse_config, read_cameras, read_config, read_image_ppm, read_scene, write_cameras,
    write_image_png, write_image_ppm, write_scene,
};
use hgs_core::raster::render_tiled;
use hgs_core::train::{fit_observed, make_synthetic_target};
use hgs_core::{Camera, Image, RawGaussian, Scene};

use crate::{FitArgs, Format, InfoArgs, Poses, RenderArgs, RenderLevelsArgs, SynthArgs};

const DEFAULT_RES: usize = 256;
const ORBIT_YAW: (f64, f64) = (-0.4, 0.4);
const ORBIT_PITCH: (f64, f64) = (-0.4, 0.1);
/// Files read back hold f32 values.
const FILE_SLACK: f64 = 1e-5;

pub fn synth(args: &SynthArgs) -> Result<ExitCode> {
    let res = args.res as usize;
    let target = make_synthetic_target(args.spec.name(), args.seed, args.views as usize, (res, res))?;
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    for (i, img) in target.images.iter().enumerate() {
        write_image_ppm(img, args.out_dir.join(format!("view_{i:03}.ppm")))?;
    }
    write_cameras(&target.cameras, args.out_dir.join("cameras.txt"))?;
    write_scene(&target.scene, &args.out_scene)?;
    eprintln!(
        "synth: {} views of {} at {res}x{res} -> {}",
        target.images.len(),
        args.spec.name(),
        args.out_dir.display()
    );
    print!("{}", format_cameras(&target.cameras));
    Ok(ExitCode::SUCCESS)
}

fn target_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|entry| entry.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm")));
    paths.sort();
    Ok(paths)
}

pub fn fit(args: &FitArgs) -> Result<ExitCode> {
    let (_, mut cfg, _) = match &args.config {
        Some(path) => read_config(path)?,
        None => parse_config("")?,
    };
    let paths = target_paths(&args.targets)?;
    if paths.is_empty() {
        bail!("no .ppm images in {}", args.targets.display());
    }
    let targets = paths.iter().map(read_image_ppm).collect::<hgs_core::Result<Vec<Image>>>()?;
    let res = (targets[0].width, targets[0].height);
    let cameras = read_cameras(&args.cameras, res)?;
    if cameras.len() != targets.len() {
        bail!("{} camera poses for {} target images", cameras.len(), targets.len());
    }
    cfg.camera_count = targets.len();
    eprintln!(
        "fit: {} views at {}x{}, {} gaussians, {} iterations",
        targets.len(),
        res.0,
        res.1,
        cfg.hierarchy.total_count(),
        cfg.iterations
    );

    let file = File::create(&args.report).with_context(|| format!("creating {}", args.report.display()))?;
    let mut report = BufWriter::new(file);
    writeln!(report, "iteration,loss,psnr")?;
    let mut write_error = None;
    let progress_every = (cfg.iterations / 20).max(1);
    let outcome = fit_observed(&targets, &cameras, &cfg, |r| {
        if write_error.is_none() {
            if let Err(e) = writeln!(report, "{},{},{}", r.iteration, r.loss, r.psnr) {
                write_error = Some(e);
            }
        }
        if r.iteration % progress_every == 0 {
            eprintln!("  iteration {:>6}  loss {:.6e}  psnr {:.2}", r.iteration, r.loss, r.psnr);
        }
    });
    report.flush()?;
    if let Some(e) = write_error {
        return Err(e).context("writing report");
    }
    let fitted = outcome?;
    write_scene(&fitted.scene, &args.out_scene)?;
    eprintln!(
        "fit: final loss {:.6e}, mean psnr {:.2} dB, {:.1}s",
        fitted.final_loss,
        fitted.mean_psnr(),
        fitted.wall_time
    );
    if !fitted.invariants_held() {
        eprintln!("fit: hierarchy invariants failed at a checkpoint");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn lerp((lo, hi): (f64, f64), t: f64) -> f64 {
    lo + (hi - lo) * t
}

/// `n` poses with yaw and pitch swept together across their ranges.
pub fn orbit_poses(n: usize, res: (usize, usize)) -> Vec<Camera> {
    (0..n)
        .map(|i| {
            let t = if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
            Camera::orbit(lerp(ORBIT_YAW, t), lerp(ORBIT_PITCH, t), ORBIT_RADIUS, res)
        })
        .collect()
}

fn resolve_res(scene: &Scene, res: Option<u32>) -> (usize, usize) {
    match (res, scene.config.image_resolution) {
        (Some(r), _) => (r as usize, r as usize),
        (None, Some((h, w))) => (w, h),
        (None, None) => (DEFAULT_RES, DEFAULT_RES),
    }
}

fn cameras_for(poses: &Poses, res: (usize, usize)) -> Result<Vec<Camera>> {
    match (&poses.camera, poses.orbit) {
        (Some(path), _) => Ok(read_cameras(path, res)?),
        (None, Some(n)) => Ok(orbit_poses(n as usize, res)),
        (None, None) => bail!("either --camera or --orbit is required"),
    }
}

fn output_path(prefix: &Path, suffix: &str, format: Format) -> PathBuf {
    let ext = match format {
        Format::Png => "png",
        Format::Ppm => "ppm",
    };
    let mut name = prefix.as_os_str().to_owned();
    name.push(format!("_{suffix}.{ext}"));
    PathBuf::from(name)
}

fn save(img: &Image, path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Png => write_image_png(img, path)?,
        Format::Ppm => write_image_ppm(img, path)?,
    }
    Ok(())
}

fn render_to(gaussians: &[RawGaussian], cam: &Camera, path: &Path, format: Format) -> Result<()> {
    let img = render_tiled(gaussians, cam)?;
    save(&img, path, format)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

pub fn render(args: &RenderArgs) -> Result<ExitCode> {
    let mut scene = read_scene(&args.scene)?;
    if let Some(factor) = args.shrink_factor {
        scene = shrink_scales(&scene, factor)?;
    }
    let cameras = cameras_for(&args.poses, resolve_res(&scene, args.res))?;
    let gaussians = scene.render_set();
    for (i, cam) in cameras.iter().enumerate() {
        render_to(&gaussians, cam, &output_path(&args.out, &format!("{i:03}"), args.format), args.format)?;
    }
    Ok(ExitCode::SUCCESS)
}

pub fn render_levels(args: &RenderLevelsArgs) -> Result<ExitCode> {
    let scene = read_scene(&args.scene)?;
    let cameras = cameras_for(&args.poses, resolve_res(&scene, args.res))?;
    let Some(cam) = cameras.get(args.view) else {
        bail!("pose {} requested but only {} available", args.view, cameras.len());
    };
    for (l, level) in scene.levels.iter().enumerate() {
        eprintln!("level {l}: {} gaussians", level.gaussians.len());
        let path = output_path(&args.out_prefix, &format!("level_{l}"), args.format);
        render_to(level.gaussians.as_slice(), cam, &path, args.format)?;
    }
    let composite = scene.render_set();
    eprintln!("composite: {} gaussians", composite.len());
    render_to(&composite, cam, &output_path(&args.out_prefix, "composite", args.format), args.format)?;
    Ok(ExitCode::SUCCESS)
}

struct ScaleStats {
    mean: f64,
    min: f64,
    max: f64,
}

fn scale_stats<'a>(gaussians: impl Iterator<Item = &'a RawGaussian>) -> Option<ScaleStats> {
    let (mut sum, mut n) = (0.0, 0usize);
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in gaussians.flat_map(|g| g.scale().iter().copied().collect::<Vec<_>>()) {
        sum += s;
        n += 1;
        min = min.min(s);
        max = max.max(s);
    }
    (n > 0).then(|| ScaleStats { mean: sum / n as f64, min, max })
}

fn describe(label: &str, stats: Option<ScaleStats>) -> String {
    match stats {
        Some(s) => format!("{label} scale mean {:.6e} min {:.6e} max {:.6e}", s.mean, s.min, s.max),
        None => format!("{label} scale n/a"),
    }
}

pub fn info(args: &InfoArgs) -> Result<ExitCode> {
    let (scene, slack) = match (&args.source.scene, &args.source.config) {
        (Some(path), _) => (read_scene(path)?, FILE_SLACK),
        (None, Some(path)) => {
            let (hierarchy, fit, _) = read_config(path)?;
            (build_scene(&init_residuals(&hierarchy, fit.seed, fit.init_sigma), &hierarchy)?, 0.0)
        }
        (None, None) => bail!("either --scene or --config is required"),
    };
    let cfg = &scene.config;
    println!(
        "levels {} base_count {} upsample_ratio {} delta_s {:.9}",
        cfg.levels, cfg.base_count, cfg.upsample_ratio, cfg.delta_s
    );
    for (l, level) in scene.levels.iter().enumerate() {
        println!(
            "level {l}: {} gaussians, {} anchors; {}; {}",
            level.gaussians.len(),
            level.anchors.len(),
            describe("gaussian", scale_stats(level.gaussians.iter())),
            describe("anchor", scale_stats(level.anchors.iter())),
        );
    }
    let background = scene.background.as_ref().map_or(0, |b| b.len());
    println!("background: {background}");
    println!("total: {}", scene.foreground_count() + background);
    println!("{}", describe("gaussians", scale_stats(scene.levels.iter().flat_map(|l| l.gaussians.iter()))));
    println!("{}", describe("anchors", scale_stats(scene.levels.iter().flat_map(|l| l.anchors.iter()))));
    match scene.check_invariants(slack, slack) {
        Ok(()) => {
            println!("invariants: pass");
            Ok(ExitCode::SUCCESS)
        }
        Err(v) => {
            println!("invariants: FAIL {v}");
            eprintln!("error: hierarchy invariant violated at {v}");
            Ok(ExitCode::from(1))
        }
    }
}
