//! `hgs`: synthesize targets, fit hierarchical Gaussian scenes, render and
//! inspect them.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "hgs", version, about = "Hierarchical 3D Gaussian scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic ground-truth scene into target views.
    Synth(SynthArgs),
    /// Fit a hierarchical scene to target views.
    Fit(FitArgs),
    /// Render a scene from one or more poses.
    Render(RenderArgs),
    /// Render each hierarchy level separately plus the composite.
    RenderLevels(RenderLevelsArgs),
    /// Print counts, scale statistics and the invariant check.
    Info(InfoArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Spec {
    BlobCluster,
    TwoToneSphere,
    CheckerCard,
}

impl Spec {
    fn name(self) -> &'static str {
        match self {
            Spec::BlobCluster => "blob-cluster",
            Spec::TwoToneSphere => "two-tone-sphere",
            Spec::CheckerCard => "checker-card",
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, Default, PartialEq, Eq)]
enum Format {
    #[default]
    Png,
    Ppm,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_enum)]
    spec: Spec,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ground-truth scene file to write.
    #[arg(long)]
    out_scene: PathBuf,
    /// Directory for view_NNN.ppm and cameras.txt.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..))]
    views: u32,
    /// Square frame size in pixels.
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u32).range(1..))]
    res: u32,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Directory of target .ppm images, used in file-name order.
    #[arg(long, value_parser = existing_dir)]
    targets: PathBuf,
    /// Camera file with one pose per target image.
    #[arg(long, value_parser = existing_file)]
    cameras: PathBuf,
    #[arg(long, value_parser = existing_file)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_scene: PathBuf,
    /// Loss curve CSV (iteration,loss,psnr).
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
struct Poses {
    /// Camera file; every pose is rendered.
    #[arg(long, value_parser = existing_file)]
    camera: Option<PathBuf>,
    /// Number of poses sampled along the yaw/pitch sweep.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    orbit: Option<u32>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long, value_parser = existing_file)]
    scene: PathBuf,
    #[command(flatten)]
    poses: Poses,
    /// Square frame size; defaults to the scene's stored resolution.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    res: Option<u32>,
    /// Output prefix; images are written as PREFIX_NNN.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    /// Multiply every rendered scale by this factor.
    #[arg(long)]
    shrink_factor: Option<f64>,
}

#[derive(Args, Debug)]
struct RenderLevelsArgs {
    #[arg(long, value_parser = existing_file)]
    scene: PathBuf,
    #[command(flatten)]
    poses: Poses,
    /// Which pose of the list to use.
    #[arg(long, default_value_t = 0)]
    view: usize,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    res: Option<u32>,
    /// Images are written as PREFIX_level_L and PREFIX_composite.
    #[arg(long)]
    out_prefix: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct InfoSource {
    #[arg(long, value_parser = existing_file)]
    scene: Option<PathBuf>,
    /// Describe the initialization a config file would produce.
    #[arg(long, value_parser = existing_file)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InfoArgs {
    #[command(flatten)]
    source: InfoSource,
}

fn existing_file(s: &str) -> Result<PathBuf, String> {
    let path = PathBuf::from(s);
    if path.is_file() {
        Ok(path)
    } else {
        Err(format!("no such file: {s}"))
    }
}

fn existing_dir(s: &str) -> Result<PathBuf, String> {
    let path = PathBuf::from(s);
    if path.is_dir() {
        Ok(path)
    } else {
        Err(format!("no such directory: {s}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => err.exit(),
        Err(err) => {
            let _ = err.print();
            eprintln!("\n{}", Cli::command().render_usage());
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Synth(args) => commands::synth(&args),
        Command::Fit(args) => commands::fit(&args),
        Command::Render(args) => commands::render(&args),
        Command::RenderLevels(args) => commands::render_levels(&args),
        Command::Info(args) => commands::info(&args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
