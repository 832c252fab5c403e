//! `shad3s`: dataset generation, texture maps, training, evaluation and serving.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::UsageError;

#[derive(Debug, Parser)]
#[command(name = "shad3s", version, about = "Sketch, shade and shadow completion toolkit")]
struct Cli {
    /// Flat `key = value` file, or a run manifest of an earlier run.
    /// Flags take precedence over it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Where to write the run manifest (default depends on the command).
    #[arg(long, global = true, value_name = "FILE")]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a corpus of CSG scenes.
    Datagen(DatagenArgs),
    /// Synthesise or validate tonal art maps.
    #[command(subcommand)]
    Tam(TamCommand),
    /// Train a completion model.
    Train(TrainArgs),
    /// Train the solid-count classifier behind the inception score.
    Classifier(ClassifierArgs),
    /// Score a checkpoint on a corpus and/or a progressive grid.
    Eval(EvalArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Complete one contour image.
    Complete(CompleteArgs),
}

#[derive(Debug, Args)]
struct DatagenArgs {
    /// Subset k: scenes have at most this many solids [default: 6]
    #[arg(long)]
    max_solids: Option<usize>,
    /// Scenes per subset [default: 16]
    #[arg(long)]
    scenes: Option<usize>,
    /// Camera/light poses per scene [default: 4]
    #[arg(long)]
    poses: Option<usize>,
    /// Master seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Image side in pixels [default: 256]
    #[arg(long)]
    resolution: Option<usize>,
    /// Build every subset 1..=K instead of only K.
    #[arg(long)]
    all_subsets: bool,
    #[arg(long)]
    background_hatch: bool,
    #[arg(long)]
    no_shadows: bool,
    /// Worker threads; 0 uses every core [default: 0]
    #[arg(long)]
    jobs: Option<usize>,
    /// Texture catalog directory [default: built-in families]
    #[arg(long)]
    tam_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum TamCommand {
    /// Write the shipped families, or one new family, to a directory.
    Synth(TamSynthArgs),
    /// Check nesting and coverage of a family or catalog directory.
    Validate(TamValidateArgs),
}

#[derive(Debug, Args)]
struct TamSynthArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Texture side [default: 1024]
    #[arg(long)]
    size: Option<usize>,
    /// parallel, cross or stipple; omit to write the shipped catalog.
    #[arg(long)]
    style: Option<String>,
    /// Seed of a single synthesised family [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Stroke angle in degrees of a single family [default: 45]
    #[arg(long)]
    angle: Option<f64>,
}

#[derive(Debug, Args)]
struct TamValidateArgs {
    dir: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// dm, sp or se
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// [default: 20]
    #[arg(long)]
    epochs: Option<usize>,
    /// [default: 4]
    #[arg(long)]
    batch_size: Option<usize>,
    /// [default: 0.0002]
    #[arg(long)]
    lr: Option<f64>,
    /// Adversarial weight [default: 0.01]
    #[arg(long)]
    lambda: Option<f64>,
    /// [default: 0.5]
    #[arg(long)]
    beta1: Option<f64>,
    /// [default: 0.999]
    #[arg(long)]
    beta2: Option<f64>,
    /// Seeds initialisation, shuffling and dropout [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Network input side [default: corpus resolution]
    #[arg(long)]
    resolution: Option<usize>,
    /// default or toy [default: default]
    #[arg(long)]
    arch: Option<String>,
    /// Feed ground-truth masks to the second stage (split models).
    #[arg(long)]
    teacher_forcing: bool,
}

#[derive(Debug, Args)]
struct ClassifierArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// [default: 30]
    #[arg(long)]
    epochs: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated subset of psnr, ssim, is [default: psnr,ssim]
    #[arg(long)]
    metrics: Option<String>,
    /// Classifier checkpoint; required for `is`.
    #[arg(long)]
    classifier: Option<PathBuf>,
    /// train, val or test [default: test]
    #[arg(long)]
    split: Option<String>,
    /// pose, pose+lit, pose+lit+shap, txr or all
    #[arg(long)]
    progressive: Option<String>,
    /// Progressive grid rows [default: 4]
    #[arg(long)]
    rows: Option<usize>,
    /// Progressive grid columns [default: 4]
    #[arg(long)]
    cols: Option<usize>,
    /// Progressive grid seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tam_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Checkpoint file or directory [env: SHAD3S_CKPT_DIR]
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// [env: SHAD3S_PORT, default: 8080]
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    tam_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompleteArgs {
    /// Checkpoint file [env: SHAD3S_CKPT_DIR picks its first checkpoint]
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Contour PNG, black strokes on white.
    #[arg(long)]
    contour: Option<PathBuf>,
    /// Light azimuth in degrees, camera-relative.
    #[arg(long, allow_hyphen_values = true)]
    azimuth: Option<f64>,
    /// Light elevation in degrees, in (0, 90].
    #[arg(long)]
    elevation: Option<f64>,
    /// Texture family id.
    #[arg(long)]
    texture: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Texture crop seed [default: derived from the request]
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tam_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Usage(#[from] UsageError),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Runtime(e.into())
            }
        }
    )*};
}

runtime_from!(
    shad3s_core::dataset::DatasetError,
    shad3s_core::tam::TamError,
    shad3s_nn::eval::EvalError
);

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(e)) => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
