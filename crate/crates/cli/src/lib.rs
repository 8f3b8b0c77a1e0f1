//! Command-line pipelines over `trifuse-core`.
//!
//! Exit codes: 0 success, 1 failed check, 2 usage or input error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use trifuse_core::events::{Kernel, DEFAULT_BINS, DEFAULT_WINDOW_US};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] trifuse_core::Error),

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    CheckFailed(String),
}

impl Error {
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::CheckFailed(_) => 1,
            Error::Core(_) | Error::Usage(_) => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Parser)]
#[command(
    name = "trifuse",
    version,
    about = "RGB, surface-normal and event fusion kernels"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Log intermediate results to stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a rank-2 depth tensor into a 3×H×W normal tensor.
    Depth2normal(Depth2NormalArgs),
    /// Split an event CSV into time windows and rasterize each one.
    Events2frame(Events2FrameArgs),
    /// Run RGB/normal fusion followed by event fusion.
    Fuse(FuseArgs),
    /// Score detections against ground truth.
    Eval(EvalArgs),
    /// Compare analytic gradients of a fusion block with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct Depth2NormalArgs {
    /// Depth `.ten`, shape H×W.
    #[arg(long)]
    pub input: PathBuf,
    /// Normal `.ten`, shape 3×H×W; invalid pixels are NaN.
    #[arg(long)]
    pub output: PathBuf,
    /// Also write an RGB visualization.
    #[arg(long)]
    pub png: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Events2FrameArgs {
    /// CSV with header `t_us,x,y,polarity`.
    #[arg(long)]
    pub input: PathBuf,
    /// Directory receiving `window_NNNNNN.ten`.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub width: u32,
    #[arg(long)]
    pub height: u32,
    /// Window length in microseconds.
    #[arg(long, default_value_t = DEFAULT_WINDOW_US)]
    pub window_us: u64,
    /// Temporal bins per window.
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    /// `delta` or `bilinear-t`.
    #[arg(long, default_value_t = Kernel::Delta)]
    pub kernel: Kernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolArg {
    Avg,
    Max,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// RGB features, C×H×W.
    #[arg(long)]
    pub rgb: PathBuf,
    /// Surface-normal features, C×H×W.
    #[arg(long)]
    pub normal: PathBuf,
    /// Event features, C×H×W.
    #[arg(long)]
    pub event: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Parameter directory; fresh parameters are drawn when absent.
    #[arg(long, conflicts_with = "init_seed")]
    pub params: Option<PathBuf>,
    /// Seed for fresh parameters; defaults to `--seed`.
    #[arg(long)]
    pub init_seed: Option<u64>,
    /// Write the parameters used to this directory.
    #[arg(long)]
    pub save_params: Option<PathBuf>,
    /// Expected channel count; taken from the inputs when absent.
    #[arg(long)]
    pub c: Option<usize>,
    /// Reduced attention width; defaults to C/2.
    #[arg(long)]
    pub c_prime: Option<usize>,
    /// Group-norm groups; defaults to the largest divisor of C up to 8.
    #[arg(long)]
    pub groups: Option<usize>,
    /// Spatial pooling ahead of the event gates.
    #[arg(long, value_enum, default_value_t = PoolArg::Avg)]
    pub pool: PoolArg,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Annotations JSON.
    #[arg(long)]
    pub input: PathBuf,
    /// Report JSON.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub iou_start: f64,
    #[arg(long, default_value_t = 0.95)]
    pub iou_stop: f64,
    #[arg(long, default_value_t = 0.05)]
    pub iou_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Module {
    Adfm,
    Eafm,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(value_enum)]
    pub module: Module,
    #[arg(long, default_value_t = 4)]
    pub c: usize,
    /// ADFM reduced width; defaults to C/2.
    #[arg(long)]
    pub c_prime: Option<usize>,
    /// EAFM group count; defaults to the largest divisor of C up to 8.
    #[arg(long)]
    pub groups: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub height: usize,
    #[arg(long, default_value_t = 4)]
    pub width: usize,
    /// Number of random cases, seeded `seed, seed + 1, ...`.
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    /// Corrupt one analytic gradient so the check must fail.
    #[arg(long, hide = true)]
    pub perturb_grad: bool,
}

/// Runs one parsed invocation and maps the outcome to an exit code.
pub fn run(cli: Cli) -> ExitCode {
    let result = match cli.command {
        Command::Depth2normal(a) => commands::depth2normal(&cli.global, &a),
        Command::Events2frame(a) => commands::events2frame(&cli.global, &a),
        Command::Fuse(a) => commands::fuse(&cli.global, &a),
        Command::Eval(a) => commands::eval(&cli.global, &a),
        Command::Gradcheck(a) => commands::gradcheck(&cli.global, &a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
