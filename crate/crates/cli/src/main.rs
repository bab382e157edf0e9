use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Parameter-free classical filters learned by composing a filtered basis.
#[derive(Parser, Debug)]
#[command(name = "compfilter", version, propagate_version = true)]
struct Cli {
    /// Worker threads (default: one per core). Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Add seeded Gaussian or impulse noise to an image.
    Noise(NoiseArgs),
    /// Apply one filter configuration to an image.
    Filter(FilterArgs),
    /// Score a candidate grid and select a basis by isometric sampling.
    Calibrate(CalibrateArgs),
    /// Train a composition model on a dataset manifest.
    Train(TrainArgs),
    /// Run a trained model on an image (no filter parameters needed).
    Apply(ApplyArgs),
    /// Report PSNR/SSIM of a trained model on a dataset.
    Eval(EvalArgs),
    /// Compare the dual-branch model against the content-only variant.
    Ablate(AblateArgs),
    /// Time basis construction and the composition forward pass.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct NoiseArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Gaussian noise standard deviation on the 0-255 scale.
    #[arg(long, conflicts_with = "impulse", required_unless_present = "impulse")]
    gaussian: Option<f64>,
    /// Fraction of pixels replaced by salt or pepper.
    #[arg(long)]
    impulse: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct FilterArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Filter configuration, e.g. `bilateral:ss=2,sr=0.1,k=15` or `median:3x5`.
    #[arg(short, long)]
    config: String,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Candidate grid: a preset name or a manifest file.
    #[arg(long, default_value = "bilateral-grid")]
    grid: String,
    /// Calibration pairs as a dataset manifest. Without it, four synthetic
    /// images are each paired with themselves (fidelity scoring).
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Number of configurations to select.
    #[arg(long, default_value_t = 9)]
    iis: usize,
    /// Selected configurations, as a manifest.
    #[arg(short, long)]
    output: PathBuf,
    /// Per-candidate scores as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Seed for recipe noise in `--pairs`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LossArg {
    Mse,
    L1tv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BranchArg {
    Merged,
    Content,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InitArg {
    Uniform,
    Random,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SelectArg {
    /// Model after the last epoch.
    Final,
    /// Model at the epoch with the best validation PSNR.
    Best,
}

#[derive(Args, Debug, Clone)]
struct TrainOpts {
    /// Basis configurations: a preset name or a manifest file.
    #[arg(long, default_value = "bilateral-iis9")]
    basis: String,
    /// Validation dataset; without it the training manifest is split.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long, default_value_t = 250)]
    epochs: usize,
    #[arg(long, default_value_t = 1)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, value_enum, default_value_t = LossArg::Mse)]
    loss: LossArg,
    #[arg(long, default_value_t = 0.1)]
    tv_weight: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, value_enum, default_value_t = InitArg::Uniform)]
    init: InitArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep the dataset order instead of reshuffling every epoch.
    #[arg(long)]
    no_shuffle: bool,
    /// Directory for cached basis planes, reused across runs.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training dataset manifest.
    #[arg(short, long)]
    dataset: PathBuf,
    /// Where to write the trained model.
    #[arg(short, long)]
    model: PathBuf,
    /// Per-epoch loss and validation PSNR as CSV.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = BranchArg::Merged)]
    output_branch: BranchArg,
    #[arg(long, value_enum, default_value_t = SelectArg::Final)]
    select: SelectArg,
    #[command(flatten)]
    opts: TrainOpts,
}

#[derive(Args, Debug)]
struct ApplyArgs {
    #[arg(short, long)]
    model: PathBuf,
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(short, long)]
    model: PathBuf,
    #[arg(short, long)]
    dataset: PathBuf,
    /// Per-image scores as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[arg(short, long)]
    dataset: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    opts: TrainOpts,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Basis configurations: a preset name or a manifest file.
    #[arg(long, default_value = "bilateral-iis9")]
    basis: String,
    /// Image to time on; defaults to a synthetic 481x321 image.
    #[arg(short, long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// Basis sizes for the scaling fit, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,3,9")]
    ks: Vec<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // messages already embed their sources
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
