mod commands;
mod data;
mod record;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ovr_core::complexity::MacConvention;
use ovr_core::model::Variant;

/// Own voice reconstruction for two-microphone hearables.
#[derive(Parser, Debug)]
#[command(name = "ovr", version, about)]
struct Cli {
    /// Worker threads for file-level parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

/// Model size: a named preset or explicit hidden sizes.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// XL, L, M, S or XS.
    #[arg(long, conflicts_with = "hidden")]
    preset: Option<Variant>,
    /// Explicit `H_F,H_T`.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// 2 for outer + in-ear, 1 for in-ear only.
    #[arg(long, default_value_t = 2)]
    mics: usize,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// JSON Lines rows `{"noisy": two-channel wav, "target": wav}`.
    #[arg(long, required_unless_present = "toy_examples")]
    train: Option<PathBuf>,
    /// Validation rows in the same format; the training set is used if absent.
    #[arg(long)]
    val: Option<PathBuf>,
    /// Train on this many synthetic two-talker examples instead of files.
    #[arg(long, conflicts_with = "train")]
    toy_examples: Option<usize>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 4)]
    batch_size: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long)]
    max_steps: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate per-phoneme RTFs of one talker from noise-free recordings.
    EstimateRtf {
        /// JSON Lines rows `{"outer": wav, "inear": wav, "intervals": jsonl}`.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        talker: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = ovr_core::augment::DEFAULT_MIN_FRAMES)]
        min_frames: usize,
    },
    /// Simulate in-ear signals for clean speech with another talker's RTFs.
    Augment {
        /// JSON Lines rows `{"id": str, "speech": wav, "intervals": jsonl, "talker": str?}`.
        #[arg(long)]
        manifest: PathBuf,
        /// RTF tables to draw from.
        #[arg(long = "table", required = true)]
        tables: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
    },
    /// Mix own voice with spatialized noise at target SNRs.
    Mix {
        /// JSON Lines rows `{"speech": [outer, inear], "noise": wav, "snr_db", "mode", "direction"?, "seed"}`.
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        irs: IrArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Enhance a noisy recording.
    Infer {
        #[arg(long)]
        weights: PathBuf,
        /// Two-channel `[outer, inear]` wav, or in-ear mono for one-mic models.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Process hop by hop through the streaming enhancer.
        #[arg(long)]
        streaming: bool,
    },
    /// Train a model from scratch.
    Train {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Continue training pretrained weights at the fine-tuning rate.
    Finetune {
        #[arg(long)]
        weights: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Print parameter count and MACs per second.
    Count {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value = "profiler")]
        convention: ConventionArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure the real-time factor of streaming inference.
    Bench {
        /// Presets to measure; all five when omitted.
        #[arg(long = "preset")]
        presets: Vec<Variant>,
        #[arg(long, default_value_t = 10.0)]
        seconds: f64,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 2)]
        mics: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// LSD of enhanced signals over an SNR grid.
    Eval {
        /// Model weights; omit with --passthrough to score the noisy outer channel.
        #[arg(long, required_unless_present = "passthrough")]
        weights: Option<PathBuf>,
        #[arg(long, conflicts_with = "weights")]
        passthrough: bool,
        /// JSON Lines rows `{"id", "speech": [outer, inear], "noise": wav, "mode", "direction"?, "seed"}`.
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        irs: IrArgs,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "-10,-5,0,5,10")]
        snrs: Vec<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct IrArgs {
    /// Directory with `dir{0..7}_outer.wav` / `dir{0..7}_inear.wav`.
    #[arg(long)]
    irs: Option<PathBuf>,
    /// Use generated 64-tap impulse responses from this seed.
    #[arg(long)]
    synthetic_irs: Option<u64>,
}

#[derive(clap::ValueEnum, Debug, Clone, Copy)]
enum ConventionArg {
    Profiler,
    MatmulOnly,
}

impl From<ConventionArg> for MacConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Profiler => MacConvention::Profiler,
            ConventionArg::MatmulOnly => MacConvention::MatmulOnly,
        }
    }
}

/// Bad flag combinations found after parsing; reported with exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OVR_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.max(1)).build_global() {
        log::warn!("could not size the thread pool: {e}");
    }
    let argv: Vec<String> = std::env::args().collect();
    match commands::run(cli.command, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
