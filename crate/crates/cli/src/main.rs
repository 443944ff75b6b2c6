//! `tvfl`: dataset generation, training, evaluation, bound sweeps and the
//! figure recipes.

mod commands;
mod config;
mod fail;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fail::Failure;

/// Environment variable naming the output root.
pub const OUT_ROOT_ENV: &str = "TVFL_OUT_ROOT";

#[derive(Parser, Debug)]
#[command(name = "tvfl", version, about = "Truncated vertical federated learning for spectrum sensing")]
struct Cli {
    /// Root for relative output paths.
    #[arg(long, global = true, env = OUT_ROOT_ENV, default_value = "tvfl-out")]
    out_root: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset file.
    GenData(GenDataArgs),
    /// Train a split network on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset's test split.
    Eval(EvalArgs),
    /// Run a figure recipe (fig2, fig3, fig4, fig5).
    Experiment(ExperimentArgs),
    /// Evaluate convergence and latency bounds.
    Bounds(BoundsArgs),
    /// Print a complete default configuration.
    PrintConfig(PrintConfigArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Total samples `M`.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Training samples.
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long)]
    pub num_su: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "dataset.tvfl")]
    pub out: PathBuf,
    /// Also write a plain CSV export.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// network-i, network-ii or custom.
    #[arg(long, default_value = "network-ii")]
    pub preset: String,
    /// Local widths for `custom`, e.g. `203,32,8`.
    #[arg(long)]
    pub local_arch: Option<String>,
    /// Central widths for `custom`, e.g. `32,512,8`.
    #[arg(long)]
    pub central_arch: Option<String>,
    /// Local hidden width of network-i.
    #[arg(long, default_value_t = tvfl_core::experiment::NETWORK_I_HIDDEN)]
    pub local_hidden: usize,
    /// `auto` widens the central input to `K·d`; `fixed` keeps 32.
    #[arg(long, default_value = "fixed")]
    pub central_input: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Activation ratio of the weakest SU.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub target_mse: Option<f64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub probe_every: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Write per-sample predictions here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// fig2, fig3, fig4 or fig5.
    pub figure: String,
    /// desk, paper or ci.
    #[arg(long, default_value = "desk")]
    pub profile: String,
    /// Comma-separated training seeds.
    #[arg(long, default_value = "1")]
    pub seeds: String,
    /// Dataset seed.
    #[arg(long, default_value_t = 1)]
    pub data_seed: u64,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    /// File with a complete `[bounds]` section.
    #[arg(long)]
    pub params: PathBuf,
    /// Sweep `G₁` as `start:end:points`.
    #[arg(long)]
    pub g1: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PrintConfigArgs {
    /// Only this section.
    #[arg(long)]
    pub section: Option<String>,
    /// Apply a scale profile's sizes.
    #[arg(long)]
    pub profile: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", Failure::new("E_USAGE", format!("msg={first:?}")));
            return ExitCode::from(2);
        }
    };
    let root = cli.out_root;
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(&root, a),
        Command::Train(a) => commands::train(&root, a),
        Command::Eval(a) => commands::eval(&root, a),
        Command::Experiment(a) => commands::experiment(&root, a),
        Command::Bounds(a) => commands::bounds(&root, a),
        Command::PrintConfig(a) => commands::print_config(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
