//! `dndt`: train, evaluate, and inspect differentiable decision trees on
//! tabular CSV data.

mod commands;
mod manifest;
mod metrics;
mod model_io;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dndt_core::Error;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "dndt",
    version,
    about = "Decision trees trained by gradient descent, with a CART baseline",
    after_help = "Exit codes: 0 success, 2 usage or configuration error, 3 data error, 4 diverged training."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a tree and save model, training report, and tree diagram.
    ///
    /// Datasets wider than 12 features train as a random-subspace forest
    /// (majority vote over trees on feature subsets); --trees/--subset force
    /// a forest explicitly.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainFlags,
        #[command(flatten)]
        forest: ForestFlags,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Evaluate a saved model: accuracy plus per-class precision/recall/F1.
    Eval {
        /// Saved model file (any kind: tree, forest, cart)
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Measure cut point activity, per-feature ignore rates over repeated
    /// runs, and ranking agreement with CART.
    ///
    /// Training flags default to the feature-study protocol (adam, batch
    /// min(100, N), 1000 epochs) rather than the train command's defaults.
    Analyze {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainFlags,
        /// Independently seeded training runs for the ignore-rate table
        #[arg(long, value_name = "N", default_value_t = 10)]
        runs: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Sweep cut point budgets: test accuracy and active cut point fraction
    /// per budget over seeded train/test splits.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainFlags,
        /// Cut point budgets to try (comma separated)
        #[arg(long, value_name = "N,N,...", value_delimiter = ',', default_values_t = vec![1, 2, 3, 4, 5])]
        counts: Vec<usize>,
        /// Seeded splits per budget
        #[arg(long, value_name = "N", default_value_t = 10)]
        runs: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Train the gradient tree and a CART baseline on one stratified split
    /// and compare test accuracy and feature rankings.
    Compare {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainFlags,
        /// Feature-study runs behind the gradient tree's importance ranking
        #[arg(long, value_name = "N", default_value_t = 10)]
        runs: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Render a saved model as Graphviz DOT.
    ///
    /// Soft tree models need --dataset/--csv to tally leaf populations; CART
    /// models embed their counts. Forests have no single-tree rendering.
    Export {
        /// Saved model file
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
    },
}

/// Dataset selection shared by every data-consuming command. Exactly one of
/// --dataset/--csv must be given (export: at most one).
#[derive(Args)]
struct DataArgs {
    /// Bundled dataset: iris or haberman
    #[arg(long, value_name = "NAME")]
    dataset: Option<String>,
    /// CSV file with a header row
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    /// Label column name or zero-based index (default: last column)
    #[arg(long, value_name = "COL")]
    label_col: Option<String>,
    /// Columns to force into ordinal encoding (names or indices, comma separated)
    #[arg(long, value_name = "COLS", value_delimiter = ',')]
    categorical: Vec<String>,
}

/// Training hyperparameters. Every flag is optional; each command fills the
/// gaps from its own base configuration.
#[derive(Args)]
struct TrainFlags {
    /// Cut points per feature
    #[arg(long, value_name = "N")]
    cutpoints: Option<usize>,
    /// Softmax temperature
    #[arg(long, value_name = "TAU")]
    tau: Option<f64>,
    /// Per-epoch temperature decay; anneals from --tau down to a floor of 0.01
    #[arg(long, value_name = "DECAY")]
    anneal: Option<f64>,
    /// Sample bins with straight-through Gumbel-softmax during training
    #[arg(long)]
    st_gumbel: bool,
    /// Gradient step rule
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerArg>,
    /// Learning rate
    #[arg(long, value_name = "LR")]
    lr: Option<f64>,
    /// Mini-batch size; 0 uses the whole training set per step
    #[arg(long, value_name = "B")]
    batch: Option<usize>,
    /// Training epochs
    #[arg(long, value_name = "E")]
    epochs: Option<usize>,
    /// Master rng seed
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// L2 penalty on leaf scores
    #[arg(long, value_name = "WD")]
    weight_decay: Option<f64>,
    /// Fraction held out from training data (validation, or the test side of
    /// compare/sweep splits); 0 trains on everything
    #[arg(long, value_name = "FRAC")]
    validation_split: Option<f64>,
}

#[derive(Args)]
struct ForestFlags {
    /// Train this many trees as a random-subspace forest
    #[arg(long, value_name = "N")]
    trees: Option<usize>,
    /// Features per forest tree (default: min(10, feature count))
    #[arg(long, value_name = "K")]
    subset: Option<usize>,
}

#[derive(Args)]
struct OutArgs {
    /// Output directory (default: $DNDT_OUT, else ./dndt-out)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OptimizerArg {
    Sgd,
    Momentum,
    Adam,
}

fn main() {
    // Restore the default SIGPIPE disposition so `dndt ... | head` dies
    // quietly instead of panicking on a closed stdout.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    if let Err(err) = commands::run(cli.command) {
        eprintln!("error: {}", err);
        std::process::exit(exit_code(&err));
    }
}

/// 2 = the invocation asked for something invalid, 3 = the inputs could not
/// be read or do not fit, 4 = training blew up numerically.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_)
        | Error::InvalidOperation { .. }
        | Error::ShapeMismatch { .. }
        | Error::TooManyLeaves { .. } => 2,
        Error::Diverged { .. } => 4,
        _ => 3,
    }
}
