//! Command-line front end: generation, featurization, evaluation, sweeps,
//! perturbation studies, budget ablations, and report rendering, all driven
//! by seeded configs so every artifact is reproducible from its manifest.

mod commands;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "trustbench",
    version,
    about = "Hidden-trigger tool-compromise simulator and evaluation harness"
)]
struct Cli {
    /// Output directory root; defaults to $TRUSTBENCH_OUT or ./trustbench_out.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for parallel stages (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct EvalArgs {
    /// Episodes JSONL file.
    #[arg(long)]
    episodes: PathBuf,

    /// Scorer: a kind name (execute_all, reject_all, keyword_heuristic,
    /// heuristic_combined, scalar_linear, token_linear) or a path to a
    /// scorer-spec JSON file.
    #[arg(long)]
    scorer: String,

    /// Experiment config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override the number of grouped folds.
    #[arg(long)]
    folds: Option<usize>,

    /// Override the penalty weight for accepted malicious calls.
    #[arg(long)]
    rho: Option<f64>,

    /// Override the experiment seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Exploration budget: featurize only the first N turns.
    #[arg(long)]
    budget: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a matched malicious/benign episode corpus.
    Generate {
        /// Generation config JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the generation seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of matched pairs.
        #[arg(long)]
        pairs: Option<u32>,
    },
    /// Serialize observations and the numeric feature sidecar for a corpus.
    Featurize {
        #[arg(long)]
        episodes: PathBuf,
        /// Feature config JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Exploration budget: featurize only the first N turns.
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Run a grouped-fold evaluation with train-fold threshold calibration.
    Evaluate {
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Recompute the guarded-joint score across penalty weights with frozen
    /// thresholds.
    Sweep {
        #[command(flatten)]
        eval: EvalArgs,
        /// Penalty weights to sweep.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 1.0, 1.5, 2.0, 3.0])]
        rhos: Vec<f64>,
    },
    /// Measure guarded-joint degradation under feature-space noise.
    Perturb {
        #[command(flatten)]
        eval: EvalArgs,
        /// Noise spec JSON file (a list of {regime, sigma, seed} objects);
        /// when omitted, all five regimes are run at the --sigmas levels.
        #[arg(long)]
        noise: Option<PathBuf>,
        /// Noise levels used when --noise is omitted.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.1, 0.3, 0.5])]
        sigmas: Vec<f64>,
        /// Seed for the generated noise specs.
        #[arg(long, default_value_t = 7)]
        noise_seed: u64,
    },
    /// Re-run the experiment at each exploration budget.
    Ablate {
        #[command(flatten)]
        eval: EvalArgs,
        /// Budgets (turn counts) to evaluate.
        #[arg(long, value_delimiter = ',', required = true)]
        budgets: Vec<usize>,
    },
    /// Render report JSON files as aligned text tables.
    Report {
        /// One or more report.json paths.
        #[arg(long, required = true, num_args = 1..)]
        report: Vec<PathBuf>,
        /// Also render the breakdown tables.
        #[arg(long)]
        breakdowns: bool,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if cli.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global()?;
    }
    let out_root = cli
        .out
        .or_else(|| std::env::var_os("TRUSTBENCH_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("trustbench_out"));

    match cli.command {
        Command::Generate {
            config,
            seed,
            pairs,
        } => commands::generate(&out_root, config.as_deref(), seed, pairs),
        Command::Featurize {
            episodes,
            config,
            budget,
        } => commands::featurize(&out_root, &episodes, config.as_deref(), budget),
        Command::Evaluate { eval } => commands::evaluate(&out_root, &eval).map(|_| ()),
        Command::Sweep { eval, rhos } => commands::sweep(&out_root, &eval, &rhos),
        Command::Perturb {
            eval,
            noise,
            sigmas,
            noise_seed,
        } => commands::perturb(&out_root, &eval, noise.as_deref(), &sigmas, noise_seed),
        Command::Ablate { eval, budgets } => commands::ablate(&out_root, &eval, &budgets),
        Command::Report { report, breakdowns } => commands::report(&report, breakdowns),
    }
}
