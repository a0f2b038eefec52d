mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage, configuration or I/O error
  3  data error (degenerate history, empty split, no completed jobs)

Output directory: --out, else CUBIC_OUT_DIR, else the current directory.
`search` also honours `out_dir` from the manifest, ahead of CUBIC_OUT_DIR.

Seeds: every random component draws from derive_seed(seed, name), an FNV-1a
hash of the component name folded into the global seed.";

const HISTORY_FORMAT: &str = "\
history.jsonl: one JSON object per line with fields
  config     object mapping dimension name to value
  status     completed | failed_oom | failed_infra
  metric     number, null unless completed
  timestamp  launch time, non-decreasing down the file
  scale      integer job size (e.g. GPU count) or null
  round      bootstrap | round-1 | round-2 | ... | dataset
  predicted  predictor score at launch time, absent for unscored jobs";

const SEARCH_HELP: &str = "\
Manifest (TOML; relative paths resolve against the manifest's directory):
  space = \"spaces/ads_fsdp_reduced.space\"
  seed = 0                          # global seed
  out_dir = \"runs/reduced\"          # optional
  [executor]
  name = \"fsdp\"                     # fsdp | llm
  params = \"sims/fsdp_reduced.params\" # optional simulator parameters
  [loop]                            # every key optional
  bootstrap = 60
  rounds = 2
  parallel = 1
  [loop.predictor]
  backend = \"mlp\"                   # mlp | gbdt, plus backend fields
  [loop.searcher]
  trials = 3
  samples_per_trial = 2000
  batch = 30
  lr = 0.01
  top_k = 10
  baseline_decay = 0.9

Outputs:
  history.jsonl     job history (see below)
  frontier.csv      launch_index,round,actual_metric,frontier
  round_corr.csv    round,n,kendall,pearson,spearman
  best_config.json  {\"config\": {...}, \"metric\": m, \"round\": r, \"launch_index\": i}
                    plus \"normalized_metric\" with --normalize

--normalize divides reported metrics in frontier.csv, best_config.json and
the console summary; history.jsonl always holds raw values.";

const FIT_EVAL_HELP: &str = "\
Outputs:
  predictions.csv   valid_index,timestamp,scale,predicted,actual
  corr_report.csv   split,n_train,n_valid,kendall,pearson,spearman

Seeds: split derive_seed(seed, \"split\"), model derive_seed(seed, \"predictor\").";

const GEN_HELP: &str = "\
Output: one JSON job record per line in the history.jsonl format, sorted by
timestamp. Seed: derive_seed(seed, \"dataset\").";

const CURVE_HELP: &str = "\
Output:
  learning_curve.csv  size,kendall_mean,kendall_std,pearson_mean,pearson_std,spearman_mean,spearman_std

The validation set is a fixed random split of the history; each size trains
`perturbations` GBDT models on random subsets of the remaining pool.
Seeds: split derive_seed(seed, \"split\"), subsets derive_seed(seed, \"curve\").";

const REPORT_HELP: &str = "\
Outputs:
  frontier.csv        launch_index,round,actual_metric,frontier
  round_corr.csv      round,n,kendall,pearson,spearman
  scale_timeline.csv  launch_index,timestamp,scale,status";

const SPACE_HELP: &str = "\
Space file (TOML):
  name = \"ads_fsdp\"
  version = 1
  [[dimensions]]
  name = \"local_batch_size\"
  kind = \"stepped-int\"     # categorical | stepped-int | stepped-decimal | boolean | int-set
  min = 1024
  max = 1536
  step = 128
  role = \"other\"           # optional: architecture | parallelism | infra | other";

#[derive(Parser)]
#[command(
    name = "cubicml",
    version,
    about = "Predictor-guided search over distributed-training configurations",
    after_long_help = EXIT_CODES
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the bootstrap and search rounds described by a manifest.
    #[command(after_long_help = format!("{SEARCH_HELP}\n\n{HISTORY_FORMAT}\n\n{EXIT_CODES}"))]
    Search(SearchArgs),
    /// Fit a predictor on part of a history and score it on the rest.
    #[command(after_long_help = format!("{FIT_EVAL_HELP}\n\n{HISTORY_FORMAT}\n\n{EXIT_CODES}"))]
    FitEval(FitEvalArgs),
    /// Generate a synthetic job history from a simulator.
    #[command(after_long_help = format!("{GEN_HELP}\n\n{HISTORY_FORMAT}\n\n{EXIT_CODES}"))]
    GenDataset(GenDatasetArgs),
    /// Correlation versus training-set size for the GBDT predictor.
    #[command(after_long_help = format!("{CURVE_HELP}\n\n{HISTORY_FORMAT}\n\n{EXIT_CODES}"))]
    Curve(CurveArgs),
    /// Frontier, round correlations and job-size timeline of a history.
    #[command(after_long_help = format!("{REPORT_HELP}\n\n{HISTORY_FORMAT}\n\n{EXIT_CODES}"))]
    Report(ReportArgs),
    /// Print a space's dimensions and exact cardinality.
    #[command(after_long_help = format!("{SPACE_HELP}\n\n{EXIT_CODES}"))]
    SpaceInfo(SpaceInfoArgs),
}

#[derive(Args)]
struct OutArgs {
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    /// Run manifest (TOML).
    manifest: PathBuf,
    #[command(flatten)]
    out: OutArgs,
    /// Override the manifest's global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum concurrent simulated jobs; overrides [loop].parallel.
    #[arg(long)]
    parallel: Option<usize>,
    /// Divide reported metrics by this constant.
    #[arg(long, value_name = "X")]
    normalize: Option<f64>,
    /// Replace an existing history.jsonl in the output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Mlp,
    Gbdt,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Random,
    Temporal,
    Scale,
}

#[derive(Args)]
struct ModelArgs {
    /// Space file the history was recorded against.
    #[arg(long)]
    space: PathBuf,
    /// Job history (JSON lines).
    #[arg(long)]
    history: PathBuf,
    /// Fit the GBDT on log(metric).
    #[arg(long)]
    log_target: bool,
    /// Predictor settings as a TOML table with a `backend` key; overrides
    /// --backend and --log-target.
    #[arg(long, value_name = "FILE")]
    predictor_config: Option<PathBuf>,
    /// Validation share for random and temporal splits.
    #[arg(long, default_value_t = 0.255)]
    valid_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct FitEvalArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value_t = BackendArg::Gbdt)]
    backend: BackendArg,
    #[arg(long, value_enum, default_value_t = SplitArg::Random)]
    split: SplitArg,
    /// Scale split: largest scale kept for training.
    #[arg(long, default_value_t = 3072)]
    train_max: u64,
    /// Scale split: smallest scale used for validation.
    #[arg(long, default_value_t = 4096)]
    valid_min: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Uniform,
    ScaleCorrelated,
}

#[derive(Args)]
struct GenDatasetArgs {
    #[arg(long)]
    space: PathBuf,
    /// Simulator name: fsdp or llm.
    #[arg(long)]
    executor: String,
    /// Simulator parameter file (TOML).
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, default_value_t = 568)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = PolicyArg::ScaleCorrelated)]
    policy: PolicyArg,
    /// Gaussian jitter on the normalized log2 scale (scale-correlated policy).
    #[arg(long, default_value_t = 0.15)]
    jitter: f64,
    /// Probability of keeping a sampled configuration that fails.
    #[arg(long, default_value_t = 0.0)]
    failure_rate: f64,
    /// Timestamps span [0, horizon].
    #[arg(long, default_value_t = 180.0)]
    horizon: f64,
    /// Output file; defaults to dataset.jsonl in the output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
    /// Replace an existing output file.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Training-set sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "25,50,100,150,200,300,423")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    perturbations: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Job history (JSON lines).
    history: PathBuf,
    /// Divide reported metrics by this constant.
    #[arg(long, value_name = "X")]
    normalize: Option<f64>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct SpaceInfoArgs {
    /// Space file (TOML).
    space: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Search(a) => commands::search(a),
        Command::FitEval(a) => commands::fit_eval(a),
        Command::GenDataset(a) => commands::gen_dataset(a),
        Command::Curve(a) => commands::curve(a),
        Command::Report(a) => commands::report(a),
        Command::SpaceInfo(a) => commands::space_info(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
