//! `ensel`: enumerate, score, select and evaluate ensemble teams from
//! recorded model predictions.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ensel::sampling::SchemeKind;
use ensel::workflow::MethodChoice;
use ensel::{ConsensusMethod, FqMode, MetricId};

#[derive(Parser, Debug)]
#[command(
    name = "ensel",
    version,
    about = "Diversity-driven ensemble selection over recorded predictions"
)]
struct Cli {
    /// Pool manifest (JSON).
    #[arg(long, global = true)]
    pool: Option<PathBuf>,
    /// Seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic pool and write it as a manifest plus files.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Count (and optionally list) candidate teams.
    Enumerate {
        /// Defaults to the number of models in --pool.
        #[arg(long)]
        pool_size: Option<usize>,
        #[arg(long)]
        team_size: Option<usize>,
        #[arg(long)]
        list: bool,
    },
    /// Diversity of one team, or of every candidate.
    Diversity {
        #[arg(long)]
        metric: MetricId,
        #[arg(long)]
        team: Option<String>,
        #[arg(long, default_value = "any")]
        sampling: SchemeKind,
        #[arg(long)]
        focal: Option<usize>,
        #[arg(long, default_value_t = ensel::sampling::DEFAULT_SAMPLE_SIZE)]
        sample_size: usize,
    },
    /// Select high-diversity teams.
    Select {
        #[command(flatten)]
        selection: SelectionArgs,
        /// Store learned FQ rules as JSON.
        #[arg(long)]
        rules_out: Option<PathBuf>,
        /// Apply stored FQ rules instead of learning them.
        #[arg(long)]
        rules_in: Option<PathBuf>,
    },
    /// Predict with one team and score it.
    Consensus {
        #[arg(long)]
        team: String,
        #[arg(long, default_value = "soft")]
        method: ConsensusMethod,
        #[arg(long, allow_hyphen_values = true)]
        gamma: Option<f64>,
        /// Sample indices (one per line) to train boosting weights on.
        #[arg(long)]
        train_indices: Option<PathBuf>,
    },
    /// Evaluate a stored selection against the full candidate set.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        voting: VotingArgs,
    },
    /// Full pipeline: enumerate, score, select, evaluate, report.
    Recommend {
        #[command(flatten)]
        selection: SelectionArgs,
        #[command(flatten)]
        voting: VotingArgs,
    },
    /// Evaluate one team and every sub-team of size two or more.
    Query {
        #[arg(long)]
        team: String,
        #[command(flatten)]
        selection: SelectionArgs,
        #[command(flatten)]
        voting: VotingArgs,
    },
}

#[derive(Args, Debug, Clone)]
pub struct SelectionArgs {
    #[arg(long, default_value = "eq")]
    pub method: MethodChoice,
    /// Metric for q and fq.
    #[arg(long, default_value = "gd")]
    pub metric: MetricId,
    #[arg(long, default_value = "all")]
    pub fq_mode: FqMode,
    #[arg(long, value_delimiter = ',', default_value = "bd,kw,gd")]
    pub eq_metrics: Vec<MetricId>,
    /// Negative samples for q: any or all.
    #[arg(long, default_value = "any")]
    pub sampling: SchemeKind,
    #[arg(long, default_value_t = ensel::sampling::DEFAULT_SAMPLE_SIZE)]
    pub sample_size: usize,
}

#[derive(Args, Debug, Clone)]
pub struct VotingArgs {
    /// soft, majority, plurality or boosting.
    #[arg(long, default_value = "soft")]
    pub consensus: ConsensusMethod,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<f64>,
}

/// Why a run failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(ensel::Error),
}

impl From<ensel::Error> for Failure {
    fn from(e: ensel::Error) -> Self {
        Failure::Data(e)
    }
}

pub struct Globals {
    pub pool: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot configure threads: {e}")))?;
    }
    let g = Globals {
        pool: cli.pool,
        seed: cli.seed,
        out: cli.out,
        format: cli.format,
    };
    match cli.command {
        Command::Synth { config, out_dir } => commands::synth(&g, &config, &out_dir),
        Command::Enumerate {
            pool_size,
            team_size,
            list,
        } => commands::enumerate(&g, pool_size, team_size, list),
        Command::Diversity {
            metric,
            team,
            sampling,
            focal,
            sample_size,
        } => commands::diversity(&g, metric, team.as_deref(), sampling, focal, sample_size),
        Command::Select {
            selection,
            rules_out,
            rules_in,
        } => commands::select(&g, &selection, rules_out.as_deref(), rules_in.as_deref()),
        Command::Consensus {
            team,
            method,
            gamma,
            train_indices,
        } => commands::consensus(&g, &team, method, gamma, train_indices.as_deref()),
        Command::Report { input, voting } => commands::report(&g, &input, &voting),
        Command::Recommend { selection, voting } => commands::recommend(&g, &selection, &voting),
        Command::Query {
            team,
            selection,
            voting,
        } => commands::query(&g, &team, &selection, &voting),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
