use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dxstream_cli::*;
use dxstream_core::env::synthetic::SyntheticConfig;
use dxstream_core::env::DEFAULT_WARMUP;

#[derive(Parser)]
#[command(name = "dxstream", version, about = "Sequential diagnosis streams with dual memory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a stream (or rollout groups) as described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a seeded synthetic case stream with candidate sets.
    GenSynthetic {
        #[arg(long, default_value_t = 100)]
        rounds: usize,
        #[arg(long, default_value_t = 5)]
        subtypes: usize,
        #[arg(long, default_value_t = 0.4)]
        recurrence: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 800)]
        pool_size: usize,
        #[arg(long, default_value_t = 199)]
        distractors: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write the label pool, one label per line.
        #[arg(long)]
        pool_out: Option<PathBuf>,
    },
    /// Attach candidate sets to a case file from a label pool.
    BuildCandidates {
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 199)]
        distractors: usize,
        #[arg(long, default_value_t = 1.5)]
        factor: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Scorer::Lexical)]
        scorer: Scorer,
        /// Chat client settings (JSON) for the remote scorer.
        #[arg(long)]
        scorer_config: Option<PathBuf>,
        /// JSON-lines score cache, created if missing.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Final accuracy and accuracy gains of a report.
    Metrics {
        report: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "50,100")]
        n: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_WARMUP)]
        warmup: usize,
        /// Write (round, cumulative accuracy) rows here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Check a file against one of the artifact formats.
    ValidateSchema {
        #[arg(long, value_enum)]
        kind: Kind,
        path: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Scorer {
    Lexical,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Cases,
    Report,
    Export,
    Snapshot,
    Config,
    ToolSchema,
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run { config } => {
            let res = cmd_run(&config)?;
            println!("final_accuracy\t{:.6}", res.summary.final_accuracy);
            let mut gains: Vec<(usize, f64)> =
                res.summary.delta_acc.iter().filter_map(|(n, d)| Some((n.parse().ok()?, *d))).collect();
            gains.sort_by_key(|g| g.0);
            for (n, d) in gains {
                println!("delta_acc@{n}\t{d:+.6}");
            }
        }
        Command::GenSynthetic {
            rounds,
            subtypes,
            recurrence,
            seed,
            pool_size,
            distractors,
            out,
            pool_out,
        } => {
            let params = SyntheticConfig {
                rounds,
                subtypes,
                recurrence,
                seed,
                pool_size,
                distractors,
                ..SyntheticConfig::default()
            };
            let n = cmd_gen_synthetic(&GenSyntheticArgs { params, out, pool_out })?;
            eprintln!("wrote {n} cases");
        }
        Command::BuildCandidates {
            cases,
            pool,
            out,
            distractors,
            factor,
            seed,
            scorer,
            scorer_config,
            cache,
        } => {
            let args = BuildCandidatesArgs {
                distractors,
                factor,
                seed,
                scorer: match scorer {
                    Scorer::Lexical => ScorerKind::Lexical,
                    Scorer::Remote => ScorerKind::Remote,
                },
                scorer_config,
                cache,
                ..BuildCandidatesArgs::new(cases, pool, out)
            };
            let n = cmd_build_candidates(&args)?;
            eprintln!("wrote {n} cases");
        }
        Command::Metrics { report, n, warmup, csv } => {
            print!("{}", cmd_metrics(&report, &n, warmup, csv.as_deref())?.render());
        }
        Command::ValidateSchema { kind, path } => {
            let kind = match kind {
                Kind::Cases => SchemaKind::Cases,
                Kind::Report => SchemaKind::Report,
                Kind::Export => SchemaKind::Export,
                Kind::Snapshot => SchemaKind::Snapshot,
                Kind::Config => SchemaKind::Config,
                Kind::ToolSchema => SchemaKind::ToolSchema,
            };
            println!("{}", cmd_validate_schema(kind, path.as_deref())?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dxstream: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
