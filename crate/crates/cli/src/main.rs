mod config;
mod generate;
mod llm_setup;
mod tasks;

use anyhow::Result;
use clap::{Parser, Subcommand};
use config::{config_err, load_dataset, load_schema, parse_epsilons, ConfigError, RunConfig};
use llm_setup::{build_client, LlmSource, MockKind};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use surrogate_core::dataset::Role;
use surrogate_core::llm::{header_test, row_completion_test, ProbeConfig};

#[derive(Parser)]
#[command(name = "surrogate", version, about = "Surrogate public data generation and DP auxiliary-task benchmarks")]
struct Cli {
    /// Worker threads for parallel runs (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a surrogate dataset.
    Generate {
        #[command(flatten)]
        args: generate::GenerateArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Similarity of each candidate to the private data.
    Similarity {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretraining advantage for DP classifier fine-tuning.
    Task1 {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hyperparameter-selection degradation for DP synthesizers.
    Task2 {
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Privacy-utility curve distances.
    Task3 {
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Pareto-efficient rows of a tab-separated results table.
    Pareto {
        #[arg(long)]
        input: PathBuf,
        /// Column naming each row.
        #[arg(long, default_value = "candidate")]
        key: String,
        /// Columns that group rows into separate frontiers.
        #[arg(long, value_delimiter = ',', default_value = "mechanism,epsilon")]
        by: Vec<String>,
        /// Columns to minimize.
        #[arg(long, value_delimiter = ',', default_value = "classification,correlation,marginals")]
        objectives: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Probe a model for memorization of a dataset.
    Memorize {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// live:<profile> | replay:<transcript> | mock:<csv to regurgitate>
        #[arg(long)]
        llm: String,
        #[arg(long)]
        model: Option<String>,
        /// header | row
        #[arg(long, default_value = "header")]
        test: String,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rerun a generation from its recorded transcript.
    Replay {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Mechanisms to sweep, comma-separated (overrides the config).
    #[arg(long, value_delimiter = ',')]
    mechanism: Vec<String>,
    /// Epsilon grid, comma-separated (overrides the config).
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    seeds: Option<usize>,
}

impl SweepArgs {
    fn overrides(&self) -> Result<tasks::SweepOverrides> {
        Ok(tasks::SweepOverrides {
            mechanisms: if self.mechanism.is_empty() { None } else { Some(self.mechanism.clone()) },
            epsilons: self.eps.as_deref().map(parse_epsilons).transpose()?,
            seeds: self.seeds,
        })
    }
}

pub enum Outcome {
    Done,
    Partial(String),
}

fn prepare(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| anyhow::anyhow!("{}: {e}", out.display()))
}

fn load_config(path: &Path, workers: Option<usize>) -> Result<RunConfig> {
    let cfg = RunConfig::load(path)?;
    set_workers(workers.or(cfg.workers))?;
    Ok(cfg)
}

fn set_workers(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        if n == 0 {
            return Err(config_err("workers must be at least 1"));
        }
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn memorize(
    schema: &Path,
    dataset: &Path,
    llm: &str,
    model: Option<&str>,
    test: &str,
    trials: usize,
    seed: u64,
    out: &Path,
) -> Result<Outcome> {
    let schema = load_schema(schema)?;
    let data = load_dataset(&schema, dataset, Role::Private)?;
    let source = LlmSource::parse(llm)?;
    let cfg = ProbeConfig::new(source.model(model)?);
    let client = build_client(&source, MockKind::Memorize(&data), &out.join("transcript.jsonl"))?;
    let report = match test {
        "header" => header_test(&client, &data, &cfg),
        "row" => row_completion_test(&client, &data, &cfg, trials, seed),
        other => return Err(config_err(format!("unknown memorization test `{other}`; use header or row"))),
    }?;
    std::fs::write(out.join("memorization.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    println!(
        "exact_match_rate\t{}\ncell_accuracy\t{}\nchar_similarity\t{}\ncollision_floor\t{}\nreproduced\t{}",
        report.exact_match_rate,
        report.cell_accuracy,
        report.char_similarity,
        report.collision_floor,
        report.reproduced()
    );
    Ok(Outcome::Done)
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Generate { args, out } => {
            set_workers(cli.workers)?;
            generate::run(args, &out)
        }
        Command::Similarity { config, out } => {
            prepare(&out)?;
            tasks::similarity(&load_config(&config, cli.workers)?, &out)
        }
        Command::Task1 { config, out } => {
            prepare(&out)?;
            tasks::task1(&load_config(&config, cli.workers)?, &out)
        }
        Command::Task2 { sweep } => {
            prepare(&sweep.out)?;
            tasks::task2(&load_config(&sweep.config, cli.workers)?, &sweep.overrides()?, &sweep.out)
        }
        Command::Task3 { sweep } => {
            prepare(&sweep.out)?;
            tasks::task3(&load_config(&sweep.config, cli.workers)?, &sweep.overrides()?, &sweep.out)
        }
        Command::Pareto { input, key, by, objectives, out } => {
            prepare(&out)?;
            tasks::pareto(&input, &key, &by, &objectives, &out)
        }
        Command::Memorize { schema, dataset, llm, model, test, trials, seed, out } => {
            prepare(&out)?;
            set_workers(cli.workers)?;
            memorize(&schema, &dataset, &llm, model.as_deref(), &test, trials, seed, &out)
        }
        Command::Replay { run_dir, out } => {
            set_workers(cli.workers)?;
            generate::replay(&run_dir, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Partial(msg)) => {
            eprintln!("partial failure: {msg}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
