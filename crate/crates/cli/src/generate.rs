use crate::config::{config_err, load_dataset, load_schema};
use crate::llm_setup::{build_client, LlmSource, MockKind};
use crate::Outcome;
use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use surrogate_core::agent::{AgentGenerator, MixGenerator, MixMode, DEFAULT_PANEL};
use surrogate_core::csvgen::{CsvGenerator, DEFAULT_ROWS_PER_BATCH};
use surrogate_core::dataset::{Dataset, Role};
use surrogate_core::generators::{GenContext, GenError, GenSpec, GeneratorRegistry};

/// Everything needed to reproduce a generation run; saved as `run.json`.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenerateArgs {
    /// uniform | univariate | arbitrary | csv | agent | mix
    pub method: String,
    #[arg(long)]
    pub schema: PathBuf,
    /// Number of records to generate.
    #[arg(long, default_value_t = 1000)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Reference data (univariate only).
    #[arg(long)]
    pub private: Option<PathBuf>,
    /// Source datasets to mix, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub inputs: Vec<PathBuf>,
    /// Datasets kept by max-coverage mixing; 0 mixes all inputs uniformly.
    #[arg(long)]
    pub k: Option<usize>,
    /// live:<profile> | replay:<transcript> | mock:<model document>
    #[arg(long)]
    pub llm: Option<String>,
    /// Overrides the profile's model name.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, default_value_t = DEFAULT_PANEL)]
    pub panel: usize,
    #[arg(long, default_value_t = 5)]
    pub max_retries: usize,
    #[arg(long, default_value_t = DEFAULT_ROWS_PER_BATCH)]
    pub rows_per_batch: usize,
}

fn mix_mode(k: Option<usize>, default_k: usize) -> MixMode {
    match k {
        Some(0) => MixMode::Uniform,
        Some(k) => MixMode::MaxCoverage { k },
        None => MixMode::MaxCoverage { k: default_k },
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

pub fn run(mut args: GenerateArgs, out: &Path) -> Result<Outcome> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    args.schema = absolute(&args.schema);
    args.private = args.private.as_deref().map(absolute);
    args.inputs = args.inputs.iter().map(|p| absolute(p)).collect();
    let schema = load_schema(&args.schema)?;
    let private = args.private.as_ref().map(|p| load_dataset(&schema, p, Role::Private)).transpose()?;
    let sources: Vec<Dataset> = args.inputs.iter().map(|p| load_dataset(&schema, p, Role::Surrogate)).collect::<Result<_>>()?;

    let mut registry = GeneratorRegistry::with_baselines();
    registry.register(Box::new(MixGenerator { mode: mix_mode(args.k, sources.len().div_ceil(2).max(1)) }));
    if matches!(args.method.as_str(), "csv" | "agent") {
        let spec = args.llm.as_deref().ok_or_else(|| config_err(format!("`{}` needs --llm", args.method)))?;
        let mut source = LlmSource::parse(spec)?;
        if let LlmSource::Replay(p) | LlmSource::Mock(p) = &mut source {
            *p = absolute(p);
        }
        args.llm = Some(source.to_arg());
        let model = source.model(args.model.as_deref())?;
        args.model = Some(model.clone());
        let kind = if args.method == "csv" { MockKind::Csv(&schema) } else { MockKind::Agent(&schema) };
        let client = build_client(&source, kind, &out.join("transcript.jsonl"))?;
        registry.register(Box::new(CsvGenerator { client: client.clone(), model: model.clone(), rows_per_batch: args.rows_per_batch }));
        let mut agent = AgentGenerator::new(client, model);
        agent.panel = args.panel;
        agent.max_retries = args.max_retries;
        agent.mode = mix_mode(args.k, args.panel.div_ceil(2));
        registry.register(Box::new(agent));
    }
    std::fs::write(out.join("run.json"), serde_json::to_string_pretty(&args)? + "\n")?;

    let generator = registry.get(&args.method).map_err(|e| config_err(format!("{e}; known: {}", registry.names().join(", "))))?;
    let spec = GenSpec::new(args.m, args.seed).map_err(|e| config_err(e.to_string()))?;
    let ctx = GenContext { schema: &schema, private: private.as_ref(), sources: &sources };
    let generated = generator.generate(&ctx, &spec).map_err(|e| match e {
        GenError::InvalidSpec(_) | GenError::Unknown(_) => config_err(e.to_string()),
        other => anyhow::Error::new(other),
    })?;
    std::fs::write(out.join("dataset.csv"), generated.dataset.to_csv_string())?;
    for a in &generated.artifacts {
        std::fs::write(out.join(&a.name), &a.content)?;
    }
    eprintln!("wrote {} records to {}", generated.dataset.len(), out.join("dataset.csv").display());
    if generated.dataset.len() < args.m {
        return Ok(Outcome::Partial(format!("{} of {} records generated", generated.dataset.len(), args.m)));
    }
    Ok(Outcome::Done)
}

/// Rerun a recorded generation, serving completions from its transcript.
pub fn replay(run_dir: &Path, out: &Path) -> Result<Outcome> {
    let path = run_dir.join("run.json");
    let text = std::fs::read_to_string(&path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let mut args: GenerateArgs = serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    if args.llm.is_some() {
        args.llm = Some(LlmSource::Replay(absolute(&run_dir.join("transcript.jsonl"))).to_arg());
    }
    run(args, out)
}
