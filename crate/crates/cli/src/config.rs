use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use surrogate_core::bench::{ClassifierGrid, Objective, SeedAggregation};
use surrogate_core::dataset::{Dataset, Role};
use surrogate_core::schema::Schema;

/// Raised for problems with the user's configuration rather than the run itself.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

pub fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Benchmark run configuration. Relative paths resolve against the file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: PathBuf,
    pub private: PathBuf,
    /// Candidate name to dataset path, in reporting order.
    pub candidates: Vec<CandidateSpec>,
    pub target: String,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_mechanisms")]
    pub mechanisms: Vec<String>,
    #[serde(default)]
    pub task1: Task1Section,
    #[serde(default)]
    pub task2: Task2Section,
    #[serde(skip)]
    pub base: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSpec {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task1Section {
    #[serde(default)]
    pub grid: Option<ClassifierGrid>,
    #[serde(default)]
    pub epsilons: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task2Section {
    /// Objectives reported as relative degradation.
    #[serde(default)]
    pub relative: Vec<Objective>,
    #[serde(default)]
    pub aggregation: SeedAggregation,
}

fn default_epsilons() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0, 16.0]
}

fn default_seeds() -> usize {
    10
}

fn default_mechanisms() -> Vec<String> {
    vec!["privbayes".into(), "noisy_marginals".into()]
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if cfg.seeds == 0 || cfg.epsilons.is_empty() {
            return Err(config_err("seeds and epsilons must be non-empty"));
        }
        if cfg.epsilons.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(config_err("every epsilon must be positive and finite"));
        }
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn load_schema(&self) -> Result<Arc<Schema>> {
        load_schema(&self.resolve(&self.schema))
    }

    pub fn load_private(&self, schema: &Arc<Schema>) -> Result<Dataset> {
        load_dataset(schema, &self.resolve(&self.private), Role::Private)
    }

    pub fn load_candidates(&self, schema: &Arc<Schema>) -> Result<Vec<(String, Dataset)>> {
        self.candidates
            .iter()
            .map(|c| Ok((c.name.clone(), load_dataset(schema, &self.resolve(&c.path), Role::Public)?)))
            .collect()
    }
}

pub fn load_schema(path: &Path) -> Result<Arc<Schema>> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    Ok(Arc::new(Schema::parse(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?))
}

pub fn load_dataset(schema: &Arc<Schema>, path: &Path, role: Role) -> Result<Dataset> {
    let f = std::fs::File::open(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    Dataset::read_csv(schema.clone(), f, role).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

pub fn parse_epsilons(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad epsilon `{x}`")).map_err(|e| config_err(e.to_string())))
        .collect()
}
