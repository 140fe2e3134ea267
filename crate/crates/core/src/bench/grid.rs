use super::journal::{key, Journal};
use super::BenchError;
use crate::classifier::PretrainParams;
use crate::dataset::{split_dataset, Dataset, Split};
use crate::dp_synth::{synth_sample, DpMechanism, HyperConfig, PrivacyBudget};
use crate::metrics::{evaluate, EvalSettings, MetricVector};
use crate::rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// What to sweep for one mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub target: String,
    pub epsilons: Vec<f64>,
    /// Defaults to the mechanism's own grid.
    #[serde(default)]
    pub configs: Option<Vec<HyperConfig>>,
    pub n_seeds: usize,
    pub seed: u64,
    #[serde(default = "default_eval_classifier")]
    pub eval_classifier: PretrainParams,
}

fn default_eval_classifier() -> PretrainParams {
    EvalSettings::new("", 0).classifier
}

impl GridSpec {
    pub fn new(target: impl Into<String>, epsilons: Vec<f64>, n_seeds: usize, seed: u64) -> Self {
        Self { target: target.into(), epsilons, configs: None, n_seeds, seed, eval_classifier: default_eval_classifier() }
    }

    pub fn configs_for(&self, mech: &dyn DpMechanism) -> Vec<HyperConfig> {
        self.configs.clone().unwrap_or_else(|| mech.grid())
    }
}

/// One completed (or failed) fit-sample-evaluate run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    pub mechanism: String,
    pub config_index: usize,
    pub config: HyperConfig,
    pub epsilon: f64,
    pub seed: usize,
    pub metrics: Option<MetricVector>,
    pub error: Option<String>,
}

pub type GridCell = Option<MetricVector>;

/// Metric vectors of every run of one mechanism on one dataset, indexed by
/// epsilon, config and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthGrid {
    pub method: String,
    pub mechanism: String,
    pub epsilons: Vec<f64>,
    pub n_configs: usize,
    pub n_seeds: usize,
    pub records: Vec<RunRecord>,
}

impl SynthGrid {
    pub fn get(&self, e: usize, c: usize, s: usize) -> Option<&MetricVector> {
        self.records[(e * self.n_configs + c) * self.n_seeds + s].metrics.as_ref()
    }

    pub fn failures(&self) -> impl Iterator<Item = &RunRecord> {
        self.records.iter().filter(|r| r.metrics.is_none())
    }
}

fn fit_seed(base: u64, c: usize, e: usize, s: usize) -> u64 {
    rng::derive(rng::derive(rng::derive(rng::derive_str(base, "fit"), c as u64), e as u64), s as u64)
}

/// Fit, sample and evaluate the mechanism on `data` at every grid point.
/// Seeds depend only on the grid position, so two datasets with equal
/// contents produce identical grids.
pub fn evaluate_grid(
    method: &str,
    data: &Dataset,
    mech: &dyn DpMechanism,
    spec: &GridSpec,
    journal: Option<&Journal>,
) -> Result<SynthGrid, BenchError> {
    let configs = spec.configs_for(mech);
    if configs.is_empty() || spec.epsilons.is_empty() || spec.n_seeds == 0 {
        return Err(BenchError::Config("grid needs configs, epsilons and seeds".into()));
    }
    let split = split_dataset(data, rng::derive_str(spec.seed, "split")).map_err(|e| BenchError::Config(format!("{method}: {e}")))?;
    let train = split.split(Split::Train);
    let test = split.split(Split::Test);
    let (ne, nc, ns) = (spec.epsilons.len(), configs.len(), spec.n_seeds);
    let jobs: Vec<(usize, usize, usize)> =
        (0..ne).flat_map(|e| (0..nc).flat_map(move |c| (0..ns).map(move |s| (e, c, s)))).collect();
    let records: Vec<Result<RunRecord, BenchError>> = jobs
        .par_iter()
        .map(|&(e, c, s)| {
            let mut rec = RunRecord {
                method: method.to_string(),
                mechanism: mech.name().to_string(),
                config_index: c,
                config: configs[c].clone(),
                epsilon: spec.epsilons[e],
                seed: s,
                metrics: None,
                error: None,
            };
            if let Some(prev) = journal.and_then(|j| j.lookup(&key(&rec))) {
                if prev.config == rec.config {
                    return Ok(prev.clone());
                }
            }
            let seed = fit_seed(spec.seed, c, e, s);
            let settings = EvalSettings {
                target: spec.target.clone(),
                classifier: spec.eval_classifier,
                seed: rng::derive(rng::derive_str(spec.seed, "eval"), s as u64),
            };
            let outcome = PrivacyBudget::pure(spec.epsilons[e])
                .and_then(|b| mech.fit(&train, &b, &configs[c], seed))
                .and_then(|f| synth_sample(&f, train.len(), rng::derive_str(seed, "sample")))
                .map_err(|e| e.to_string())
                .and_then(|synth| evaluate(&train, &synth, &test, &settings).map_err(|e| e.to_string()));
            match outcome {
                Ok(m) => rec.metrics = Some(m),
                Err(e) => rec.error = Some(e),
            }
            if let Some(j) = journal {
                j.append(&rec)?;
            }
            Ok(rec)
        })
        .collect();
    Ok(SynthGrid {
        method: method.to_string(),
        mechanism: mech.name().to_string(),
        epsilons: spec.epsilons.clone(),
        n_configs: nc,
        n_seeds: ns,
        records: records.into_iter().collect::<Result<_, _>>()?,
    })
}
