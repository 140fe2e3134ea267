use super::{mean, BenchError};
use crate::classifier::{
    auc_advantage, dp_finetune, pretrain, Budget, DpSgdParams, Featurizer, ModelState, PretrainParams, RunAuc,
    DEFAULT_CLIP, DEFAULT_DELTA,
};
use crate::dataset::{balance_by_downsampling, split_dataset, Dataset, Split};
use crate::rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const TASK1_EPSILONS: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierGrid {
    pub pretrain: Vec<PretrainParams>,
    pub finetune: Vec<DpSgdParams>,
}

impl ClassifierGrid {
    /// pre_num_epochs {1, 9} x pre_batch_size {32, 128} x pre_lr {3e-4, 3e-5};
    /// 20 DP epochs at batch size 128 with dp_lr {3e-3, 3e-4}.
    pub fn standard() -> Self {
        let mut pretrain = Vec::new();
        for epochs in [1, 9] {
            for batch_size in [32, 128] {
                for lr in [3e-4, 3e-5] {
                    pretrain.push(PretrainParams { epochs, batch_size, lr });
                }
            }
        }
        let finetune = [3e-3, 3e-4]
            .into_iter()
            .map(|lr| DpSgdParams { epochs: 20, batch_size: 128, lr, clip_norm: DEFAULT_CLIP, sigma_override: None })
            .collect();
        Self { pretrain, finetune }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task1Config {
    pub target: String,
    pub epsilons: Vec<f64>,
    pub delta: f64,
    pub grid: ClassifierGrid,
    pub n_seeds: usize,
    pub seed: u64,
}

impl Task1Config {
    pub fn new(target: impl Into<String>, seed: u64) -> Self {
        Self {
            target: target.into(),
            epsilons: TASK1_EPSILONS.to_vec(),
            delta: DEFAULT_DELTA,
            grid: ClassifierGrid::standard(),
            n_seeds: 10,
            seed,
        }
    }
}

/// One pretrain-then-finetune run paired with its no-pretraining control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task1Record {
    pub candidate: String,
    pub epsilon: f64,
    pub pretrain_config: usize,
    pub finetune_config: usize,
    pub seed: usize,
    pub auc: f64,
    pub baseline_auc: f64,
    pub advantage: f64,
    /// AUC of the pretrained model on the candidate's own validation split.
    pub public_valid_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task1Summary {
    pub candidate: String,
    pub epsilon: f64,
    /// Mean advantage over every grid point and seed.
    pub mean_advantage: f64,
    /// Mean advantage using only the pretraining config with the best public validation AUC.
    pub best_pretrain_advantage: f64,
    pub best_pretrain_config: Option<usize>,
    pub mean_auc: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task1Failure {
    pub candidate: String,
    pub pretrain_config: Option<usize>,
    pub seed: Option<usize>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Task1Output {
    pub records: Vec<Task1Record>,
    pub summaries: Vec<Task1Summary>,
    pub failures: Vec<Task1Failure>,
}

pub const NO_PRETRAINING: &str = "none";

struct Splits {
    train: Dataset,
    valid: Dataset,
    test: Dataset,
}

fn prepare(data: &Dataset, target: &str, seed: u64) -> Result<Splits, String> {
    let balanced = balance_by_downsampling(data, target, rng::derive_str(seed, "balance")).map_err(|e| e.to_string())?;
    let split = split_dataset(&balanced, rng::derive_str(seed, "split")).map_err(|e| e.to_string())?;
    Ok(Splits { train: split.split(Split::Train), valid: split.split(Split::Valid), test: split.split(Split::Test) })
}

fn finetune_seed(base: u64, seed: usize, f: usize, e: usize) -> u64 {
    rng::derive(rng::derive(rng::derive(rng::derive_str(base, "finetune"), seed as u64), f as u64), e as u64)
}

fn pretrain_seed(base: u64, seed: usize, p: usize) -> u64 {
    rng::derive(rng::derive(rng::derive_str(base, "pretrain"), seed as u64), p as u64)
}

/// Pretraining benefit of each candidate for DP fine-tuning on `private`.
/// Runs that fail (single-class splits, infeasible budgets) are excluded and listed.
pub fn run_task1(private: &Dataset, candidates: &[(String, Dataset)], cfg: &Task1Config) -> Result<Task1Output, BenchError> {
    if cfg.n_seeds == 0 || cfg.epsilons.is_empty() || cfg.grid.pretrain.is_empty() || cfg.grid.finetune.is_empty() {
        return Err(BenchError::Config("task 1 needs seeds, epsilons and a non-empty grid".into()));
    }
    if let Some((name, _)) = candidates.iter().find(|(_, d)| !d.same_schema(private)) {
        return Err(BenchError::Config(format!("candidate `{name}` has a different schema")));
    }
    let featurizer = Featurizer::new(&private.schema, &cfg.target).map_err(|e| BenchError::Config(e.to_string()))?;
    let priv_splits = prepare(private, &cfg.target, cfg.seed).map_err(BenchError::Config)?;
    let test_id = rng::derive_str(cfg.seed, "split");
    let n_eps = cfg.epsilons.len();
    let n_ft = cfg.grid.finetune.len();

    // controls: indexed [seed][finetune][epsilon]
    let jobs: Vec<(usize, usize, usize)> =
        (0..cfg.n_seeds).flat_map(|s| (0..n_ft).flat_map(move |f| (0..n_eps).map(move |e| (s, f, e)))).collect();
    let control: Vec<Result<(ModelState, f64), String>> = jobs
        .par_iter()
        .map(|&(s, f, e)| {
            let mut m = ModelState::new(featurizer.clone());
            let budget = Budget { epsilon: cfg.epsilons[e], delta: cfg.delta };
            dp_finetune(&mut m, &priv_splits.train, &cfg.grid.finetune[f], &budget, "private", finetune_seed(cfg.seed, s, f, e))
                .and_then(|_| m.auc(&priv_splits.test))
                .map(|auc| (m, auc))
                .map_err(|e| e.to_string())
        })
        .collect();
    let control_auc = |s: usize, f: usize, e: usize| control[(s * n_ft + f) * n_eps + e].as_ref().ok().map(|(_, a)| *a);

    let mut out = Task1Output::default();
    for (i, r) in control.iter().enumerate() {
        if let Err(reason) = r {
            out.failures.push(Task1Failure {
                candidate: NO_PRETRAINING.into(),
                pretrain_config: None,
                seed: Some(jobs[i].0),
                reason: reason.clone(),
            });
        }
    }

    for (name, data) in candidates {
        let splits = match prepare(data, &cfg.target, cfg.seed) {
            Ok(s) => s,
            Err(reason) => {
                out.failures.push(Task1Failure { candidate: name.clone(), pretrain_config: None, seed: None, reason });
                continue;
            }
        };
        let pjobs: Vec<(usize, usize)> =
            (0..cfg.n_seeds).flat_map(|s| (0..cfg.grid.pretrain.len()).map(move |p| (s, p))).collect();
        let results: Vec<Result<Vec<Task1Record>, String>> = pjobs
            .par_iter()
            .map(|&(s, p)| {
                let mut base = ModelState::new(featurizer.clone());
                pretrain(&mut base, &splits.train, &cfg.grid.pretrain[p], name, pretrain_seed(cfg.seed, s, p))
                    .map_err(|e| e.to_string())?;
                let valid_auc = base.auc(&splits.valid).map_err(|e| format!("public validation: {e}"))?;
                let mut recs = Vec::new();
                for f in 0..n_ft {
                    for e in 0..n_eps {
                        let Some(baseline) = control_auc(s, f, e) else { continue };
                        let mut m = base.clone();
                        let budget = Budget { epsilon: cfg.epsilons[e], delta: cfg.delta };
                        dp_finetune(&mut m, &priv_splits.train, &cfg.grid.finetune[f], &budget, "private", finetune_seed(cfg.seed, s, f, e))
                            .map_err(|e| e.to_string())?;
                        let auc = m.auc(&priv_splits.test).map_err(|e| e.to_string())?;
                        let advantage = auc_advantage(RunAuc { auc, test_id }, RunAuc { auc: baseline, test_id })
                            .map_err(|e| e.to_string())?;
                        recs.push(Task1Record {
                            candidate: name.clone(),
                            epsilon: cfg.epsilons[e],
                            pretrain_config: p,
                            finetune_config: f,
                            seed: s,
                            auc,
                            baseline_auc: baseline,
                            advantage,
                            public_valid_auc: valid_auc,
                        });
                    }
                }
                Ok(recs)
            })
            .collect();
        for ((s, p), r) in pjobs.into_iter().zip(results) {
            match r {
                Ok(recs) => out.records.extend(recs),
                Err(reason) => out.failures.push(Task1Failure {
                    candidate: name.clone(),
                    pretrain_config: Some(p),
                    seed: Some(s),
                    reason,
                }),
            }
        }
    }

    // control summaries: advantage is identically zero
    for (e, &eps) in cfg.epsilons.iter().enumerate() {
        let aucs: Vec<f64> = (0..cfg.n_seeds).flat_map(|s| (0..n_ft).filter_map(move |f| control_auc(s, f, e))).collect();
        out.summaries.push(Task1Summary {
            candidate: NO_PRETRAINING.into(),
            epsilon: eps,
            mean_advantage: 0.0,
            best_pretrain_advantage: 0.0,
            best_pretrain_config: None,
            mean_auc: mean(&aucs),
            runs: aucs.len(),
        });
    }
    for (name, _) in candidates {
        for &eps in &cfg.epsilons {
            let recs: Vec<&Task1Record> = out.records.iter().filter(|r| &r.candidate == name && r.epsilon == eps).collect();
            if recs.is_empty() {
                continue;
            }
            let best = best_pretrain_config(&recs, cfg.grid.pretrain.len());
            let chosen: Vec<f64> =
                recs.iter().filter(|r| Some(r.pretrain_config) == best).map(|r| r.advantage).collect();
            out.summaries.push(Task1Summary {
                candidate: name.clone(),
                epsilon: eps,
                mean_advantage: mean(&recs.iter().map(|r| r.advantage).collect::<Vec<_>>()),
                best_pretrain_advantage: mean(&chosen),
                best_pretrain_config: best,
                mean_auc: mean(&recs.iter().map(|r| r.auc).collect::<Vec<_>>()),
                runs: recs.len(),
            });
        }
    }
    Ok(out)
}

/// Pretraining config with the highest mean public validation AUC; ties go to the earlier config.
pub fn best_pretrain_config(records: &[&Task1Record], n_configs: usize) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for p in 0..n_configs {
        let vals: Vec<f64> = records.iter().filter(|r| r.pretrain_config == p).map(|r| r.public_valid_auc).collect();
        if vals.is_empty() {
            continue;
        }
        let m = mean(&vals);
        if best.is_none_or(|(_, b)| m > b) {
            best = Some((p, m));
        }
    }
    best.map(|(p, _)| p)
}
