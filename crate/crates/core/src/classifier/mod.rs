//! Logistic classifier over one-hot coded features, with plain minibatch
//! pretraining and DP-SGD fine-tuning (per-example clipping plus Gaussian noise).

mod accountant;
mod auc;

pub use accountant::{calibrate_sigma, epsilon_for, rho, zcdp_to_epsilon, SIGMA_CAP};
pub use auc::auc_from_scores;

use crate::dataset::Dataset;
use crate::rng;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("training or test data contains a single class")]
    SingleClass,
    #[error("empty data")]
    Empty,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid privacy budget: {0}")]
    InvalidBudget(String),
    #[error("target variable `{0}` not in schema or not binary")]
    BadTarget(String),
    #[error("runs were evaluated on different test splits")]
    MismatchedTest,
}

/// δ used for the classifier's (ε, δ) guarantee.
pub const DEFAULT_DELTA: f64 = 1e-5;
pub const DEFAULT_CLIP: f64 = 1.0;

/// Maps records to sparse one-hot features (every variable except the target).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub target: usize,
    offsets: Vec<Option<usize>>,
    pub dim: usize,
}

impl Featurizer {
    pub fn new(schema: &crate::schema::Schema, target: &str) -> Result<Self, ClassifierError> {
        let t = schema
            .index_of(target)
            .filter(|&t| schema.variables[t].cardinality() == 2)
            .ok_or_else(|| ClassifierError::BadTarget(target.to_string()))?;
        let mut offsets = Vec::with_capacity(schema.len());
        let mut dim = 0;
        for (v, spec) in schema.variables.iter().enumerate() {
            if v == t {
                offsets.push(None);
            } else {
                offsets.push(Some(dim));
                dim += spec.cardinality();
            }
        }
        Ok(Self { target: t, offsets, dim })
    }

    fn active(&self, cells: &[u32], out: &mut Vec<usize>) {
        out.clear();
        out.extend(self.offsets.iter().zip(cells).filter_map(|(o, &c)| o.map(|o| o + c as usize)));
    }

    /// Active feature indices and labels for every record.
    pub fn encode(&self, data: &Dataset) -> Encoded {
        let mut rows = Vec::with_capacity(data.len());
        let mut labels = Vec::with_capacity(data.len());
        let mut buf = Vec::new();
        for r in &data.records {
            self.active(&r.cells, &mut buf);
            rows.push(buf.clone());
            labels.push(r.cells[self.target] == 1);
        }
        Encoded { rows, labels }
    }
}

#[derive(Debug, Clone)]
pub struct Encoded {
    pub rows: Vec<Vec<usize>>,
    pub labels: Vec<bool>,
}

impl Encoded {
    fn check_two_classes(&self) -> Result<(), ClassifierError> {
        if self.rows.is_empty() {
            return Err(ClassifierError::Empty);
        }
        let pos = self.labels.iter().filter(|&&l| l).count();
        if pos == 0 || pos == self.labels.len() {
            return Err(ClassifierError::SingleClass);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Pretrained { source: String, epochs: usize, batch_size: usize, lr: f64 },
    Finetuned { source: String, ledger: DpLedger },
    Trained { source: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub featurizer: Featurizer,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub provenance: Vec<Provenance>,
}

impl ModelState {
    pub fn new(featurizer: Featurizer) -> Self {
        let weights = vec![0.0; featurizer.dim];
        Self { featurizer, weights, bias: 0.0, provenance: Vec::new() }
    }

    fn logit(&self, active: &[usize]) -> f64 {
        self.bias + active.iter().map(|&i| self.weights[i]).sum::<f64>()
    }

    pub fn scores(&self, data: &Dataset) -> Vec<f64> {
        let enc = self.featurizer.encode(data);
        enc.rows.iter().map(|a| self.logit(a)).collect()
    }

    pub fn auc(&self, test: &Dataset) -> Result<f64, ClassifierError> {
        let enc = self.featurizer.encode(test);
        let scores: Vec<f64> = enc.rows.iter().map(|a| self.logit(a)).collect();
        auc_from_scores(&scores, &enc.labels)
    }

    /// Fraction misclassified at probability threshold 1/2.
    pub fn error_rate(&self, test: &Dataset) -> Result<f64, ClassifierError> {
        let enc = self.featurizer.encode(test);
        if enc.rows.is_empty() {
            return Err(ClassifierError::Empty);
        }
        let wrong = enc.rows.iter().zip(&enc.labels).filter(|(a, &l)| (self.logit(a) > 0.0) != l).count();
        Ok(wrong as f64 / enc.rows.len() as f64)
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpSgdParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: f64,
    /// Replaces the calibrated noise multiplier when set (testing and degenerate runs).
    pub sigma_override: Option<f64>,
}

impl Default for DpSgdParams {
    fn default() -> Self {
        Self { epochs: 20, batch_size: 128, lr: 3e-3, clip_norm: DEFAULT_CLIP, sigma_override: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub epsilon: f64,
    pub delta: f64,
}

/// What a DP fine-tuning run spent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpLedger {
    pub epsilon: f64,
    pub delta: f64,
    pub sigma: f64,
    pub clip_norm: f64,
    pub steps: usize,
    pub rho: f64,
}

/// Per-step observations for monitored runs.
#[derive(Debug, Clone)]
pub struct StepInfo<'a> {
    pub step: usize,
    pub batch_len: usize,
    /// Norm of each example's (clipped) gradient contribution.
    pub contribution_norms: &'a [f64],
    /// Noise added to the batch-mean gradient, one entry per coordinate (bias last).
    pub noise: &'a [f64],
}

struct SgdConfig {
    epochs: usize,
    batch_size: usize,
    lr: f64,
    clip: Option<f64>,
    sigma: f64,
}

fn steps_for(n: usize, epochs: usize, batch_size: usize) -> usize {
    epochs * n.div_ceil(batch_size)
}

/// Shared minibatch loop. Shuffles each epoch from one seeded stream and
/// draws noise from another, so noise-free runs consume identical shuffles.
fn run_sgd(
    model: &mut ModelState,
    data: &Encoded,
    cfg: &SgdConfig,
    seed: u64,
    monitor: &mut dyn FnMut(&StepInfo<'_>),
) -> usize {
    let n = data.rows.len();
    let dim = model.weights.len();
    let mut shuffle_rng = rng::substream(seed, 0);
    let mut noise_rng = rng::substream(seed, 1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; dim + 1];
    let mut noise = vec![0.0; dim + 1];
    let mut norms = Vec::with_capacity(cfg.batch_size);
    let mut step = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            norms.clear();
            for &i in batch {
                let active = &data.rows[i];
                let y = if data.labels[i] { 1.0 } else { 0.0 };
                let residual = sigmoid(model.logit(active)) - y;
                // one-hot rows: every active coordinate and the bias get `residual`
                let norm = residual.abs() * ((active.len() + 1) as f64).sqrt();
                let scale = match cfg.clip {
                    Some(c) if norm > c => c / norm,
                    _ => 1.0,
                };
                let g = residual * scale;
                for &a in active {
                    grad[a] += g;
                }
                grad[dim] += g;
                norms.push(norm * scale);
            }
            let b = batch.len() as f64;
            let noise_std = cfg.sigma * cfg.clip.unwrap_or(0.0) / b;
            for (slot, gval) in noise.iter_mut().zip(grad.iter_mut()) {
                *slot = if noise_std > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut noise_rng);
                    z * noise_std
                } else {
                    0.0
                };
                *gval = *gval / b + *slot;
            }
            monitor(&StepInfo { step, batch_len: batch.len(), contribution_norms: &norms, noise: &noise });
            for (w, g) in model.weights.iter_mut().zip(&grad) {
                *w -= cfg.lr * g;
            }
            model.bias -= cfg.lr * grad[dim];
            step += 1;
        }
    }
    step
}

/// Non-private minibatch gradient descent on (surrogate) public data.
pub fn pretrain(
    model: &mut ModelState,
    data: &Dataset,
    params: &PretrainParams,
    source: &str,
    seed: u64,
) -> Result<(), ClassifierError> {
    if params.epochs == 0 || params.batch_size == 0 || !(params.lr > 0.0) {
        return Err(ClassifierError::InvalidParams("pretraining needs at least one epoch, a positive batch size and a positive lr".into()));
    }
    let enc = model.featurizer.encode(data);
    enc.check_two_classes()?;
    let cfg = SgdConfig { epochs: params.epochs, batch_size: params.batch_size, lr: params.lr, clip: None, sigma: 0.0 };
    run_sgd(model, &enc, &cfg, seed, &mut |_| {});
    model.provenance.push(Provenance::Pretrained {
        source: source.to_string(),
        epochs: params.epochs,
        batch_size: params.batch_size,
        lr: params.lr,
    });
    Ok(())
}

/// Non-private fit used by evaluation metrics: plain pretraining semantics from a zero model.
pub fn train_nonprivate(
    featurizer: &Featurizer,
    data: &Dataset,
    params: &PretrainParams,
    seed: u64,
) -> Result<ModelState, ClassifierError> {
    let mut m = ModelState::new(featurizer.clone());
    pretrain(&mut m, data, params, "evaluation", seed)?;
    m.provenance = vec![Provenance::Trained { source: "evaluation".into() }];
    Ok(m)
}

pub fn dp_finetune(
    model: &mut ModelState,
    data: &Dataset,
    params: &DpSgdParams,
    budget: &Budget,
    source: &str,
    seed: u64,
) -> Result<DpLedger, ClassifierError> {
    dp_finetune_monitored(model, data, params, budget, source, seed, &mut |_| {})
}

pub fn dp_finetune_monitored(
    model: &mut ModelState,
    data: &Dataset,
    params: &DpSgdParams,
    budget: &Budget,
    source: &str,
    seed: u64,
    monitor: &mut dyn FnMut(&StepInfo<'_>),
) -> Result<DpLedger, ClassifierError> {
    if params.epochs == 0 || params.batch_size == 0 || !(params.lr > 0.0) || !(params.clip_norm > 0.0) {
        return Err(ClassifierError::InvalidParams("DP-SGD needs positive epochs, batch size, lr and clip norm".into()));
    }
    let enc = model.featurizer.encode(data);
    enc.check_two_classes()?;
    let steps = steps_for(enc.rows.len(), params.epochs, params.batch_size);
    let sigma = match params.sigma_override {
        Some(s) => s,
        None => calibrate_sigma(budget.epsilon, budget.delta, steps)?,
    };
    let clip = if params.clip_norm.is_finite() { Some(params.clip_norm) } else { None };
    let cfg = SgdConfig { epochs: params.epochs, batch_size: params.batch_size, lr: params.lr, clip, sigma };
    run_sgd(model, &enc, &cfg, seed, monitor);
    let ledger = DpLedger {
        epsilon: if sigma > 0.0 { epsilon_for(sigma, steps, budget.delta) } else { f64::INFINITY },
        delta: budget.delta,
        sigma,
        clip_norm: params.clip_norm,
        steps,
        rho: if sigma > 0.0 { rho(sigma, steps) } else { f64::INFINITY },
    };
    model.provenance.push(Provenance::Finetuned { source: source.to_string(), ledger });
    Ok(ledger)
}

/// AUC of a pretrained run minus AUC of the matching no-pretraining run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunAuc {
    pub auc: f64,
    /// Identifies the private test split the AUC was measured on.
    pub test_id: u64,
}

pub fn auc_advantage(pretrained: RunAuc, baseline: RunAuc) -> Result<f64, ClassifierError> {
    if pretrained.test_id != baseline.test_id {
        return Err(ClassifierError::MismatchedTest);
    }
    Ok(pretrained.auc - baseline.auc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Record, Role};
    use crate::schema::{Schema, VariableSpec};
    use std::sync::Arc;

    fn separable(n: usize) -> Dataset {
        let schema = Arc::new(
            Schema::new(
                vec![VariableSpec::new("Y", &["0", "1"]), VariableSpec::new("X", &["a", "b", "c"]), VariableSpec::new("Z", &["u", "v"])],
                "",
            )
            .unwrap(),
        );
        let records = (0..n)
            .map(|i| {
                let y = (i % 2) as u32;
                let x = if y == 1 { 2 } else { (i / 2 % 2) as u32 };
                Record::new(vec![y, x, (i / 3 % 2) as u32])
            })
            .collect();
        Dataset::new(schema, records, Role::Public)
    }

    #[test]
    fn pretraining_separates_separable_data() {
        let data = separable(200);
        let f = Featurizer::new(&data.schema, "Y").unwrap();
        let mut m = ModelState::new(f);
        pretrain(&mut m, &data, &PretrainParams { epochs: 9, batch_size: 32, lr: 0.5 }, "toy", 1).unwrap();
        assert_eq!(m.error_rate(&data).unwrap(), 0.0);
        assert_eq!(m.auc(&data).unwrap(), 1.0);
    }

    #[test]
    fn pretrain_guards_and_determinism() {
        let data = separable(50);
        let f = Featurizer::new(&data.schema, "Y").unwrap();
        let p = PretrainParams { epochs: 0, batch_size: 8, lr: 0.1 };
        assert!(pretrain(&mut ModelState::new(f.clone()), &data, &p, "x", 1).is_err());
        let p = PretrainParams { epochs: 2, batch_size: 8, lr: 0.1 };
        let mut a = ModelState::new(f.clone());
        let mut b = ModelState::new(f.clone());
        pretrain(&mut a, &data, &p, "x", 4).unwrap();
        pretrain(&mut b, &data, &p, "x", 4).unwrap();
        assert_eq!(a, b);
        let single = Dataset::new(data.schema.clone(), data.records.iter().filter(|r| r.cells[0] == 1).cloned().collect(), Role::Public);
        assert_eq!(pretrain(&mut ModelState::new(f), &single, &p, "x", 1), Err(ClassifierError::SingleClass));
    }

    #[test]
    fn clipping_bounds_every_contribution() {
        let data = separable(100);
        let f = Featurizer::new(&data.schema, "Y").unwrap();
        let mut m = ModelState::new(f);
        let params = DpSgdParams { epochs: 3, batch_size: 16, lr: 0.1, clip_norm: 0.3, sigma_override: None };
        let mut max_norm: f64 = 0.0;
        dp_finetune_monitored(&mut m, &data, &params, &Budget { epsilon: 1.0, delta: 1e-5 }, "p", 2, &mut |s| {
            max_norm = s.contribution_norms.iter().copied().fold(max_norm, f64::max);
        })
        .unwrap();
        assert!(max_norm <= 0.3 + 1e-12);
        assert!(max_norm > 0.29);
    }

    #[test]
    fn large_gradient_clips_to_exactly_c() {
        // residual 1 with 99 active features + bias: norm 10
        let schema = Arc::new(
            Schema::new(
                std::iter::once(VariableSpec::new("Y", &["0", "1"]))
                    .chain((0..99).map(|i| VariableSpec::new(&format!("X{i}"), &["a"])))
                    .collect(),
                "",
            )
            .unwrap(),
        );
        let mut cells_pos = vec![1u32];
        cells_pos.extend(std::iter::repeat(0).take(99));
        let mut cells_neg = cells_pos.clone();
        cells_neg[0] = 0;
        let data = Dataset::new(schema.clone(), vec![Record::new(cells_pos), Record::new(cells_neg)], Role::Private);
        let f = Featurizer::new(&schema, "Y").unwrap();
        let mut m = ModelState::new(f);
        m.bias = -50.0; // positive example residual ~ -1
        let params = DpSgdParams { epochs: 1, batch_size: 1, lr: 0.0001, clip_norm: 1.0, sigma_override: Some(0.0) };
        let mut seen = Vec::new();
        dp_finetune_monitored(&mut m, &data, &params, &Budget { epsilon: 1.0, delta: 1e-5 }, "p", 0, &mut |s| {
            seen.extend_from_slice(s.contribution_norms)
        })
        .unwrap();
        assert!(seen.iter().any(|&n| (n - 1.0).abs() < 1e-9), "{seen:?}");
    }

    #[test]
    fn degenerate_dp_sgd_equals_plain_sgd() {
        let data = separable(90);
        let f = Featurizer::new(&data.schema, "Y").unwrap();
        let mut plain = ModelState::new(f.clone());
        pretrain(&mut plain, &data, &PretrainParams { epochs: 4, batch_size: 16, lr: 0.2 }, "x", 9).unwrap();
        let mut dp = ModelState::new(f);
        let params = DpSgdParams { epochs: 4, batch_size: 16, lr: 0.2, clip_norm: f64::INFINITY, sigma_override: Some(0.0) };
        dp_finetune(&mut dp, &data, &params, &Budget { epsilon: 1.0, delta: 1e-5 }, "x", 9).unwrap();
        assert_eq!(plain.weights, dp.weights);
        assert_eq!(plain.bias, dp.bias);
    }

    #[test]
    fn ledger_matches_accountant() {
        let data = separable(300);
        let f = Featurizer::new(&data.schema, "Y").unwrap();
        let mut m = ModelState::new(f);
        let params = DpSgdParams { batch_size: 64, ..Default::default() };
        let ledger = dp_finetune(&mut m, &data, &params, &Budget { epsilon: 2.0, delta: 1e-5 }, "p", 1).unwrap();
        assert_eq!(ledger.steps, 20 * 5);
        assert!((ledger.epsilon - epsilon_for(ledger.sigma, ledger.steps, 1e-5)).abs() < 1e-12);
        assert!(ledger.epsilon <= 2.0 && ledger.epsilon >= 2.0 - 1e-6);
        assert!(m.is_finite());
        assert!(matches!(m.provenance.last(), Some(Provenance::Finetuned { .. })));
    }

    #[test]
    fn advantage_arithmetic() {
        let r = |auc| RunAuc { auc, test_id: 1 };
        assert_eq!(auc_advantage(r(0.7), r(0.7)).unwrap(), 0.0);
        assert!((auc_advantage(r(0.84), r(0.65)).unwrap() - 0.19).abs() < 1e-12);
        assert!((auc_advantage(r(0.48), r(0.53)).unwrap() + 0.05).abs() < 1e-12);
        assert!(auc_advantage(r(0.5), RunAuc { auc: 0.5, test_id: 2 }).is_err());
    }
}
