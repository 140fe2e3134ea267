//! Differentially private synthesizers: a PrivBayes-style Bayesian network
//! learner and an independent noisy-marginals baseline.
//!
//! Both produce a [`FittedSynth`]: a [`BayesNet`] plus the budget ledger of the
//! fit. Mechanisms implement [`DpMechanism`] and are looked up by name in a
//! [`MechanismRegistry`], which also exposes each mechanism's tuning grid.

mod noisy;
mod primitives;
mod privbayes;

pub use noisy::{noisy_marginals_fit, noisy_marginals_fit_with, NoisyMarginals, NOISY_PRIORS};
pub use primitives::{exp_mech_probabilities, exp_mech_select, laplace, mi_from_joint, mi_sensitivity, mutual_info};
pub use privbayes::{
    k_max, privbayes_fit, privbayes_fit_traced, FitTrace, PrivBayes, PrivBayesParams, MAX_CANDIDATES, PRIVBAYES_SPLITS,
    PRIVBAYES_THETAS,
};

use crate::bayesnet::{BayesNet, BayesNetDoc};
use crate::dataset::{Dataset, Role};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DpSynthError {
    #[error("invalid budget: {0}")]
    Budget(String),
    #[error("invalid hyperparameters: {0}")]
    Params(String),
    #[error("empty dataset")]
    Empty,
    #[error("sample size must be at least 1")]
    ZeroSamples,
    #[error("unknown mechanism `{0}`")]
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self, DpSynthError> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(DpSynthError::Budget(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(delta >= 0.0) || delta >= 1.0 {
            return Err(DpSynthError::Budget(format!("delta must be in [0, 1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn pure(epsilon: f64) -> Result<Self, DpSynthError> {
        Self::new(epsilon, 0.0)
    }

    fn require_pure(&self) -> Result<(), DpSynthError> {
        if self.delta != 0.0 {
            return Err(DpSynthError::Budget("this mechanism needs a pure budget (delta = 0)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub stage: String,
    pub mechanism: String,
    pub epsilon: f64,
    pub sensitivity: f64,
    /// Laplace scale, absent for the exponential mechanism.
    pub scale: Option<f64>,
}

/// Where a fit spent its budget. Allocations sum to the total; entries
/// record each individual mechanism invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub epsilon: f64,
    pub allocations: BTreeMap<String, f64>,
    pub entries: Vec<LedgerEntry>,
}

impl BudgetLedger {
    fn new(epsilon: f64) -> Self {
        Self { epsilon, allocations: BTreeMap::new(), entries: Vec::new() }
    }

    /// Allocations sum to the total and each Laplace scale equals sensitivity / epsilon.
    pub fn check(&self) -> Result<(), String> {
        let total: f64 = self.allocations.values().sum();
        if (total - self.epsilon).abs() > 1e-9 * self.epsilon.max(1.0) {
            return Err(format!("allocations sum to {total}, budget is {}", self.epsilon));
        }
        for stage in self.allocations.keys() {
            let spent: f64 = self.entries.iter().filter(|e| e.stage == *stage).map(|e| e.epsilon).sum();
            if spent > self.allocations[stage] * (1.0 + 1e-9) {
                return Err(format!("stage `{stage}` spends {spent} of {}", self.allocations[stage]));
            }
        }
        for e in &self.entries {
            if let Some(scale) = e.scale {
                if (scale - e.sensitivity / e.epsilon).abs() > 1e-9 * scale {
                    return Err(format!("entry `{}`: scale {scale} != {}/{}", e.stage, e.sensitivity, e.epsilon));
                }
            }
        }
        Ok(())
    }

    pub fn spent(&self) -> f64 {
        self.entries.iter().map(|e| e.epsilon).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedSynth {
    pub mechanism: String,
    pub bn: BayesNet,
    pub ledger: BudgetLedger,
}

#[derive(Serialize)]
struct FittedDoc<'a> {
    mechanism: &'a str,
    bayesnet: BayesNetDoc,
    budget: &'a BudgetLedger,
}

impl FittedSynth {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&FittedDoc { mechanism: &self.mechanism, bayesnet: self.bn.to_doc(), budget: &self.ledger })
            .expect("serializable")
    }
}

/// Draw `m` records from a fitted model.
pub fn synth_sample(model: &FittedSynth, m: usize, seed: u64) -> Result<Dataset, DpSynthError> {
    if m == 0 {
        return Err(DpSynthError::ZeroSamples);
    }
    Ok(model.bn.sample(m, seed, Role::Surrogate))
}

/// Hyperparameter assignment, by name.
pub type HyperConfig = BTreeMap<String, f64>;

pub trait DpMechanism: Send + Sync {
    fn name(&self) -> &str;
    /// Candidate configurations for tuning.
    fn grid(&self) -> Vec<HyperConfig>;
    fn fit(&self, data: &Dataset, budget: &PrivacyBudget, config: &HyperConfig, seed: u64) -> Result<FittedSynth, DpSynthError>;
}

pub(crate) fn hyper(config: &HyperConfig, key: &str) -> Result<f64, DpSynthError> {
    config.get(key).copied().ok_or_else(|| DpSynthError::Params(format!("missing `{key}`")))
}

#[derive(Default)]
pub struct MechanismRegistry {
    mechanisms: BTreeMap<String, Box<dyn DpMechanism>>,
}

impl MechanismRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_defaults() -> Self {
        let mut r = Self::new();
        r.register(Box::new(PrivBayes));
        r.register(Box::new(NoisyMarginals));
        r
    }

    pub fn register(&mut self, m: Box<dyn DpMechanism>) {
        self.mechanisms.insert(m.name().to_string(), m);
    }

    pub fn get(&self, name: &str) -> Result<&dyn DpMechanism, DpSynthError> {
        self.mechanisms.get(name).map(|m| m.as_ref()).ok_or_else(|| DpSynthError::Unknown(name.into()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.mechanisms.keys().map(String::as_str).collect()
    }
}

pub fn config_label(config: &HyperConfig) -> String {
    config.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",")
}
