use super::primitives::laplace;
use super::privbayes::normalize_row;
use super::{hyper, BudgetLedger, DpMechanism, DpSynthError, FittedSynth, HyperConfig, LedgerEntry, PrivacyBudget};
use crate::bayesnet::BayesNet;
use crate::dataset::Dataset;
use crate::rng;

/// Pseudo-count grid for the noisy-marginals prior.
pub const NOISY_PRIORS: [f64; 3] = [0.0, 1.0, 10.0];

pub fn noisy_marginals_fit(data: &Dataset, budget: &PrivacyBudget, seed: u64) -> Result<FittedSynth, DpSynthError> {
    noisy_marginals_fit_with(data, budget, 0.0, seed)
}

/// Independent per-column histograms with Laplace noise of scale `2d / epsilon`,
/// clamped at zero, plus `prior` pseudo-counts per value, then normalized.
pub fn noisy_marginals_fit_with(
    data: &Dataset,
    budget: &PrivacyBudget,
    prior: f64,
    seed: u64,
) -> Result<FittedSynth, DpSynthError> {
    budget.require_pure()?;
    if data.is_empty() {
        return Err(DpSynthError::Empty);
    }
    if !(prior >= 0.0) {
        return Err(DpSynthError::Params(format!("prior must be nonnegative, got {prior}")));
    }
    let schema = &data.schema;
    let d = schema.len();
    let eps_col = budget.epsilon / d as f64;
    let scale = 2.0 / eps_col;
    let mut ledger = BudgetLedger::new(budget.epsilon);
    ledger.allocations.insert("parameters".into(), budget.epsilon);
    let mut noise_rng = rng::seeded(rng::derive_str(seed, "noise"));
    let mut cpts = Vec::with_capacity(d);
    for v in 0..d {
        let mut counts = vec![0.0f64; schema.variables[v].cardinality()];
        for c in data.column(v) {
            counts[c as usize] += 1.0;
        }
        let noisy: Vec<f64> = counts.iter().map(|c| (c + laplace(&mut noise_rng, scale)).max(0.0) + prior).collect();
        cpts.push(vec![normalize_row(&noisy)]);
        ledger.entries.push(LedgerEntry {
            stage: "parameters".into(),
            mechanism: "laplace".into(),
            epsilon: eps_col,
            sensitivity: 2.0,
            scale: Some(scale),
        });
    }
    let bn = BayesNet { schema: schema.clone(), order: (0..d).collect(), parents: vec![Vec::new(); d], cpts };
    Ok(FittedSynth { mechanism: "noisy_marginals".into(), bn, ledger })
}

pub struct NoisyMarginals;

impl DpMechanism for NoisyMarginals {
    fn name(&self) -> &str {
        "noisy_marginals"
    }

    fn grid(&self) -> Vec<HyperConfig> {
        NOISY_PRIORS.iter().map(|&p| HyperConfig::from([("prior".into(), p)])).collect()
    }

    fn fit(&self, data: &Dataset, budget: &PrivacyBudget, config: &HyperConfig, seed: u64) -> Result<FittedSynth, DpSynthError> {
        noisy_marginals_fit_with(data, budget, hyper(config, "prior")?, seed)
    }
}
