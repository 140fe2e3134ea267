use super::primitives::{exp_mech_select, laplace, mi_sensitivity, mutual_info};
use super::{hyper, BudgetLedger, DpMechanism, DpSynthError, FittedSynth, HyperConfig, LedgerEntry, PrivacyBudget};
use crate::bayesnet::{config_count, config_index, BayesNet};
use crate::dataset::Dataset;
use crate::metrics::kway_subsets;
use crate::rng;
use rand::seq::SliceRandom;
use rayon::prelude::*;

pub const PRIVBAYES_THETAS: [f64; 4] = [2.0, 8.0, 32.0, 64.0];
pub const PRIVBAYES_SPLITS: [f64; 3] = [0.1, 0.5, 0.75];

/// Upper bound on parent-set candidates scored per variable; the parent-set
/// size for a variable shrinks until its candidate count fits.
pub const MAX_CANDIDATES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivBayesParams {
    /// Required signal-to-noise ratio of the noisiest conditional table.
    pub theta: f64,
    /// Share of the budget spent on structure learning.
    pub epsilon_split: f64,
}

impl PrivBayesParams {
    pub fn new(theta: f64, epsilon_split: f64) -> Result<Self, DpSynthError> {
        if !(theta > 0.0) {
            return Err(DpSynthError::Params(format!("theta must be positive, got {theta}")));
        }
        if !(epsilon_split > 0.0 && epsilon_split < 1.0) {
            return Err(DpSynthError::Params(format!("epsilon_split must be in (0, 1), got {epsilon_split}")));
        }
        Ok(Self { theta, epsilon_split })
    }
}

impl Default for PrivBayesParams {
    fn default() -> Self {
        Self { theta: 8.0, epsilon_split: 0.5 }
    }
}

/// Largest parent-set size `k` such that `n * eps2 / (2 * d * cells(k)) >= theta`,
/// where `cells(k)` is the product of the `k + 1` largest cardinalities.
pub fn k_max(cardinalities: &[usize], n: usize, eps2: f64, theta: f64) -> usize {
    let d = cardinalities.len();
    let mut sorted = cardinalities.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let mut best = 0;
    let mut cells = 1.0f64;
    for k in 0..d {
        cells *= sorted[k] as f64;
        if n as f64 * eps2 / (2.0 * d as f64 * cells) >= theta {
            best = k;
        } else {
            break;
        }
    }
    best
}

/// Raw Laplace noise added to each conditional table, in schema variable order.
#[derive(Debug, Clone, Default)]
pub struct FitTrace {
    pub noise: Vec<Vec<f64>>,
    pub scale: f64,
    pub k_max: usize,
}

pub fn privbayes_fit(
    data: &Dataset,
    budget: &PrivacyBudget,
    params: &PrivBayesParams,
    seed: u64,
) -> Result<FittedSynth, DpSynthError> {
    privbayes_fit_traced(data, budget, params, seed, &mut FitTrace::default())
}

pub fn privbayes_fit_traced(
    data: &Dataset,
    budget: &PrivacyBudget,
    params: &PrivBayesParams,
    seed: u64,
    trace: &mut FitTrace,
) -> Result<FittedSynth, DpSynthError> {
    budget.require_pure()?;
    if data.is_empty() {
        return Err(DpSynthError::Empty);
    }
    let schema = &data.schema;
    let d = schema.len();
    let n = data.len();
    let eps = budget.epsilon;
    let eps1 = params.epsilon_split * eps;
    let eps2 = eps - eps1;
    let mut ledger = BudgetLedger::new(eps);
    ledger.allocations.insert("structure".into(), eps1);
    ledger.allocations.insert("parameters".into(), eps2);

    let kmax = k_max(&schema.cardinalities(), n, eps2, params.theta);
    trace.k_max = kmax;
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(&mut rng::seeded(rng::derive_str(seed, "order")));

    // structure
    let mut parents = vec![Vec::new(); d];
    let mut select_rng = rng::seeded(rng::derive_str(seed, "structure"));
    let sens = mi_sensitivity(n);
    let eps_each = if d > 1 { eps1 / (d - 1) as f64 } else { 0.0 };
    for i in 1..d {
        let v = order[i];
        let earlier = &order[..i];
        let mut k = kmax.min(i);
        while k > 0 && candidate_count(i, k) > MAX_CANDIDATES {
            k -= 1;
        }
        let candidates: Vec<Vec<usize>> = (0..=k)
            .flat_map(|s| kway_subsets(i, s))
            .map(|s| {
                let mut ps: Vec<usize> = s.into_iter().map(|j| earlier[j]).collect();
                ps.sort_unstable();
                ps
            })
            .collect();
        let scores: Vec<f64> = candidates.par_iter().map(|ps| mutual_info(data, v, ps)).collect();
        let pick = exp_mech_select(&mut select_rng, &scores, eps_each, sens);
        parents[v] = candidates[pick].clone();
        ledger.entries.push(LedgerEntry {
            stage: "structure".into(),
            mechanism: "exponential".into(),
            epsilon: eps_each,
            sensitivity: sens,
            scale: None,
        });
    }

    // parameters: replace-one changes two cells of a count table
    let eps_table = eps2 / d as f64;
    let scale = 2.0 / eps_table;
    trace.scale = scale;
    trace.noise = vec![Vec::new(); d];
    let mut noise_rng = rng::seeded(rng::derive_str(seed, "noise"));
    let mut cpts = vec![Vec::new(); d];
    for &v in &order {
        let k = schema.variables[v].cardinality();
        let cfgs = config_count(schema, &parents[v]);
        let mut counts = vec![0.0f64; cfgs * k];
        for r in &data.records {
            counts[config_index(schema, &parents[v], &r.cells) * k + r.cells[v] as usize] += 1.0;
        }
        let noise: Vec<f64> = (0..counts.len()).map(|_| laplace(&mut noise_rng, scale)).collect();
        let noisy: Vec<f64> = counts.iter().zip(&noise).map(|(c, z)| (c + z).max(0.0)).collect();
        cpts[v] = noisy.chunks(k).map(normalize_row).collect();
        trace.noise[v] = noise;
        ledger.entries.push(LedgerEntry {
            stage: "parameters".into(),
            mechanism: "laplace".into(),
            epsilon: eps_table,
            sensitivity: 2.0,
            scale: Some(scale),
        });
    }
    let bn = BayesNet { schema: schema.clone(), order, parents, cpts };
    debug_assert!(bn.validate().is_ok());
    Ok(FittedSynth { mechanism: "privbayes".into(), bn, ledger })
}

fn candidate_count(i: usize, k: usize) -> usize {
    let mut total = 0usize;
    let mut c = 1usize;
    for s in 0..=k {
        if s > 0 {
            c = c.saturating_mul(i + 1 - s) / s;
        }
        total = total.saturating_add(c);
    }
    total
}

pub(crate) fn normalize_row(row: &[f64]) -> Vec<f64> {
    let total: f64 = row.iter().sum();
    if total > 0.0 {
        row.iter().map(|x| x / total).collect()
    } else {
        vec![1.0 / row.len() as f64; row.len()]
    }
}

pub struct PrivBayes;

impl DpMechanism for PrivBayes {
    fn name(&self) -> &str {
        "privbayes"
    }

    fn grid(&self) -> Vec<HyperConfig> {
        let mut out = Vec::new();
        for theta in PRIVBAYES_THETAS {
            for split in PRIVBAYES_SPLITS {
                out.push(HyperConfig::from([("theta".into(), theta), ("epsilon_split".into(), split)]));
            }
        }
        out
    }

    fn fit(&self, data: &Dataset, budget: &PrivacyBudget, config: &HyperConfig, seed: u64) -> Result<FittedSynth, DpSynthError> {
        let params = PrivBayesParams::new(hyper(config, "theta")?, hyper(config, "epsilon_split")?)?;
        privbayes_fit(data, budget, &params, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::binary_schema;
    use crate::dataset::Role;
    use crate::dp_synth::synth_sample;
    use crate::generators::build_random_bn;
    use crate::metrics::avg_kway_error;
    use proptest::prelude::*;

    fn truth(n: usize, seed: u64) -> Dataset {
        build_random_bn(&binary_schema(5), 5, 1.0, 42).sample(n, seed, Role::Private)
    }

    #[test]
    fn near_noiseless_marginals() {
        let data = truth(10_000, 1);
        let fit = privbayes_fit(&data, &PrivacyBudget::pure(1e6).unwrap(), &PrivBayesParams::new(2.0, 0.5).unwrap(), 3).unwrap();
        let synth = synth_sample(&fit, data.len(), 4).unwrap();
        assert!(avg_kway_error(&data, &synth, 1).unwrap().avg < 0.01);
    }

    #[test]
    fn budget_arithmetic() {
        let data = truth(500, 1);
        let fit = privbayes_fit(&data, &PrivacyBudget::pure(1.0).unwrap(), &PrivBayesParams::new(8.0, 0.5).unwrap(), 3).unwrap();
        assert_eq!(fit.ledger.allocations["structure"], 0.5);
        assert_eq!(fit.ledger.allocations["parameters"], 0.5);
        fit.ledger.check().unwrap();
        assert!((fit.ledger.spent() - 1.0).abs() < 1e-12);
        assert_eq!(fit.ledger.entries.iter().filter(|e| e.mechanism == "exponential").count(), 4);
        assert!(fit.ledger.entries.iter().filter_map(|e| e.scale).all(|s| (s - 20.0).abs() < 1e-9));
        let text = fit.to_json();
        assert!(text.contains("\"budget\"") && text.contains("\"bayesnet\""));
    }

    #[test]
    fn rejects_approximate_budget() {
        let data = truth(50, 1);
        let b = PrivacyBudget::new(1.0, 1e-5).unwrap();
        assert!(matches!(privbayes_fit(&data, &b, &PrivBayesParams::default(), 1), Err(DpSynthError::Budget(_))));
        assert!(PrivBayesParams::new(0.0, 0.5).is_err());
        assert!(PrivBayesParams::new(2.0, 1.0).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let data = truth(300, 1);
        let b = PrivacyBudget::pure(2.0).unwrap();
        let p = PrivBayesParams::default();
        assert_eq!(privbayes_fit(&data, &b, &p, 9).unwrap(), privbayes_fit(&data, &b, &p, 9).unwrap());
    }

    #[test]
    fn noise_moments_over_repeated_fits() {
        let data = truth(20, 1);
        let b = PrivacyBudget::pure(4.0).unwrap();
        let p = PrivBayesParams::new(1e9, 0.5).unwrap();
        let mut xs = Vec::new();
        let mut scale = 0.0;
        for seed in 0..10_000 {
            let mut t = FitTrace::default();
            privbayes_fit_traced(&data, &b, &p, seed, &mut t).unwrap();
            // first table of each fit: one draw per fit keeps draws independent
            xs.push(t.noise[0][0]);
            scale = t.scale;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 3.0 * scale / n.sqrt(), "{mean}");
        assert!((var / (2.0 * scale * scale) - 1.0).abs() < 0.1, "{var}");
    }

    proptest! {
        #[test]
        fn k_max_monotone_in_theta(cards in proptest::collection::vec(2usize..6, 1..10), n in 1usize..100_000, eps in 0.01f64..20.0) {
            let ks: Vec<usize> = PRIVBAYES_THETAS.iter().map(|&t| k_max(&cards, n, eps, t)).collect();
            prop_assert!(ks.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(ks[0] < cards.len());
        }
    }
}
