use crate::bayesnet::{config_count, config_index};
use crate::dataset::Dataset;
use rand::Rng;

/// One draw from Laplace(0, scale) by inverse CDF.
pub fn laplace<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

/// Plug-in mutual information `I(X; parents)` in bits.
pub fn mutual_info(data: &Dataset, var: usize, parents: &[usize]) -> f64 {
    if parents.is_empty() || data.is_empty() {
        return 0.0;
    }
    let k = data.schema.variables[var].cardinality();
    let cfgs = config_count(&data.schema, parents);
    let mut joint = vec![0usize; cfgs * k];
    for r in &data.records {
        joint[config_index(&data.schema, parents, &r.cells) * k + r.cells[var] as usize] += 1;
    }
    mi_from_joint(&joint, cfgs, k)
}

/// Mutual information in bits from a row-major `rows x cols` count table.
pub fn mi_from_joint(joint: &[usize], rows: usize, cols: usize) -> f64 {
    let n: usize = joint.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let mut rs = vec![0usize; rows];
    let mut cs = vec![0usize; cols];
    for i in 0..rows {
        for j in 0..cols {
            rs[i] += joint[i * cols + j];
            cs[j] += joint[i * cols + j];
        }
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let c = joint[i * cols + j];
            if c > 0 {
                let c = c as f64;
                mi += c / nf * (c * nf / (rs[i] as f64 * cs[j] as f64)).log2();
            }
        }
    }
    mi.max(0.0)
}

/// Replace-one sensitivity bound on plug-in mutual information (bits) for `n` records.
pub fn mi_sensitivity(n: usize) -> f64 {
    if n < 2 {
        // a single record carries no dependence on either side
        return 1.0;
    }
    let n = n as f64;
    (2.0 / n) * ((n + 1.0) / 2.0).log2() + ((n - 1.0) / n) * ((n + 1.0) / (n - 1.0)).log2()
}

/// Selection probabilities of the exponential mechanism.
pub fn exp_mech_probabilities(scores: &[f64], epsilon: f64, sensitivity: f64) -> Vec<f64> {
    let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = scores.iter().map(|s| (epsilon * (s - top) / (2.0 * sensitivity)).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Index of the candidate chosen with probability proportional to
/// `exp(epsilon * score / (2 * sensitivity))`.
pub fn exp_mech_select<R: Rng + ?Sized>(rng: &mut R, scores: &[f64], epsilon: f64, sensitivity: f64) -> usize {
    assert!(!scores.is_empty() && sensitivity > 0.0);
    crate::rng::sample_weighted(rng, &exp_mech_probabilities(scores, epsilon, sensitivity))
}
