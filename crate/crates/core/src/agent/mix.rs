use crate::dataset::{Dataset, Record, Role};
use crate::metrics::tvd;
use crate::rng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MixError {
    #[error("no records to mix")]
    EmptyPool,
    #[error("datasets have different schemas")]
    SchemaMismatch,
    #[error("k = {k} must be between 1 and {n}")]
    BadK { k: usize, n: usize },
    #[error("target_m must be at least 1")]
    BadTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixMode {
    Uniform,
    MaxCoverage { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MixSpec {
    pub mode: MixMode,
    pub target_m: usize,
    pub seed: u64,
}

/// Draw `target_m` records uniformly with replacement from the pooled datasets.
pub fn mix_uniform(datasets: &[Dataset], target_m: usize, seed: u64) -> Result<Dataset, MixError> {
    let first = datasets.first().ok_or(MixError::EmptyPool)?;
    if datasets.iter().any(|d| !d.same_schema(first)) {
        return Err(MixError::SchemaMismatch);
    }
    if target_m == 0 {
        return Err(MixError::BadTarget);
    }
    let pool: Vec<&Record> = datasets.iter().flat_map(|d| &d.records).collect();
    if pool.is_empty() {
        return Err(MixError::EmptyPool);
    }
    let mut r = rng::seeded(seed);
    let records = (0..target_m).map(|_| pool[r.random_range(0..pool.len())].clone()).collect();
    Ok(Dataset::new(first.schema.clone(), records, Role::Surrogate))
}

/// Pairwise total-variation similarity `1 - TVD`.
pub fn similarity_matrix(datasets: &[Dataset]) -> Result<Vec<Vec<f64>>, MixError> {
    let n = datasets.len();
    let mut sim = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let t = tvd(&datasets[i], &datasets[j]).map_err(|e| match e {
                crate::metrics::MetricError::Empty => MixError::EmptyPool,
                _ => MixError::SchemaMismatch,
            })?;
            sim[i][j] = 1.0 - t;
            sim[j][i] = 1.0 - t;
        }
    }
    Ok(sim)
}

/// `F(S) = sum_i max_{j in S} sim[i][j]`; zero for the empty set.
pub fn facility_location_value(sim: &[Vec<f64>], selected: &[usize]) -> f64 {
    sim.iter().map(|row| selected.iter().map(|&j| row[j]).fold(0.0f64, f64::max)).sum()
}

/// Greedy maximization of the facility-location objective; ties go to the lower index.
pub fn greedy_facility_location(sim: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = sim.len();
    let mut selected = Vec::with_capacity(k);
    let mut cover = vec![0.0f64; n];
    for _ in 0..k.min(n) {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..n).filter(|j| !selected.contains(j)) {
            let gain: f64 = (0..n).map(|i| (sim[i][j] - cover[i]).max(0.0)).sum();
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((j, gain));
            }
        }
        let (j, _) = best.expect("candidates remain");
        selected.push(j);
        for i in 0..n {
            cover[i] = cover[i].max(sim[i][j]);
        }
    }
    selected
}

pub fn mix_max_coverage(datasets: &[Dataset], k: usize, target_m: usize, seed: u64) -> Result<(Dataset, Vec<usize>), MixError> {
    if k == 0 || k > datasets.len() {
        return Err(MixError::BadK { k, n: datasets.len() });
    }
    let sim = similarity_matrix(datasets)?;
    let selected = greedy_facility_location(&sim, k);
    let chosen: Vec<Dataset> = selected.iter().map(|&j| datasets[j].clone()).collect();
    Ok((mix_uniform(&chosen, target_m, seed)?, selected))
}

/// Mixed dataset and the indices of the datasets it draws from.
pub fn mix(datasets: &[Dataset], spec: &MixSpec) -> Result<(Dataset, Vec<usize>), MixError> {
    match spec.mode {
        MixMode::Uniform => Ok((mix_uniform(datasets, spec.target_m, spec.seed)?, (0..datasets.len()).collect())),
        MixMode::MaxCoverage { k } => mix_max_coverage(datasets, k, spec.target_m, spec.seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::{binary_schema, dataset_from};
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn tagged(schema: &std::sync::Arc<crate::Schema>, ids: std::ops::Range<u32>) -> Dataset {
        let rows: Vec<Vec<u32>> = ids.map(|i| vec![i % 2, (i / 2) % 2, (i / 4) % 2]).collect();
        let refs: Vec<&[u32]> = rows.iter().map(Vec::as_slice).collect();
        dataset_from(schema, &refs)
    }

    #[test]
    fn pooled_uniform_probabilities() {
        let s = binary_schema(3);
        let a = tagged(&s, 0..2);
        let b = tagged(&s, 2..8);
        let m = 80_000;
        let mixed = mix_uniform(&[a, b], m, 5).unwrap();
        let mut counts: HashMap<Vec<u32>, usize> = HashMap::new();
        for r in &mixed.records {
            *counts.entry(r.cells.clone()).or_default() += 1;
        }
        assert_eq!(counts.len(), 8);
        let sd = (m as f64 * 0.125 * 0.875).sqrt();
        for c in counts.values() {
            assert!((*c as f64 - m as f64 / 8.0).abs() < 5.0 * sd, "{c}");
        }
        assert_eq!(mixed.role, Role::Surrogate);
    }

    #[test]
    fn uniform_errors_and_determinism() {
        let s = binary_schema(3);
        assert_eq!(mix_uniform(&[], 5, 1).unwrap_err(), MixError::EmptyPool);
        assert_eq!(mix_uniform(&[Dataset::new(s.clone(), vec![], Role::Surrogate)], 5, 1).unwrap_err(), MixError::EmptyPool);
        let a = tagged(&s, 0..4);
        assert_eq!(mix_uniform(&[a.clone()], 9, 3).unwrap().records, mix_uniform(&[a.clone()], 9, 3).unwrap().records);
        let other = dataset_from(&binary_schema(2), &[&[0, 0]]);
        assert_eq!(mix_uniform(&[a, other], 3, 1).unwrap_err(), MixError::SchemaMismatch);
    }

    #[test]
    fn identical_datasets_cover_everything() {
        let s = binary_schema(3);
        let a = tagged(&s, 0..8);
        let ds = vec![a.clone(), a.clone(), a];
        let sim = similarity_matrix(&ds).unwrap();
        for k in 1..=3 {
            let sel = greedy_facility_location(&sim, k);
            assert!((facility_location_value(&sim, &sel) - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_pick_matches_brute_force() {
        let s = binary_schema(3);
        let ds = vec![tagged(&s, 0..3), tagged(&s, 2..8), tagged(&s, 1..6)];
        let sim = similarity_matrix(&ds).unwrap();
        let best = (0..3)
            .max_by(|&a, &b| facility_location_value(&sim, &[a]).total_cmp(&facility_location_value(&sim, &[b])).then(b.cmp(&a)))
            .unwrap();
        let (_, sel) = mix_max_coverage(&ds, 1, 10, 1).unwrap();
        assert_eq!(sel, vec![best]);
        let (_, sel) = mix_max_coverage(&ds, 3, 10, 1).unwrap();
        assert_eq!(sel.len(), 3);
        assert!(mix_max_coverage(&ds, 0, 10, 1).is_err());
        assert!(mix_max_coverage(&ds, 4, 10, 1).is_err());
    }

    fn subsets_of_size(n: usize, k: usize) -> Vec<Vec<usize>> {
        crate::metrics::kway_subsets(n, k)
    }

    proptest! {
        #[test]
        fn greedy_within_bound(n in 1usize..=5, raw in proptest::collection::vec(0.0f64..1.0, 25), k in 1usize..=3) {
            let k = k.min(n);
            let mut sim = vec![vec![1.0; n]; n];
            for i in 0..n {
                for j in i + 1..n {
                    sim[i][j] = raw[i * 5 + j];
                    sim[j][i] = raw[i * 5 + j];
                }
            }
            let greedy = facility_location_value(&sim, &greedy_facility_location(&sim, k));
            let opt = subsets_of_size(n, k).iter().map(|s| facility_location_value(&sim, s)).fold(0.0f64, f64::max);
            prop_assert!(greedy >= (1.0 - (-1.0f64).exp()) * opt - 1e-12);
        }

        #[test]
        fn mixed_records_come_from_inputs(seed in 0u64..1000, m in 1usize..50) {
            let s = binary_schema(3);
            let ds = vec![tagged(&s, 0..3), tagged(&s, 5..7)];
            let (mixed, _) = mix(&ds, &MixSpec { mode: MixMode::MaxCoverage { k: 1 }, target_m: m, seed }).unwrap();
            prop_assert_eq!(mixed.len(), m);
            for r in &mixed.records {
                prop_assert!(ds.iter().any(|d| d.records.contains(r)));
            }
        }
    }
}
