//! Dataset-vs-dataset quality statistics.
//!
//! Marginal errors follow the workload-error definition: counts of every cell
//! of every k-attribute subset are differenced, summed, and normalized by the
//! number of subsets and the reference size. All metric functions are pure.

mod correlation;
mod marginals;
mod similarity;

pub use correlation::{correlation_diffs, cramers_v, pearson, CorrelationDiffs};
pub use marginals::{
    avg_kway_error, binarize, binarized_marginal_error, kway_subsets, linear_query, tvd, workload_error, ErrorPair,
    Predicate, Workload,
};
pub use similarity::{similarity_report, SimilarityRow, SimilarityTable};

use crate::classifier::{train_nonprivate, ClassifierError, Featurizer, PretrainParams};
use crate::dataset::Dataset;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("empty dataset")]
    Empty,
    #[error("datasets have different schemas")]
    SchemaMismatch,
    #[error("k = {k} exceeds the number of variables {d}")]
    KTooLarge { k: usize, d: usize },
    #[error("classification: {0}")]
    Classifier(#[from] ClassifierError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricGroup {
    Classification,
    Correlation,
    Marginals,
}

impl MetricGroup {
    pub const ALL: [MetricGroup; 3] = [MetricGroup::Classification, MetricGroup::Correlation, MetricGroup::Marginals];

    pub fn name(self) -> &'static str {
        match self {
            MetricGroup::Classification => "classification",
            MetricGroup::Correlation => "correlation",
            MetricGroup::Marginals => "marginals",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Tvd,
    Max3Way,
    Avg3Way,
    MaxBinarized,
    AvgBinarized,
    MaxPearson,
    AvgPearson,
    MaxCramersV,
    AvgCramersV,
    ErrorRateDiff,
    AucDiff,
}

impl Metric {
    pub const ALL: [Metric; 11] = [
        Metric::Tvd,
        Metric::Max3Way,
        Metric::Avg3Way,
        Metric::MaxBinarized,
        Metric::AvgBinarized,
        Metric::MaxPearson,
        Metric::AvgPearson,
        Metric::MaxCramersV,
        Metric::AvgCramersV,
        Metric::ErrorRateDiff,
        Metric::AucDiff,
    ];

    pub fn group(self) -> MetricGroup {
        use Metric::*;
        match self {
            Tvd | Max3Way | Avg3Way | MaxBinarized | AvgBinarized => MetricGroup::Marginals,
            MaxPearson | AvgPearson | MaxCramersV | AvgCramersV => MetricGroup::Correlation,
            ErrorRateDiff | AucDiff => MetricGroup::Classification,
        }
    }

    pub fn name(self) -> &'static str {
        use Metric::*;
        match self {
            Tvd => "tvd",
            Max3Way => "max_3way",
            Avg3Way => "avg_3way",
            MaxBinarized => "max_binarized",
            AvgBinarized => "avg_binarized",
            MaxPearson => "max_pearson",
            AvgPearson => "avg_pearson",
            MaxCramersV => "max_cramers_v",
            AvgCramersV => "avg_cramers_v",
            ErrorRateDiff => "error_rate_diff",
            AucDiff => "auc_diff",
        }
    }

    pub fn from_name(s: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.name() == s)
    }

    fn index(self) -> usize {
        Metric::ALL.iter().position(|&m| m == self).unwrap()
    }
}

/// One value per quality metric, each saturated into `[0, 1]`; lower is better.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    values: [f64; 11],
}

impl MetricVector {
    pub fn get(&self, m: Metric) -> f64 {
        self.values[m.index()]
    }

    pub fn from_fn(mut f: impl FnMut(Metric) -> f64) -> Self {
        let mut values = [0.0; 11];
        for m in Metric::ALL {
            values[m.index()] = f(m).clamp(0.0, 1.0);
        }
        Self { values }
    }

    pub fn group_mean(&self, g: MetricGroup) -> f64 {
        let vals: Vec<f64> = Metric::ALL.iter().filter(|m| m.group() == g).map(|&m| self.get(m)).collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// Settings for the non-private evaluation classifier behind the classification metrics.
#[derive(Debug, Clone)]
pub struct EvalSettings {
    pub target: String,
    pub classifier: PretrainParams,
    pub seed: u64,
}

impl EvalSettings {
    pub fn new(target: impl Into<String>, seed: u64) -> Self {
        Self { target: target.into(), classifier: PretrainParams { epochs: 10, batch_size: 64, lr: 0.1 }, seed }
    }
}

/// Error-rate and AUC differences between classifiers trained on real and
/// synthetic training data, both evaluated on `test`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationDiffs {
    pub error_rate: f64,
    pub auc: f64,
}

pub fn classification_diffs(
    train_real: &Dataset,
    train_synth: &Dataset,
    test: &Dataset,
    settings: &EvalSettings,
) -> Result<ClassificationDiffs, MetricError> {
    if !train_real.same_schema(train_synth) || !train_real.same_schema(test) {
        return Err(MetricError::SchemaMismatch);
    }
    let f = Featurizer::new(&train_real.schema, &settings.target)?;
    let real = train_nonprivate(&f, train_real, &settings.classifier, settings.seed)?;
    let synth = train_nonprivate(&f, train_synth, &settings.classifier, settings.seed)?;
    Ok(ClassificationDiffs {
        error_rate: (real.error_rate(test)? - synth.error_rate(test)?).abs(),
        auc: (real.auc(test)? - synth.auc(test)?).abs(),
    })
}

/// Full metric vector of `synth` against `reference`. Classification metrics
/// train on `reference` and `synth` and evaluate on `test`.
pub fn evaluate(
    reference: &Dataset,
    synth: &Dataset,
    test: &Dataset,
    settings: &EvalSettings,
) -> Result<MetricVector, MetricError> {
    let d = reference.schema.len();
    let k = d.min(3);
    let t = tvd(reference, synth)?;
    let three = avg_kway_error(reference, synth, k)?;
    let bin = binarized_marginal_error(reference, synth, k)?;
    let corr = correlation_diffs(reference, synth)?;
    let cls = classification_diffs(reference, synth, test, settings)?;
    Ok(MetricVector::from_fn(|m| match m {
        Metric::Tvd => t,
        Metric::Max3Way => three.max,
        Metric::Avg3Way => three.avg,
        Metric::MaxBinarized => bin.max,
        Metric::AvgBinarized => bin.avg,
        Metric::MaxPearson => corr.pearson_max,
        Metric::AvgPearson => corr.pearson_avg,
        Metric::MaxCramersV => corr.cramers_v_max,
        Metric::AvgCramersV => corr.cramers_v_avg,
        Metric::ErrorRateDiff => cls.error_rate,
        Metric::AucDiff => cls.auc,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayesnet::BayesNet;
    use crate::dataset::{tests::binary_schema, Record, Role};

    fn labeled(seed: u64, n: usize) -> Dataset {
        let schema = binary_schema(4);
        let bn = BayesNet {
            schema: schema.clone(),
            order: vec![1, 2, 3, 0],
            parents: vec![vec![1, 2], vec![], vec![1], vec![]],
            cpts: vec![
                vec![vec![0.9, 0.1], vec![0.6, 0.4], vec![0.4, 0.6], vec![0.1, 0.9]],
                vec![vec![0.5, 0.5]],
                vec![vec![0.7, 0.3], vec![0.3, 0.7]],
                vec![vec![0.5, 0.5]],
            ],
        };
        bn.sample(n, seed, Role::Private)
    }

    #[test]
    fn identical_training_sets_give_zero_diffs() {
        let train = labeled(1, 400);
        let test = labeled(2, 200);
        let s = EvalSettings::new("V0", 3);
        let d = classification_diffs(&train, &train.clone(), &test, &s).unwrap();
        assert_eq!(d, ClassificationDiffs { error_rate: 0.0, auc: 0.0 });
    }

    #[test]
    fn shuffled_labels_lose_the_signal() {
        use rand::seq::SliceRandom;
        let train = labeled(1, 2000);
        let test = labeled(2, 1000);
        let mut diffs = Vec::new();
        let mut expected = Vec::new();
        for seed in 0..10 {
            let mut labels: Vec<u32> = train.column(0).collect();
            labels.shuffle(&mut crate::rng::seeded(seed));
            let mut shuffled = train.clone();
            for (r, l) in shuffled.records.iter_mut().zip(labels) {
                r.cells[0] = l;
            }
            let s = EvalSettings::new("V0", seed);
            let f = Featurizer::new(&train.schema, "V0").unwrap();
            let real_auc = train_nonprivate(&f, &train, &s.classifier, seed).unwrap().auc(&test).unwrap();
            let d = classification_diffs(&train, &shuffled, &test, &s).unwrap();
            let synth_auc = train_nonprivate(&f, &shuffled, &s.classifier, seed).unwrap().auc(&test).unwrap();
            assert!((d.auc - (real_auc - synth_auc).abs()).abs() < 1e-12);
            diffs.push(real_auc - synth_auc);
            expected.push(real_auc - 0.5);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean(&diffs) - mean(&expected)).abs() < 0.1, "{diffs:?} {expected:?}");
    }

    #[test]
    fn single_class_synth_is_an_error() {
        let train = labeled(1, 100);
        let test = labeled(2, 100);
        let synth = Dataset::new(train.schema.clone(), vec![Record::new(vec![0, 0, 0, 0]); 10], Role::Surrogate);
        let err = classification_diffs(&train, &synth, &test, &EvalSettings::new("V0", 1)).unwrap_err();
        assert_eq!(err, MetricError::Classifier(ClassifierError::SingleClass));
    }

    #[test]
    fn metric_vector_in_unit_range_and_grouped() {
        let a = labeled(1, 300);
        let b = labeled(5, 300);
        let test = labeled(9, 100);
        let v = evaluate(&a, &b, &test, &EvalSettings::new("V0", 1)).unwrap();
        for m in Metric::ALL {
            assert!((0.0..=1.0).contains(&v.get(m)));
            assert_eq!(Metric::from_name(m.name()), Some(m));
        }
        assert_eq!(Metric::ALL.iter().filter(|m| m.group() == MetricGroup::Marginals).count(), 5);
        assert_eq!(Metric::ALL.iter().filter(|m| m.group() == MetricGroup::Correlation).count(), 4);
        let same = evaluate(&a, &a, &test, &EvalSettings::new("V0", 1)).unwrap();
        assert!(Metric::ALL.iter().all(|&m| same.get(m) == 0.0));
    }
}
