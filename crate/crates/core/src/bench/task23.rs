use super::grid::{evaluate_grid, GridSpec, SynthGrid};
use super::journal::Journal;
use super::{mean, std_err, BenchError, CurvePair};
use crate::dataset::Dataset;
use crate::dp_synth::DpMechanism;
use crate::metrics::{Metric, MetricGroup, MetricVector};
use serde::{Deserialize, Serialize};

/// Quantity being tuned: a single metric or the mean of a metric group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Metric(Metric),
    Group(MetricGroup),
}

impl Objective {
    pub fn all() -> Vec<Objective> {
        Metric::ALL.into_iter().map(Objective::Metric).chain(MetricGroup::ALL.into_iter().map(Objective::Group)).collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Objective::Metric(m) => m.name(),
            Objective::Group(g) => g.name(),
        }
    }

    pub fn value(self, v: &MetricVector) -> f64 {
        match self {
            Objective::Metric(m) => v.get(m),
            Objective::Group(g) => v.group_mean(g),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradationMode {
    Absolute,
    Relative,
}

/// Whether seeds are averaged before picking the best config, or a config is
/// picked per seed and the outcomes averaged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedAggregation {
    #[default]
    MeanThenArgmin,
    ArgminPerSeed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task2Config {
    pub grid: GridSpec,
    /// Metrics reported as relative degradation; all others are absolute.
    #[serde(default)]
    pub relative: Vec<Objective>,
    #[serde(default)]
    pub aggregation: SeedAggregation,
}

impl Task2Config {
    pub fn new(grid: GridSpec) -> Self {
        Self { grid, relative: Vec::new(), aggregation: SeedAggregation::default() }
    }

    fn mode(&self, o: Objective) -> DegradationMode {
        if self.relative.contains(&o) {
            DegradationMode::Relative
        } else {
            DegradationMode::Absolute
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationRow {
    pub candidate: String,
    pub mechanism: String,
    pub objective: Objective,
    pub epsilon: f64,
    /// Absent under per-seed selection, where the choice varies by seed.
    pub optimal_config: Option<usize>,
    pub chosen_config: Option<usize>,
    pub optimal_value: f64,
    pub chosen_value: f64,
    pub degradation: f64,
    pub std_err: f64,
    pub mode: DegradationMode,
    pub seeds: usize,
}

/// Lowest mean, ties to the earlier config; configs without values are skipped.
fn argmin(vals: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in vals.enumerate() {
        if v.is_finite() && best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

fn col_mean(xs: &[Option<f64>]) -> f64 {
    mean(&xs.iter().flatten().copied().collect::<Vec<_>>())
}

/// Outcome of choosing a config by `candidate` values and scoring it on `private` values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub optimal_config: Option<usize>,
    pub chosen_config: Option<usize>,
    pub optimal_value: f64,
    pub chosen_value: f64,
    pub degradation: f64,
    pub std_err: f64,
    pub mode: DegradationMode,
    pub seeds: usize,
}

/// Degradation from tuning on candidate evaluations instead of private ones.
/// Both tables are indexed `[config][seed]`; `None` marks a failed run.
/// Relative mode falls back to absolute when the optimum is zero.
pub fn degradation(
    private: &[Vec<Option<f64>>],
    candidate: &[Vec<Option<f64>>],
    agg: SeedAggregation,
    mode: DegradationMode,
) -> Option<Selection> {
    let n_seeds = private.first().map_or(0, Vec::len);
    let (opt_c, chosen_c, opt_v, chosen_v, diffs) = match agg {
        SeedAggregation::MeanThenArgmin => {
            let pm: Vec<f64> = private.iter().map(|r| col_mean(r)).collect();
            let cm: Vec<f64> =
                candidate.iter().zip(&pm).map(|(r, p)| if p.is_finite() { col_mean(r) } else { f64::NAN }).collect();
            let opt = argmin(pm.iter().copied())?;
            let chosen = argmin(cm.iter().copied())?;
            let diffs: Vec<f64> =
                (0..n_seeds).filter_map(|s| Some(private[chosen][s]? - private[opt][s]?)).collect();
            (Some(opt), Some(chosen), pm[opt], pm[chosen], diffs)
        }
        SeedAggregation::ArgminPerSeed => {
            let mut opts = Vec::new();
            let mut chosens = Vec::new();
            let mut diffs = Vec::new();
            for s in 0..n_seeds {
                let opt = argmin(private.iter().map(|r| r[s].unwrap_or(f64::NAN)));
                let chosen = argmin(
                    candidate.iter().zip(private).map(|(c, p)| if p[s].is_some() { c[s].unwrap_or(f64::NAN) } else { f64::NAN }),
                );
                if let (Some(o), Some(c)) = (opt, chosen) {
                    let (ov, cv) = (private[o][s].unwrap(), private[c][s].unwrap());
                    opts.push(ov);
                    chosens.push(cv);
                    diffs.push(cv - ov);
                }
            }
            if diffs.is_empty() {
                return None;
            }
            (None, None, mean(&opts), mean(&chosens), diffs)
        }
    };
    let raw = chosen_v - opt_v;
    let (degradation, se, mode) = match mode {
        DegradationMode::Relative if opt_v > 0.0 => {
            (raw / opt_v, std_err(&diffs.iter().map(|d| d / opt_v).collect::<Vec<_>>()), DegradationMode::Relative)
        }
        _ => (raw, std_err(&diffs), DegradationMode::Absolute),
    };
    Some(Selection {
        optimal_config: opt_c,
        chosen_config: chosen_c,
        optimal_value: opt_v,
        chosen_value: chosen_v,
        degradation,
        std_err: se,
        mode,
        seeds: diffs.len(),
    })
}

fn table(grid: &SynthGrid, e: usize, o: Objective) -> Vec<Vec<Option<f64>>> {
    (0..grid.n_configs).map(|c| (0..grid.n_seeds).map(|s| grid.get(e, c, s).map(|v| o.value(v))).collect()).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Task2Output {
    pub rows: Vec<DegradationRow>,
    pub failed_runs: usize,
    /// (candidate, objective, epsilon) combinations with no usable runs.
    pub missing: Vec<String>,
}

fn check_grids(private: &SynthGrid, candidates: &[SynthGrid]) -> Result<(), BenchError> {
    for g in candidates {
        if g.epsilons != private.epsilons || g.n_configs != private.n_configs || g.n_seeds != private.n_seeds {
            return Err(BenchError::Config(format!("grid of `{}` does not match the private grid", g.method)));
        }
    }
    Ok(())
}

pub fn task2_from_grids(private: &SynthGrid, candidates: &[SynthGrid], cfg: &Task2Config) -> Result<Task2Output, BenchError> {
    check_grids(private, candidates)?;
    let mut out = Task2Output {
        failed_runs: private.failures().count() + candidates.iter().map(|g| g.failures().count()).sum::<usize>(),
        ..Default::default()
    };
    for cand in candidates {
        for o in Objective::all() {
            for (e, &eps) in private.epsilons.iter().enumerate() {
                let Some(sel) = degradation(&table(private, e, o), &table(cand, e, o), cfg.aggregation, cfg.mode(o)) else {
                    out.missing.push(format!("{}/{}/{eps}", cand.method, o.name()));
                    continue;
                };
                out.rows.push(DegradationRow {
                    candidate: cand.method.clone(),
                    mechanism: private.mechanism.clone(),
                    objective: o,
                    epsilon: eps,
                    optimal_config: sel.optimal_config,
                    chosen_config: sel.chosen_config,
                    optimal_value: sel.optimal_value,
                    chosen_value: sel.chosen_value,
                    degradation: sel.degradation,
                    std_err: sel.std_err,
                    mode: sel.mode,
                    seeds: sel.seeds,
                });
            }
        }
    }
    Ok(out)
}

fn grids(
    private: &Dataset,
    candidates: &[(String, Dataset)],
    mech: &dyn DpMechanism,
    spec: &GridSpec,
    journal: Option<&Journal>,
) -> Result<(SynthGrid, Vec<SynthGrid>), BenchError> {
    if let Some((name, _)) = candidates.iter().find(|(_, d)| !d.same_schema(private)) {
        return Err(BenchError::Config(format!("candidate `{name}` has a different schema")));
    }
    let p = evaluate_grid("private", private, mech, spec, journal)?;
    let cs = candidates.iter().map(|(n, d)| evaluate_grid(n, d, mech, spec, journal)).collect::<Result<_, _>>()?;
    Ok((p, cs))
}

/// Hyperparameter-selection degradation for every candidate, metric, group and epsilon.
pub fn run_task2(
    private: &Dataset,
    candidates: &[(String, Dataset)],
    mech: &dyn DpMechanism,
    cfg: &Task2Config,
    journal: Option<&Journal>,
) -> Result<Task2Output, BenchError> {
    let (p, cs) = grids(private, candidates, mech, &cfg.grid, journal)?;
    task2_from_grids(&p, &cs, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task3Curve {
    pub candidate: String,
    pub mechanism: String,
    pub group: MetricGroup,
    pub curve: CurvePair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task3Summary {
    pub candidate: String,
    pub mechanism: String,
    /// Equal-weight averages over the metric groups.
    pub l1: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Task3Output {
    pub curves: Vec<Task3Curve>,
    pub summaries: Vec<Task3Summary>,
    pub failed_runs: usize,
    /// Curves dropped for missing epsilon points.
    pub rejected: Vec<String>,
}

/// Best achievable value at one epsilon, choosing configs on the same data.
fn best_value(t: &[Vec<Option<f64>>], agg: SeedAggregation) -> f64 {
    match agg {
        SeedAggregation::MeanThenArgmin => t.iter().map(|r| col_mean(r)).filter(|v| v.is_finite()).fold(f64::NAN, f64::min),
        SeedAggregation::ArgminPerSeed => {
            let n = t.first().map_or(0, Vec::len);
            let per_seed: Vec<f64> =
                (0..n).map(|s| t.iter().filter_map(|r| r[s]).fold(f64::NAN, f64::min)).filter(|v| v.is_finite()).collect();
            mean(&per_seed)
        }
    }
}

pub fn task3_from_grids(private: &SynthGrid, candidates: &[SynthGrid], agg: SeedAggregation) -> Result<Task3Output, BenchError> {
    check_grids(private, candidates)?;
    let mut out = Task3Output {
        failed_runs: private.failures().count() + candidates.iter().map(|g| g.failures().count()).sum::<usize>(),
        ..Default::default()
    };
    let curve = |g: &SynthGrid, group: MetricGroup| -> Vec<f64> {
        (0..g.epsilons.len()).map(|e| best_value(&table(g, e, Objective::Group(group)), agg)).collect()
    };
    for cand in candidates {
        let mut l1 = Vec::new();
        let mut l2 = Vec::new();
        for group in MetricGroup::ALL {
            match CurvePair::new(private.epsilons.clone(), curve(cand, group), curve(private, group)) {
                Ok(c) => {
                    l1.push(c.l1);
                    l2.push(c.l2);
                    out.curves.push(Task3Curve { candidate: cand.method.clone(), mechanism: private.mechanism.clone(), group, curve: c });
                }
                Err(e) => out.rejected.push(format!("{}/{}: {e}", cand.method, group.name())),
            }
        }
        if l1.len() == MetricGroup::ALL.len() {
            out.summaries.push(Task3Summary {
                candidate: cand.method.clone(),
                mechanism: private.mechanism.clone(),
                l1: mean(&l1),
                l2: mean(&l2),
            });
        }
    }
    Ok(out)
}

/// Privacy-utility curve distances between candidate-based and private-based tuning.
pub fn run_task3(
    private: &Dataset,
    candidates: &[(String, Dataset)],
    mech: &dyn DpMechanism,
    spec: &GridSpec,
    agg: SeedAggregation,
    journal: Option<&Journal>,
) -> Result<Task3Output, BenchError> {
    let (p, cs) = grids(private, candidates, mech, spec, journal)?;
    task3_from_grids(&p, &cs, agg)
}
