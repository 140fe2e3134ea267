//! Benchmark harness for the three auxiliary tasks: pretraining a DP
//! classifier, tuning DP synthesizer hyperparameters, and estimating the
//! privacy-utility curve.

mod grid;
mod journal;
mod task1;
mod task23;

pub use grid::{evaluate_grid, GridCell, GridSpec, RunRecord, SynthGrid};
pub use journal::Journal;
pub use task1::{
    best_pretrain_config, run_task1, ClassifierGrid, Task1Config, Task1Failure, Task1Output, Task1Record, Task1Summary,
    NO_PRETRAINING, TASK1_EPSILONS,
};
pub use task23::{
    degradation, run_task2, run_task3, task2_from_grids, task3_from_grids, DegradationMode, DegradationRow, Objective,
    Selection, SeedAggregation, Task2Config, Task2Output, Task3Curve, Task3Output, Task3Summary,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("journal: {0}")]
    Journal(String),
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Standard error of the mean; zero for fewer than two values.
pub fn std_err(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Indices of the rows not dominated by any other row, all objectives minimized.
/// Row `a` dominates `b` when it is no worse everywhere and strictly better somewhere.
pub fn pareto_frontier(rows: &[Vec<f64>]) -> Vec<usize> {
    let dominates = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y);
    (0..rows.len()).filter(|&i| !rows.iter().any(|other| dominates(other, &rows[i]))).collect()
}

/// Public-based and private-based values of one quantity over an epsilon grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePair {
    pub epsilons: Vec<f64>,
    pub public: Vec<f64>,
    pub private: Vec<f64>,
    pub l1: f64,
    pub l2: f64,
}

impl CurvePair {
    pub fn new(epsilons: Vec<f64>, public: Vec<f64>, private: Vec<f64>) -> Result<Self, BenchError> {
        if public.len() != epsilons.len() || private.len() != epsilons.len() {
            return Err(BenchError::Config(format!(
                "curves over {} epsilons have {} and {} points",
                epsilons.len(),
                public.len(),
                private.len()
            )));
        }
        if public.iter().chain(&private).any(|v| !v.is_finite()) {
            return Err(BenchError::Config("curve has missing points".into()));
        }
        let diffs: Vec<f64> = public.iter().zip(&private).map(|(a, b)| a - b).collect();
        let l1 = diffs.iter().map(|d| d.abs()).sum();
        let l2 = diffs.iter().map(|d| d * d).sum::<f64>().sqrt();
        Ok(Self { epsilons, public, private, l1, l2 })
    }
}

/// Tab-separated table with a header row. Floats use their shortest exact form.
pub fn tsv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join("\t");
    out.push('\n');
    for r in rows {
        out += &r.join("\t");
        out.push('\n');
    }
    out
}
