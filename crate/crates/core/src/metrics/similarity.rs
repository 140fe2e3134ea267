use super::{avg_kway_error, tvd, MetricError};
use crate::dataset::Dataset;
use std::fmt::Write;

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityRow {
    pub name: String,
    /// `100 * (1 - TVD)`, one decimal.
    pub one_minus_tvd: f64,
    /// `100 * (1 - avg 3-way error)`, one decimal.
    pub one_minus_3wm: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimilarityTable {
    pub rows: Vec<SimilarityRow>,
}

fn scaled(x: f64) -> f64 {
    (1000.0 * (1.0 - x.clamp(0.0, 1.0))).round() / 10.0
}

pub fn similarity_report(reference: &Dataset, candidates: &[(&str, &Dataset)]) -> Result<SimilarityTable, MetricError> {
    let k = reference.schema.len().min(3);
    let rows = candidates
        .iter()
        .map(|(name, c)| {
            Ok(SimilarityRow {
                name: name.to_string(),
                one_minus_tvd: scaled(tvd(reference, c)?),
                one_minus_3wm: scaled(avg_kway_error(reference, c, k)?.avg),
            })
        })
        .collect::<Result<_, MetricError>>()?;
    Ok(SimilarityTable { rows })
}

impl SimilarityTable {
    /// Tab-separated rendering; values that round to zero are left blank.
    pub fn render(&self) -> String {
        let cell = |v: f64| if v.abs() < 0.05 { String::new() } else { format!("{v:.1}") };
        let mut out = String::from("dataset\t1-TVD\t1-3WM\n");
        for r in &self.rows {
            let _ = writeln!(out, "{}\t{}\t{}", r.name, cell(r.one_minus_tvd), cell(r.one_minus_3wm));
        }
        out
    }
}
