use super::MetricError;
use crate::dataset::Dataset;

/// Pearson correlation of two code-index columns; 0 when either has zero variance.
pub fn pearson(x: &[u32], y: &[u32]) -> f64 {
    let n = x.len().min(y.len());
    if n == 0 {
        return 0.0;
    }
    let mx = x[..n].iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let my = y[..n].iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (x[i] as f64 - mx, y[i] as f64 - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Cramér's V from the contingency table of two columns, over observed
/// categories only. 0 when either column has a single category.
pub fn cramers_v(x: &[u32], y: &[u32]) -> f64 {
    let n = x.len().min(y.len());
    let levels = |c: &[u32]| {
        let mut l: Vec<u32> = c[..n].to_vec();
        l.sort_unstable();
        l.dedup();
        l
    };
    let (lx, ly) = (levels(x), levels(y));
    let (r, c) = (lx.len(), ly.len());
    if r.min(c) < 2 {
        return 0.0;
    }
    let mut table = vec![0.0f64; r * c];
    for i in 0..n {
        let a = lx.binary_search(&x[i]).unwrap();
        let b = ly.binary_search(&y[i]).unwrap();
        table[a * c + b] += 1.0;
    }
    let rows: Vec<f64> = (0..r).map(|a| table[a * c..(a + 1) * c].iter().sum()).collect();
    let cols: Vec<f64> = (0..c).map(|b| (0..r).map(|a| table[a * c + b]).sum()).collect();
    let nf = n as f64;
    let mut chi2 = 0.0;
    for a in 0..r {
        for b in 0..c {
            let e = rows[a] * cols[b] / nf;
            chi2 += (table[a * c + b] - e).powi(2) / e;
        }
    }
    (chi2 / (nf * (r.min(c) - 1) as f64)).sqrt().min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationDiffs {
    pub pearson_avg: f64,
    pub pearson_max: f64,
    pub cramers_v_avg: f64,
    pub cramers_v_max: f64,
}

/// Absolute coefficient differences over every unordered variable pair.
pub fn correlation_diffs(a: &Dataset, b: &Dataset) -> Result<CorrelationDiffs, MetricError> {
    if !a.same_schema(b) {
        return Err(MetricError::SchemaMismatch);
    }
    let d = a.schema.len();
    let cols = |ds: &Dataset| (0..d).map(|v| ds.column(v).collect::<Vec<u32>>()).collect::<Vec<_>>();
    let (ca, cb) = (cols(a), cols(b));
    let mut out = CorrelationDiffs { pearson_avg: 0.0, pearson_max: 0.0, cramers_v_avg: 0.0, cramers_v_max: 0.0 };
    let mut pairs = 0usize;
    for i in 0..d {
        for j in i + 1..d {
            let p = (pearson(&ca[i], &ca[j]) - pearson(&cb[i], &cb[j])).abs();
            let v = (cramers_v(&ca[i], &ca[j]) - cramers_v(&cb[i], &cb[j])).abs();
            out.pearson_avg += p;
            out.pearson_max = out.pearson_max.max(p);
            out.cramers_v_avg += v;
            out.cramers_v_max = out.cramers_v_max.max(v);
            pairs += 1;
        }
    }
    if pairs > 0 {
        out.pearson_avg /= pairs as f64;
        out.cramers_v_avg /= pairs as f64;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::{binary_schema, dataset_from};
    use proptest::prelude::*;

    #[test]
    fn perfect_association_vs_independence() {
        let s = binary_schema(2);
        let a = dataset_from(&s, &[&[0, 0], &[0, 0], &[1, 1], &[1, 1]]);
        let b = dataset_from(&s, &[&[0, 0], &[0, 1], &[1, 0], &[1, 1]]);
        assert!((cramers_v(&[0, 0, 1, 1], &[0, 0, 1, 1]) - 1.0).abs() < 1e-12);
        assert_eq!(cramers_v(&[0, 0, 1, 1], &[0, 1, 0, 1]), 0.0);
        let d = correlation_diffs(&a, &b).unwrap();
        assert!((d.cramers_v_avg - 1.0).abs() < 1e-12);
        assert_eq!(d.cramers_v_avg, d.cramers_v_max);
        assert!((d.pearson_max - 1.0).abs() < 1e-12);
        assert_eq!(correlation_diffs(&a, &a).unwrap().pearson_max, 0.0);
    }

    #[test]
    fn degenerate_columns_score_zero() {
        assert_eq!(pearson(&[1, 1, 1], &[0, 1, 0]), 0.0);
        assert_eq!(cramers_v(&[1, 1, 1], &[0, 1, 0]), 0.0);
        assert!((pearson(&[0, 1, 2], &[2, 1, 0]) + 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn coefficients_bounded_and_deterministic(
            x in proptest::collection::vec(0u32..4, 2..40),
            y in proptest::collection::vec(0u32..4, 2..40),
        ) {
            let v = cramers_v(&x, &y);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, cramers_v(&x, &y));
            prop_assert!(pearson(&x, &y).abs() <= 1.0);
        }
    }
}
