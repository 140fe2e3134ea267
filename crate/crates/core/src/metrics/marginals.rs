use super::MetricError;
use crate::bayesnet::{config_count, config_index};
use crate::dataset::{Dataset, Record};
use crate::schema::{Schema, VariableSpec};
use std::collections::BTreeMap;
use std::sync::Arc;

fn check_pair(a: &Dataset, b: &Dataset) -> Result<(), MetricError> {
    if !a.same_schema(b) {
        return Err(MetricError::SchemaMismatch);
    }
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Total variation distance between the empirical joint distributions.
pub fn tvd(a: &Dataset, b: &Dataset) -> Result<f64, MetricError> {
    check_pair(a, b)?;
    let mut counts: BTreeMap<&[u32], (usize, usize)> = BTreeMap::new();
    for r in &a.records {
        counts.entry(&r.cells).or_default().0 += 1;
    }
    for r in &b.records {
        counts.entry(&r.cells).or_default().1 += 1;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    Ok(0.5 * counts.values().map(|&(ca, cb)| (ca as f64 / na - cb as f64 / nb).abs()).sum::<f64>())
}

/// A 0/1 predicate over records.
#[derive(Clone)]
pub enum Predicate {
    True,
    False,
    /// Record takes `values[i]` on `vars[i]` for every i.
    Cell { vars: Vec<usize>, values: Vec<u32> },
    Custom(Arc<dyn Fn(&Record) -> bool + Send + Sync>),
}

impl Predicate {
    pub fn eval(&self, r: &Record) -> bool {
        match self {
            Predicate::True => true,
            Predicate::False => false,
            Predicate::Cell { vars, values } => vars.iter().zip(values).all(|(&v, &c)| r.cells[v] == c),
            Predicate::Custom(f) => f(r),
        }
    }
}

/// Number of records satisfying the predicate.
pub fn linear_query(predicate: &Predicate, data: &Dataset) -> usize {
    data.records.iter().filter(|r| predicate.eval(r)).count()
}

#[derive(Clone, Default)]
pub struct Workload {
    pub queries: Vec<Predicate>,
}

impl Workload {
    /// Every cell indicator of every k-attribute subset.
    pub fn kway(schema: &Schema, k: usize) -> Self {
        let mut queries = Vec::new();
        for subset in kway_subsets(schema.len(), k) {
            let cards: Vec<u32> = subset.iter().map(|&v| schema.variables[v].cardinality() as u32).collect();
            let mut values = vec![0u32; k];
            loop {
                queries.push(Predicate::Cell { vars: subset.clone(), values: values.clone() });
                // odometer increment, last position fastest
                let mut pos = k;
                loop {
                    if pos == 0 {
                        break;
                    }
                    pos -= 1;
                    values[pos] += 1;
                    if values[pos] < cards[pos] {
                        break;
                    }
                    values[pos] = 0;
                    if pos == 0 {
                        pos = usize::MAX;
                        break;
                    }
                }
                if pos == usize::MAX || k == 0 {
                    break;
                }
            }
        }
        Self { queries }
    }
}

/// Sum over the workload of `|q(a) - q(b)|`.
pub fn workload_error(w: &Workload, a: &Dataset, b: &Dataset) -> f64 {
    w.queries
        .iter()
        .map(|q| (linear_query(q, a) as f64 - linear_query(q, b) as f64).abs())
        .sum()
}

/// All size-k subsets of `0..d` in lexicographic order.
pub fn kway_subsets(d: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, d: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for v in start..d {
            if d - v < k - cur.len() {
                break;
            }
            cur.push(v);
            rec(v + 1, d, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= d {
        rec(0, d, k, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

/// Average and maximum of a workload error, both normalized by the reference size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorPair {
    pub avg: f64,
    pub max: f64,
}

/// k-way marginal error of `b` against `a`. When sizes differ, `b`'s counts
/// are rescaled to `|a|` before differencing.
pub fn avg_kway_error(a: &Dataset, b: &Dataset, k: usize) -> Result<ErrorPair, MetricError> {
    check_pair(a, b)?;
    let d = a.schema.len();
    if k > d {
        return Err(MetricError::KTooLarge { k, d });
    }
    let subsets = kway_subsets(d, k);
    let scale = a.len() as f64 / b.len() as f64;
    let na = a.len() as f64;
    let mut total = 0.0;
    let mut max: f64 = 0.0;
    let mut ca = Vec::new();
    let mut cb = Vec::new();
    for subset in &subsets {
        let cells = config_count(&a.schema, subset);
        ca.clear();
        ca.resize(cells, 0.0f64);
        cb.clear();
        cb.resize(cells, 0.0f64);
        for r in &a.records {
            ca[config_index(&a.schema, subset, &r.cells)] += 1.0;
        }
        for r in &b.records {
            cb[config_index(&a.schema, subset, &r.cells)] += 1.0;
        }
        let err: f64 = ca.iter().zip(&cb).map(|(x, y)| (x - y * scale).abs()).sum();
        total += err;
        max = max.max(err / na);
    }
    Ok(ErrorPair { avg: total / (subsets.len() as f64 * na), max })
}

/// Map each variable to {0, 1} by splitting its canonical value order at
/// `ceil(k / 2)`: the first half becomes 0, the rest 1.
pub fn binarize(data: &Dataset) -> Dataset {
    let vars = data
        .schema
        .variables
        .iter()
        .map(|v| VariableSpec { values: vec![("0".into(), "low".into()), ("1".into(), "high".into())], ..v.clone() })
        .collect();
    let schema = Arc::new(Schema { variables: vars, topic: data.schema.topic.clone() });
    let cuts: Vec<u32> = data.schema.variables.iter().map(|v| v.cardinality().div_ceil(2) as u32).collect();
    let records = data
        .records
        .iter()
        .map(|r| Record::new(r.cells.iter().zip(&cuts).map(|(&c, &cut)| u32::from(c >= cut)).collect()))
        .collect();
    Dataset { schema, records, role: data.role, splits: data.splits.clone() }
}

pub fn binarized_marginal_error(a: &Dataset, b: &Dataset, k: usize) -> Result<ErrorPair, MetricError> {
    check_pair(a, b)?;
    let ba = binarize(a);
    let mut bb = binarize(b);
    bb.schema = ba.schema.clone();
    avg_kway_error(&ba, &bb, k)
}
