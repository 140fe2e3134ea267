//! Discrete Bayesian networks: parent lists, conditional probability tables,
//! ancestral sampling and an audit document format.

use crate::dataset::{Dataset, Record, Role};
use crate::rng::{self, sample_weighted};
use crate::schema::Schema;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BayesNetError {
    #[error("node order is not a permutation of the schema variables")]
    BadOrder,
    #[error("variable `{0}`: parent does not precede it in node order")]
    ParentOrder(String),
    #[error("variable `{var}`: expected {expected} CPT rows, found {found}")]
    RowCount { var: String, expected: usize, found: usize },
    #[error("variable `{var}`: CPT row {row} is not a distribution over {k} values")]
    BadRow { var: String, row: usize, k: usize },
    #[error("unknown variable `{0}` in document")]
    UnknownVariable(String),
    #[error("document: {0}")]
    Document(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesNet {
    pub schema: Arc<Schema>,
    /// Topological order of variable indices.
    pub order: Vec<usize>,
    /// `parents[v]` lists parent variable indices of `v`.
    pub parents: Vec<Vec<usize>>,
    /// `cpts[v][config]` is a distribution over `v`'s values; `config` is the
    /// mixed-radix index of the parent values in `parents[v]` order (first parent most significant).
    pub cpts: Vec<Vec<Vec<f64>>>,
}

/// Number of joint configurations of `vars`.
pub fn config_count(schema: &Schema, vars: &[usize]) -> usize {
    vars.iter().map(|&v| schema.variables[v].cardinality()).product()
}

/// Mixed-radix index of the values a record takes on `vars`.
pub fn config_index(schema: &Schema, vars: &[usize], cells: &[u32]) -> usize {
    vars.iter()
        .fold(0usize, |acc, &v| acc * schema.variables[v].cardinality() + cells[v] as usize)
}

impl BayesNet {
    pub fn validate(&self) -> Result<(), BayesNetError> {
        let d = self.schema.len();
        let mut pos = vec![usize::MAX; d];
        if self.order.len() != d || self.parents.len() != d || self.cpts.len() != d {
            return Err(BayesNetError::BadOrder);
        }
        for (i, &v) in self.order.iter().enumerate() {
            if v >= d || pos[v] != usize::MAX {
                return Err(BayesNetError::BadOrder);
            }
            pos[v] = i;
        }
        for v in 0..d {
            let name = &self.schema.variables[v].name;
            if self.parents[v].iter().any(|&p| p >= d || pos[p] >= pos[v]) {
                return Err(BayesNetError::ParentOrder(name.clone()));
            }
            let expected = config_count(&self.schema, &self.parents[v]);
            if self.cpts[v].len() != expected {
                return Err(BayesNetError::RowCount { var: name.clone(), expected, found: self.cpts[v].len() });
            }
            let k = self.schema.variables[v].cardinality();
            for (row, theta) in self.cpts[v].iter().enumerate() {
                let sum: f64 = theta.iter().sum();
                if theta.len() != k || theta.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                    return Err(BayesNetError::BadRow { var: name.clone(), row, k });
                }
            }
        }
        Ok(())
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e = Vec::new();
        for &v in &self.order {
            for &p in &self.parents[v] {
                e.push((p, v));
            }
        }
        e
    }

    pub fn sample_record<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Record {
        let mut cells = vec![0u32; self.schema.len()];
        for &v in &self.order {
            let cfg = config_index(&self.schema, &self.parents[v], &cells);
            cells[v] = sample_weighted(rng, &self.cpts[v][cfg]) as u32;
        }
        Record::new(cells)
    }

    /// Ancestral sampling of `m` records.
    pub fn sample(&self, m: usize, seed: u64, role: Role) -> Dataset {
        let mut rng = rng::seeded(seed);
        let records = (0..m).map(|_| self.sample_record(&mut rng)).collect();
        Dataset::new(self.schema.clone(), records, role)
    }

    pub fn to_doc(&self) -> BayesNetDoc {
        let name = |v: usize| self.schema.variables[v].name.clone();
        BayesNetDoc {
            order: self.order.iter().map(|&v| name(v)).collect(),
            nodes: self
                .order
                .iter()
                .map(|&v| NodeDoc {
                    name: name(v),
                    parents: self.parents[v].iter().map(|&p| name(p)).collect(),
                    cpt: self.cpts[v].clone(),
                })
                .collect(),
        }
    }

    pub fn from_doc(schema: Arc<Schema>, doc: &BayesNetDoc) -> Result<Self, BayesNetError> {
        let idx = |n: &str| schema.index_of(n).ok_or_else(|| BayesNetError::UnknownVariable(n.to_string()));
        let order = doc.order.iter().map(|n| idx(n)).collect::<Result<Vec<_>, _>>()?;
        let d = schema.len();
        let mut parents = vec![Vec::new(); d];
        let mut cpts = vec![Vec::new(); d];
        for node in &doc.nodes {
            let v = idx(&node.name)?;
            parents[v] = node.parents.iter().map(|n| idx(n)).collect::<Result<Vec<_>, _>>()?;
            cpts[v] = node.cpt.clone();
        }
        let bn = BayesNet { schema, order, parents, cpts };
        bn.validate()?;
        Ok(bn)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BayesNetDoc {
    pub order: Vec<String>,
    pub nodes: Vec<NodeDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NodeDoc {
    pub name: String,
    pub parents: Vec<String>,
    pub cpt: Vec<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::binary_schema;

    fn chain() -> BayesNet {
        let schema = binary_schema(2);
        BayesNet {
            schema,
            order: vec![0, 1],
            parents: vec![vec![], vec![0]],
            cpts: vec![vec![vec![0.5, 0.5]], vec![vec![0.7, 0.3], vec![0.1, 0.9]]],
        }
    }

    #[test]
    fn deterministic_cpts_single_record() {
        let schema = binary_schema(3);
        let bn = BayesNet {
            schema,
            order: vec![2, 0, 1],
            parents: vec![vec![2], vec![0], vec![]],
            cpts: vec![
                vec![vec![0.0, 1.0], vec![1.0, 0.0]],
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![1.0, 0.0]],
            ],
        };
        bn.validate().unwrap();
        let d = bn.sample(200, 5, Role::Surrogate);
        assert!(d.records.iter().all(|r| r.cells == vec![1, 1, 0]));
    }

    #[test]
    fn chain_conditional_matches_cpt() {
        let bn = chain();
        let d = bn.sample(100_000, 11, Role::Surrogate);
        let given_a1: Vec<_> = d.records.iter().filter(|r| r.cells[0] == 1).collect();
        let p = given_a1.iter().filter(|r| r.cells[1] == 1).count() as f64 / given_a1.len() as f64;
        assert!((p - 0.9).abs() < 0.01, "{p}");
        assert_eq!(bn.sample(50, 3, Role::Surrogate).records, bn.sample(50, 3, Role::Surrogate).records);
    }

    #[test]
    fn doc_round_trip_and_validation() {
        let bn = chain();
        let text = serde_json::to_string(&bn.to_doc()).unwrap();
        let doc: BayesNetDoc = serde_json::from_str(&text).unwrap();
        assert_eq!(BayesNet::from_doc(bn.schema.clone(), &doc).unwrap(), bn);

        let mut bad = bn.clone();
        bad.cpts[1][0] = vec![0.6, 0.6];
        assert!(matches!(bad.validate(), Err(BayesNetError::BadRow { .. })));
        let mut cyc = bn;
        cyc.parents[0] = vec![1];
        assert!(matches!(cyc.validate(), Err(BayesNetError::ParentOrder(_))));
    }
}
