//! Surrogate data generators behind a common trait, registered by name.
//!
//! The CLI and benchmark harness look generators up in a [`GeneratorRegistry`]
//! so new methods can be added without touching the callers.

mod arbitrary;
mod uniform;
mod univariate;

pub use arbitrary::{build_random_bn, ArbitraryGenerator, DEFAULT_ALPHA, DEFAULT_MAX_PARENTS};
pub use uniform::{gen_uniform, UniformGenerator};
pub use univariate::{gen_univariate, univariate_distributions, UnivariateGenerator};

use crate::dataset::Dataset;
use crate::schema::Schema;
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generation spec: {0}")]
    InvalidSpec(String),
    #[error("generator `{generator}` needs {what}")]
    MissingInput { generator: String, what: &'static str },
    #[error("unknown generator `{0}`")]
    Unknown(String),
    #[error("{0}")]
    Failed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenSpec {
    pub target_m: usize,
    pub seed: u64,
}

impl GenSpec {
    pub fn new(target_m: usize, seed: u64) -> Result<Self, GenError> {
        if target_m == 0 {
            return Err(GenError::InvalidSpec("target_m must be at least 1".into()));
        }
        Ok(Self { target_m, seed })
    }
}

/// Named side output of a generator run (BayesNet audit, yield stats, agent log).
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub content: String,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub dataset: Dataset,
    pub artifacts: Vec<Artifact>,
}

impl Generated {
    pub fn plain(dataset: Dataset) -> Self {
        Self { dataset, artifacts: Vec::new() }
    }
}

/// Inputs a generator may draw on. Which fields are required depends on the method.
#[derive(Clone, Copy)]
pub struct GenContext<'a> {
    pub schema: &'a Arc<Schema>,
    /// Only the univariate reference baseline reads private data.
    pub private: Option<&'a Dataset>,
    /// Source datasets for mixing generators.
    pub sources: &'a [Dataset],
}

impl<'a> GenContext<'a> {
    pub fn schema_only(schema: &'a Arc<Schema>) -> Self {
        Self { schema, private: None, sources: &[] }
    }
}

pub trait SurrogateGenerator: Send + Sync {
    fn name(&self) -> &str;
    fn generate(&self, ctx: &GenContext<'_>, spec: &GenSpec) -> Result<Generated, GenError>;
}

#[derive(Default)]
pub struct GeneratorRegistry {
    entries: BTreeMap<String, Box<dyn SurrogateGenerator>>,
}

impl GeneratorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry preloaded with the schema-only baselines and the univariate reference.
    pub fn with_baselines() -> Self {
        let mut r = Self::new();
        r.register(Box::new(UniformGenerator));
        r.register(Box::new(UnivariateGenerator));
        r.register(Box::new(ArbitraryGenerator::default()));
        r
    }

    pub fn register(&mut self, generator: Box<dyn SurrogateGenerator>) {
        self.entries.insert(generator.name().to_string(), generator);
    }

    pub fn get(&self, name: &str) -> Result<&dyn SurrogateGenerator, GenError> {
        self.entries.get(name).map(|g| g.as_ref()).ok_or_else(|| GenError::Unknown(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::binary_schema;

    #[test]
    fn registry_lookup() {
        let r = GeneratorRegistry::with_baselines();
        assert_eq!(r.names(), vec!["arbitrary", "uniform", "univariate"]);
        let s = binary_schema(3);
        let out = r.get("uniform").unwrap().generate(&GenContext::schema_only(&s), &GenSpec::new(5, 1).unwrap()).unwrap();
        assert_eq!(out.dataset.len(), 5);
        assert!(matches!(r.get("nope"), Err(GenError::Unknown(_))));
        assert!(matches!(
            r.get("univariate").unwrap().generate(&GenContext::schema_only(&s), &GenSpec::new(5, 1).unwrap()),
            Err(GenError::MissingInput { .. })
        ));
        assert!(GenSpec::new(0, 1).is_err());
    }
}
