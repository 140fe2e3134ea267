//! Surrogate public tabular data: schema-only generators, LLM-driven CSV and
//! structural-causal-model generation, quality metrics, DP mechanisms and the
//! benchmark harness for pretraining, hyperparameter tuning and
//! privacy-utility curve estimation.

pub mod agent;
pub mod bayesnet;
pub mod bench;
pub mod classifier;
pub mod csvgen;
pub mod dataset;
pub mod dp_synth;
pub mod generators;
pub mod llm;
pub mod metrics;
pub mod rng;
pub mod scm;
pub mod schema;

pub use dataset::{Dataset, Record, Role, Split};
pub use schema::{Schema, VariableSpec};
