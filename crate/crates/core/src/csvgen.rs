//! Direct record generation: ask the model for CSV batches, keep only rows
//! that validate against the schema.

use crate::dataset::{validate_record, Dataset, Record, Role};
use crate::generators::{Artifact, GenContext, GenError, GenSpec, Generated, SurrogateGenerator};
use crate::llm::{ChatRequest, LlmClient, LlmError};
use crate::rng;
use crate::schema::Schema;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

const SYSTEM_TEMPLATE: &str = "You are an expert in {domain} who generates synthetic data that closely mirrors real-world {domain} data. Your goal is to create data that would be indistinguishable from real {domain} records.

Follow exactly these rules:
1. Only output the CSV data with no additional text or explanations
2. Always include a header row matching the schema exactly
3. Strictly adhere to the provided schema's data types and possible values for all fields
4. Use comma as the separator
5. Ensure all values and relationships between fields are realistic and statistically plausible
6. Generate diverse data while maintaining real-world patterns and constraints
7. Include occasional edge cases at realistic frequencies";

const USER_TEMPLATE: &str = "Generate {num_rows} rows of data with these fields:

{schema}";

pub const DEFAULT_ROWS_PER_BATCH: usize = 50;

#[derive(Debug, Error)]
pub enum CsvGenError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no valid records after {batches} batches")]
    NoValidRecords { batches: usize, stats: Vec<BatchStats> },
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvGenConfig {
    pub model: String,
    pub rows_per_batch: usize,
    pub max_batches: usize,
    pub target_m: usize,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl CsvGenConfig {
    pub fn new(model: impl Into<String>, target_m: usize) -> Self {
        let rows_per_batch = DEFAULT_ROWS_PER_BATCH;
        Self {
            model: model.into(),
            rows_per_batch,
            max_batches: target_m.div_ceil(rows_per_batch) * 4 + 4,
            target_m,
            temperature: 1.0,
            max_tokens: 8192,
        }
    }

    pub fn validate(&self) -> Result<(), CsvGenError> {
        if self.rows_per_batch == 0 {
            return Err(CsvGenError::Config("rows_per_batch must be at least 1".into()));
        }
        if self.target_m == 0 {
            return Err(CsvGenError::Config("target_m must be at least 1".into()));
        }
        if self.max_batches == 0 {
            return Err(CsvGenError::Config("max_batches must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-batch yield. `parsed` counts data rows after dropping fences and header echoes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchStats {
    pub batch: usize,
    pub requested: usize,
    pub parsed: usize,
    pub valid: usize,
    /// Valid rows actually added to the dataset (fewer than `valid` once the target is reached).
    pub kept: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CsvGenOutput {
    pub dataset: Dataset,
    pub stats: Vec<BatchStats>,
    pub warnings: Vec<String>,
}

impl CsvGenOutput {
    pub fn stats_jsonl(&self) -> String {
        self.stats.iter().map(|s| serde_json::to_string(s).expect("serializable") + "\n").collect()
    }
}

pub fn build_csv_prompt(schema: &Schema, num_rows: usize, model: &str) -> Result<ChatRequest, CsvGenError> {
    if num_rows == 0 {
        return Err(CsvGenError::Config("num_rows must be at least 1".into()));
    }
    let system = SYSTEM_TEMPLATE.replace("{domain}", &schema.topic);
    let user = USER_TEMPLATE.replace("{num_rows}", &num_rows.to_string()).replace("{schema}", &schema.serialize());
    Ok(ChatRequest::new(model, system, user))
}

/// Split a completion into raw rows, dropping markdown fences, blank lines and header echoes.
pub fn extract_rows(schema: &Schema, text: &str) -> Vec<Vec<String>> {
    let body: String = text
        .lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .filter(|l| !l.trim().is_empty())
        .collect::<Vec<_>>()
        .join("\n");
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(body.as_bytes());
    let names: Vec<String> = schema.variables.iter().map(|v| v.name.to_ascii_lowercase()).collect();
    let mut out = Vec::new();
    for rec in reader.records() {
        let Ok(rec) = rec else { continue };
        let row: Vec<String> = rec.iter().map(str::to_string).collect();
        let is_header = row.len() == names.len() && row.iter().zip(&names).all(|(a, b)| a.to_ascii_lowercase() == *b);
        if !is_header {
            out.push(row);
        }
    }
    out
}

pub fn generate_csv_dataset(
    client: &LlmClient,
    schema: &Arc<Schema>,
    config: &CsvGenConfig,
    seed: u64,
) -> Result<CsvGenOutput, CsvGenError> {
    config.validate()?;
    let mut records: Vec<Record> = Vec::new();
    let mut stats = Vec::new();
    let mut warnings = Vec::new();
    for batch in 0..config.max_batches {
        if records.len() >= config.target_m {
            break;
        }
        let mut req = build_csv_prompt(schema, config.rows_per_batch, &config.model)?
            .with_temperature(config.temperature)
            .with_seed(rng::derive(seed, batch as u64));
        req.max_tokens = config.max_tokens;
        let mut st =
            BatchStats { batch, requested: config.rows_per_batch, parsed: 0, valid: 0, kept: 0, error: None };
        match client.complete(&req) {
            Ok(resp) => {
                let rows = extract_rows(schema, &resp.text);
                st.parsed = rows.len();
                for row in rows {
                    if let Ok(r) = validate_record(schema, &row) {
                        st.valid += 1;
                        if records.len() < config.target_m {
                            records.push(r);
                            st.kept += 1;
                        }
                    }
                }
            }
            Err(e @ (LlmError::Auth(_) | LlmError::Config(_) | LlmError::InvalidRequest(_))) => return Err(e.into()),
            Err(e) => st.error = Some(e.to_string()),
        }
        stats.push(st);
    }
    if records.is_empty() {
        return Err(CsvGenError::NoValidRecords { batches: stats.len(), stats });
    }
    if records.len() < config.target_m {
        warnings.push(format!(
            "only {} of {} records after {} batches",
            records.len(),
            config.target_m,
            stats.len()
        ));
    }
    Ok(CsvGenOutput { dataset: Dataset::new(schema.clone(), records, Role::Surrogate), stats, warnings })
}

/// Registry adapter around [`generate_csv_dataset`].
pub struct CsvGenerator {
    pub client: Arc<LlmClient>,
    pub model: String,
    pub rows_per_batch: usize,
}

impl SurrogateGenerator for CsvGenerator {
    fn name(&self) -> &str {
        "csv"
    }

    fn generate(&self, ctx: &GenContext<'_>, spec: &GenSpec) -> Result<Generated, GenError> {
        let mut cfg = CsvGenConfig::new(self.model.clone(), spec.target_m);
        cfg.rows_per_batch = self.rows_per_batch.max(1);
        cfg.max_batches = spec.target_m.div_ceil(cfg.rows_per_batch) * 4 + 4;
        let out = generate_csv_dataset(&self.client, ctx.schema, &cfg, spec.seed)
            .map_err(|e| GenError::Failed(e.to_string()))?;
        let mut artifacts = vec![Artifact { name: "yield_stats.jsonl".into(), content: out.stats_jsonl() }];
        if !out.warnings.is_empty() {
            artifacts.push(Artifact { name: "warnings.txt".into(), content: out.warnings.join("\n") + "\n" });
        }
        Ok(Generated { dataset: out.dataset, artifacts })
    }
}
