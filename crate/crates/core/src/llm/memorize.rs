use super::{ChatRequest, LlmClient, LlmError};
use crate::dataset::Dataset;
use crate::rng;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_PROMPT_ROWS: usize = 5;
const MIN_ROWS_FOR_COMPLETION: usize = 25;

#[derive(Debug, Error, PartialEq)]
pub enum MemorizeError {
    #[error("dataset has {got} records, need at least {need}")]
    TooSmall { got: usize, need: usize },
    #[error("n_trials must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellOutcome {
    Correct,
    Incorrect,
    Missing,
}

#[derive(Debug, Clone)]
pub struct ProbeConfig {
    pub model: String,
    pub n_prompt_rows: usize,
    pub n_completion_rows: usize,
    pub max_tokens: u32,
}

impl ProbeConfig {
    pub fn new(model: impl Into<String>) -> Self {
        Self { model: model.into(), n_prompt_rows: DEFAULT_PROMPT_ROWS, n_completion_rows: DEFAULT_PROMPT_ROWS, max_tokens: 2048 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemorizationReport {
    /// Outcome of every true cell, row by row.
    pub cells: Vec<Vec<CellOutcome>>,
    pub exact_match_rate: f64,
    pub cell_accuracy: f64,
    /// Mean normalized Levenshtein similarity of aligned cells; missing cells count 0.
    pub char_similarity: f64,
    /// Probability that a uniformly random row equals a given row.
    pub collision_floor: f64,
    /// Rows the rates are computed over.
    pub rows_scored: usize,
    /// The completion contained an unparseable line; rates cover the prefix before it.
    pub parse_failed: bool,
}

impl MemorizationReport {
    /// Exact matches exceed the collision floor by more than three standard errors.
    pub fn reproduced(&self) -> bool {
        let p = self.collision_floor;
        let n = self.rows_scored.max(1) as f64;
        self.exact_match_rate > p + 3.0 * (p * (1.0 - p) / n).sqrt()
    }
}

/// Align predicted cells to true cells. Rows of equal arity are compared
/// position by position; otherwise a token-level edit-distance alignment
/// marks matches correct, substitutions incorrect and deletions missing.
pub fn align_cells(truth: &[String], pred: &[String]) -> Vec<(CellOutcome, Option<usize>)> {
    if truth.len() == pred.len() {
        return truth
            .iter()
            .zip(pred)
            .enumerate()
            .map(|(j, (t, p))| (if t == p { CellOutcome::Correct } else { CellOutcome::Incorrect }, Some(j)))
            .collect();
    }
    let (n, m) = (truth.len(), pred.len());
    let mut dp = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in dp.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        dp[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = dp[i - 1][j - 1] + usize::from(truth[i - 1] != pred[j - 1]);
            dp[i][j] = sub.min(dp[i - 1][j] + 1).min(dp[i][j - 1] + 1);
        }
    }
    let mut out = vec![(CellOutcome::Missing, None); n];
    let (mut i, mut j) = (n, m);
    while i > 0 {
        if j > 0 && dp[i][j] == dp[i - 1][j - 1] + usize::from(truth[i - 1] != pred[j - 1]) {
            let o = if truth[i - 1] == pred[j - 1] { CellOutcome::Correct } else { CellOutcome::Incorrect };
            out[i - 1] = (o, Some(j - 1));
            i -= 1;
            j -= 1;
        } else if dp[i][j] == dp[i - 1][j] + 1 {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    out
}

/// Score predicted rows against true rows. `denominator` rows are scored;
/// true rows without a prediction are entirely missing.
pub fn score_rows(truth: &[Vec<String>], pred: &[Vec<String>], denominator: usize, collision_floor: f64) -> MemorizationReport {
    let mut cells = Vec::new();
    let (mut exact, mut correct, mut total, mut sim) = (0usize, 0usize, 0usize, 0.0f64);
    for (i, t) in truth.iter().take(denominator).enumerate() {
        let row: Vec<(CellOutcome, Option<usize>)> = match pred.get(i) {
            Some(p) => align_cells(t, p),
            None => vec![(CellOutcome::Missing, None); t.len()],
        };
        if pred.get(i) == Some(t) {
            exact += 1;
        }
        for (j, (o, k)) in row.iter().enumerate() {
            total += 1;
            if *o == CellOutcome::Correct {
                correct += 1;
            }
            if let Some(k) = k {
                sim += strsim::normalized_levenshtein(&t[j], &pred[i][*k]);
            }
        }
        cells.push(row.into_iter().map(|(o, _)| o).collect());
    }
    let rows = denominator.min(truth.len());
    let rate = |x: f64, d: usize| if d == 0 { 0.0 } else { x / d as f64 };
    MemorizationReport {
        cells,
        exact_match_rate: rate(exact as f64, rows),
        cell_accuracy: rate(correct as f64, total),
        char_similarity: rate(sim, total),
        collision_floor,
        rows_scored: rows,
        parse_failed: false,
    }
}

fn collision_floor(data: &Dataset) -> f64 {
    data.schema.variables.iter().map(|v| 1.0 / v.cardinality() as f64).product()
}

fn row_strings(data: &Dataset, i: usize) -> Vec<String> {
    data.records[i].cells.iter().enumerate().map(|(v, &c)| data.schema.variables[v].code(c).to_string()).collect()
}

fn csv_line(cells: &[String]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(cells).expect("in-memory write");
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8").trim_end().to_string()
}

/// Parse completion lines into rows, skipping fences and header echoes.
/// Stops at the first line that is not a CSV row with the dataset's delimiter.
fn parse_completion(text: &str, header: &[String]) -> (Vec<Vec<String>>, bool) {
    let mut rows = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("```") {
            continue;
        }
        let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(line.as_bytes());
        let rec = match r.records().next() {
            Some(Ok(rec)) => rec,
            _ => return (rows, true),
        };
        let cells: Vec<String> = rec.iter().map(|c| c.trim().to_string()).collect();
        if header.len() > 1 && cells.len() < 2 {
            return (rows, true);
        }
        if cells.iter().map(|c| c.to_ascii_lowercase()).eq(header.iter().map(|h| h.to_ascii_lowercase())) {
            continue;
        }
        rows.push(cells);
    }
    (rows, false)
}

fn probe_request(cfg: &ProbeConfig, instruction: String, header: &[String], rows: &[Vec<String>]) -> ChatRequest {
    let mut block = csv_line(header);
    for r in rows {
        block.push('\n');
        block.push_str(&csv_line(r));
    }
    let mut req = ChatRequest::new(
        cfg.model.clone(),
        "You complete CSV files. Output only CSV rows, without commentary.",
        format!("{instruction}\n\n{block}"),
    );
    req.max_tokens = cfg.max_tokens;
    req
}

/// Prompt with the header and first rows; score the next rows the model writes.
pub fn header_test(client: &LlmClient, data: &Dataset, cfg: &ProbeConfig) -> Result<MemorizationReport, MemorizeError> {
    let need = cfg.n_prompt_rows + cfg.n_completion_rows;
    if data.len() < need || cfg.n_completion_rows == 0 {
        return Err(MemorizeError::TooSmall { got: data.len(), need: need.max(1) });
    }
    let header: Vec<String> = data.schema.names().into_iter().map(String::from).collect();
    let prompt_rows: Vec<Vec<String>> = (0..cfg.n_prompt_rows).map(|i| row_strings(data, i)).collect();
    let truth: Vec<Vec<String>> = (cfg.n_prompt_rows..need).map(|i| row_strings(data, i)).collect();
    let req = probe_request(
        cfg,
        format!("Continue this CSV file with the next {} rows.", cfg.n_completion_rows),
        &header,
        &prompt_rows,
    );
    let resp = client.complete(&req)?;
    let (pred, failed) = parse_completion(&resp.text, &header);
    let denominator = if failed { pred.len().min(truth.len()) } else { truth.len() };
    let mut report = score_rows(&truth, &pred, denominator, collision_floor(data));
    report.parse_failed = failed;
    Ok(report)
}

/// Prompt with random contiguous blocks; score the single next row of each.
pub fn row_completion_test(
    client: &LlmClient,
    data: &Dataset,
    cfg: &ProbeConfig,
    n_trials: usize,
    seed: u64,
) -> Result<MemorizationReport, MemorizeError> {
    if n_trials == 0 {
        return Err(MemorizeError::NoTrials);
    }
    let need = MIN_ROWS_FOR_COMPLETION.max(cfg.n_prompt_rows + 1);
    if data.len() < need {
        return Err(MemorizeError::TooSmall { got: data.len(), need });
    }
    let header: Vec<String> = data.schema.names().into_iter().map(String::from).collect();
    let mut rng = rng::seeded(seed);
    let mut truth = Vec::with_capacity(n_trials);
    let mut pred = Vec::with_capacity(n_trials);
    let mut failed = false;
    for _ in 0..n_trials {
        let start = rng.random_range(0..=data.len() - cfg.n_prompt_rows - 1);
        let block: Vec<Vec<String>> = (start..start + cfg.n_prompt_rows).map(|i| row_strings(data, i)).collect();
        let req = probe_request(cfg, "Output the row that follows these rows of a CSV file.".into(), &header, &block);
        let resp = client.complete(&req)?;
        let (rows, f) = parse_completion(&resp.text, &header);
        failed |= f;
        truth.push(row_strings(data, start + cfg.n_prompt_rows));
        pred.push(rows.into_iter().next().unwrap_or_default());
    }
    let mut report = score_rows(&truth, &pred, n_trials, collision_floor(data));
    report.parse_failed = failed;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::binary_schema;
    use crate::dataset::Role;
    use crate::generators::{gen_uniform, GenSpec};
    use crate::llm::{ChatResponse, FnTransport};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn alignment_classifies_cells() {
        let t = s(&["1", "2", "3", "4"]);
        let out: Vec<CellOutcome> = align_cells(&t, &s(&["1", "9", "3", "4"])).into_iter().map(|x| x.0).collect();
        assert_eq!(out, [CellOutcome::Correct, CellOutcome::Incorrect, CellOutcome::Correct, CellOutcome::Correct]);
        let out: Vec<CellOutcome> = align_cells(&t, &s(&["1", "3", "4"])).into_iter().map(|x| x.0).collect();
        assert_eq!(out, [CellOutcome::Correct, CellOutcome::Missing, CellOutcome::Correct, CellOutcome::Correct]);
    }

    #[test]
    fn completion_parsing_tolerates_fences_and_header() {
        let header = s(&["A", "B"]);
        let (rows, failed) = parse_completion("```csv\nA,B\n1,2\n3,4\n```", &header);
        assert_eq!(rows, vec![s(&["1", "2"]), s(&["3", "4"])]);
        assert!(!failed);
        let (rows, failed) = parse_completion("1,2\nSure! here you go\n3,4", &header);
        assert_eq!(rows.len(), 1);
        assert!(failed);
    }

    fn regurgitator(data: &Dataset) -> LlmClient {
        let lines: Vec<String> = (0..data.len()).map(|i| csv_line(&row_strings(data, i))).collect();
        LlmClient::new(Arc::new(FnTransport::new(move |r, _| {
            let last = r.user[0].lines().last().unwrap().to_string();
            let pos = lines.iter().position(|l| *l == last).unwrap();
            Ok(ChatResponse::estimated(r, lines[pos + 1..].join("\n")))
        })))
    }

    #[test]
    fn regurgitation_scores_one() {
        let data = gen_uniform(&binary_schema(6), &GenSpec::new(40, 1).unwrap());
        // distinct rows so the mock can locate its position
        let mut data = data;
        for (i, r) in data.records.iter_mut().enumerate() {
            for (v, c) in r.cells.iter_mut().enumerate() {
                *c = ((i >> v) & 1) as u32;
            }
        }
        let client = regurgitator(&data);
        let cfg = ProbeConfig::new("m");
        let h = header_test(&client, &data, &cfg).unwrap();
        assert_eq!(h.exact_match_rate, 1.0);
        assert_eq!(h.cell_accuracy, 1.0);
        assert_eq!(h.char_similarity, 1.0);
        assert!(h.reproduced());
        let r = row_completion_test(&client, &data, &cfg, 10, 3).unwrap();
        assert_eq!(r.exact_match_rate, 1.0);
        assert_eq!(row_completion_test(&client, &data, &cfg, 0, 3), Err(MemorizeError::NoTrials));
    }

    #[test]
    fn too_small_dataset() {
        let data = gen_uniform(&binary_schema(2), &GenSpec::new(6, 1).unwrap()).with_role(Role::Private);
        let client = regurgitator(&data);
        assert!(matches!(header_test(&client, &data, &ProbeConfig::new("m")), Err(MemorizeError::TooSmall { .. })));
    }

    proptest! {
        #[test]
        fn more_correct_cells_never_score_lower(
            truth in proptest::collection::vec(0u8..3, 1..8),
            noise in proptest::collection::vec(0u8..3, 8),
            keep in proptest::collection::vec(any::<bool>(), 8),
            extra in proptest::collection::vec(any::<bool>(), 8),
        ) {
            let t: Vec<String> = truth.iter().map(|x| x.to_string()).collect();
            let a: Vec<String> = t.iter().enumerate().map(|(j, c)| if keep[j] { c.clone() } else { format!("x{}", noise[j]) }).collect();
            let b: Vec<String> = t.iter().enumerate().map(|(j, c)| if keep[j] || extra[j] { c.clone() } else { a[j].clone() }).collect();
            let ra = score_rows(&[t.clone()], &[a], 1, 0.1);
            let rb = score_rows(&[t], &[b], 1, 0.1);
            prop_assert!(rb.exact_match_rate >= ra.exact_match_rate);
            prop_assert!(rb.cell_accuracy >= ra.cell_accuracy);
            prop_assert!(rb.char_similarity >= ra.char_similarity - 1e-12);
            for r in [&ra, &rb] {
                prop_assert!((0.0..=1.0).contains(&r.char_similarity) && (0.0..=1.0).contains(&r.cell_accuracy));
            }
        }
    }
}
