//! LLM agent that builds a structural causal model step by step. Every step's
//! answer is machine-checked; a rejected answer is re-requested with the
//! reason attached, up to a per-state attempt cap.

mod mix;
mod prompts;
mod responder;

pub use mix::{facility_location_value, greedy_facility_location, mix, mix_max_coverage, mix_uniform, similarity_matrix, MixError, MixMode, MixSpec};
pub use responder::ModelResponder;

use crate::generators::{Artifact, GenContext, GenError, GenSpec, Generated, SurrogateGenerator};
use crate::llm::{ChatRequest, LlmClient, LlmError};
use crate::rng;
use crate::schema::Schema;
use crate::scm::{
    parse_scm, parse_scm_template, parse_scm_with, sample_scm, topo_order, ParseOptions, Pred, ScmError, ScmModel,
    DEFAULT_MAX_ATTEMPTS,
};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgentState {
    Schema,
    ElicitConstraints,
    RootNodes,
    RootToNonRootEdges,
    NonRootToNonRootEdges,
    Dag,
    StructuralEquations,
    Parameters,
    AssembleModel,
    EnforceRange,
    EnforceConstraints,
    Sample,
}

impl AgentState {
    pub const ALL: [AgentState; 12] = [
        AgentState::Schema,
        AgentState::ElicitConstraints,
        AgentState::RootNodes,
        AgentState::RootToNonRootEdges,
        AgentState::NonRootToNonRootEdges,
        AgentState::Dag,
        AgentState::StructuralEquations,
        AgentState::Parameters,
        AgentState::AssembleModel,
        AgentState::EnforceRange,
        AgentState::EnforceConstraints,
        AgentState::Sample,
    ];

    /// One-based step number.
    pub fn step(self) -> usize {
        self as usize + 1
    }

    pub fn from_step(step: usize) -> Option<Self> {
        step.checked_sub(1).and_then(|i| Self::ALL.get(i).copied())
    }

    /// Successor on success; failure always stays put.
    pub fn next(self) -> Option<Self> {
        Self::from_step(self.step() + 1)
    }

    /// Whether the state queries the model. `Sample` is terminal.
    pub fn queries_llm(self) -> bool {
        self != AgentState::Sample
    }
}

impl fmt::Display for AgentState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateLog {
    pub state: AgentState,
    pub attempts: usize,
    pub failures: Vec<String>,
    /// Accepted answer, verbatim.
    pub accepted: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentRunLog {
    pub states: Vec<StateLog>,
    pub total_retries: usize,
    pub outcome: String,
}

impl AgentRunLog {
    pub fn state(&self, s: AgentState) -> Option<&StateLog> {
        self.states.iter().find(|l| l.state == s)
    }

    /// One line per visited state, then a summary line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.states {
            out += &serde_json::to_string(s).expect("serializable");
            out.push('\n');
        }
        let summary = serde_json::json!({"total_retries": self.total_retries, "outcome": self.outcome});
        out += &summary.to_string();
        out.push('\n');
        out
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("max_retries must be at least 1")]
    Config,
    #[error("state {state} failed {attempts} times; last failure: {last}")]
    RetriesExhausted { state: AgentState, attempts: usize, last: String, log: Box<AgentRunLog> },
    #[error("state {state}: {error}")]
    Llm { state: AgentState, error: LlmError, log: Box<AgentRunLog> },
}

impl AgentError {
    pub fn log(&self) -> Option<&AgentRunLog> {
        match self {
            AgentError::Config => None,
            AgentError::RetriesExhausted { log, .. } | AgentError::Llm { log, .. } => Some(log),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AgentRun {
    pub model: ScmModel,
    pub log: AgentRunLog,
}

/// Settings shared by every request of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Records drawn to check that the final model's constraints are satisfiable.
    pub pilot_records: usize,
}

impl AgentConfig {
    pub fn new(model: impl Into<String>) -> Self {
        Self { model: model.into(), temperature: 0.0, max_tokens: 4096, pilot_records: 200 }
    }
}

#[derive(Debug, Clone)]
struct ElicitedConstraint {
    description: String,
    text: String,
    pred: Pred,
}

/// Accepted outputs carried from state to state.
#[derive(Debug, Default)]
struct Progress {
    constraints: Vec<ElicitedConstraint>,
    roots: Vec<usize>,
    root_edges: Vec<(usize, usize)>,
    other_edges: Vec<(usize, usize)>,
    parents: Vec<Vec<usize>>,
    template: String,
    params: Vec<String>,
    resolved: String,
    assembled: Option<ScmModel>,
    assembled_text: String,
    ranged_text: String,
    model: Option<ScmModel>,
}

pub fn run_agent(client: &LlmClient, schema: &Arc<Schema>, max_retries: usize, seed: u64) -> Result<AgentRun, AgentError> {
    run_agent_with(client, schema, &AgentConfig::new("default"), max_retries, seed)
}

pub fn run_agent_with(
    client: &LlmClient,
    schema: &Arc<Schema>,
    cfg: &AgentConfig,
    max_retries: usize,
    seed: u64,
) -> Result<AgentRun, AgentError> {
    if max_retries == 0 {
        return Err(AgentError::Config);
    }
    let mut log = AgentRunLog::default();
    let mut progress = Progress::default();
    let system = prompts::system(schema);
    let mut calls = 0u64;
    let mut state = AgentState::Schema;
    while state.queries_llm() {
        let base = prompts::base(state, schema, &progress);
        let mut entry = StateLog { state, attempts: 0, failures: Vec::new(), accepted: None };
        let mut retry: Option<String> = None;
        loop {
            entry.attempts += 1;
            let mut user = vec![base.clone()];
            if let Some(r) = &retry {
                user.push(r.clone());
            }
            let req = ChatRequest {
                model: cfg.model.clone(),
                system: system.clone(),
                user,
                max_tokens: cfg.max_tokens,
                temperature: cfg.temperature,
                seed: Some(rng::derive(seed, calls)),
            };
            calls += 1;
            let text = match client.complete(&req) {
                Ok(r) => r.text,
                Err(error) => {
                    log.outcome = format!("aborted at {state}: {error}");
                    log.states.push(entry);
                    return Err(AgentError::Llm { state, error, log: Box::new(log) });
                }
            };
            match accept(state, schema, cfg, seed, &text, &mut progress) {
                Ok(()) => {
                    entry.accepted = Some(text);
                    break;
                }
                Err(reason) => {
                    entry.failures.push(reason.clone());
                    if entry.attempts >= max_retries {
                        log.total_retries += entry.attempts - 1;
                        log.outcome = format!("aborted at {state}: {reason}");
                        let attempts = entry.attempts;
                        log.states.push(entry);
                        return Err(AgentError::RetriesExhausted { state, attempts, last: reason, log: Box::new(log) });
                    }
                    retry = Some(prompts::retry(&text, &reason));
                }
            }
        }
        log.total_retries += entry.attempts - 1;
        log.states.push(entry);
        state = state.next().expect("Sample is terminal");
    }
    let model = progress.model.expect("EnforceConstraints accepted a model");
    log.states.push(StateLog { state: AgentState::Sample, attempts: 0, failures: Vec::new(), accepted: Some(model.to_dsl()) });
    log.outcome = "completed".into();
    Ok(AgentRun { model, log })
}

fn accept(
    state: AgentState,
    schema: &Arc<Schema>,
    cfg: &AgentConfig,
    seed: u64,
    text: &str,
    p: &mut Progress,
) -> Result<(), String> {
    let d = schema.len();
    match state {
        AgentState::Schema => {
            #[derive(Deserialize)]
            struct A {
                variables: Vec<String>,
            }
            let a: A = json_answer(text)?;
            let want: BTreeSet<&str> = schema.variables.iter().map(|v| v.name.as_str()).collect();
            let got: BTreeSet<&str> = a.variables.iter().map(String::as_str).collect();
            let mut problems = Vec::new();
            let missing: Vec<&str> = want.difference(&got).copied().collect();
            if !missing.is_empty() {
                problems.push(format!("the following variables were missing: {}", missing.join(", ")));
            }
            let extra: Vec<&str> = got.difference(&want).copied().collect();
            if !extra.is_empty() {
                problems.push(format!("the following names are not schema variables: {}", extra.join(", ")));
            }
            if got.len() != a.variables.len() {
                problems.push("some variables were listed more than once".into());
            }
            if problems.is_empty() {
                Ok(())
            } else {
                Err(problems.join("; "))
            }
        }
        AgentState::ElicitConstraints => {
            #[derive(Deserialize)]
            struct C {
                #[serde(default)]
                description: String,
                predicate: String,
            }
            #[derive(Deserialize)]
            struct A {
                constraints: Vec<C>,
            }
            let a: A = json_answer(text)?;
            let mut out = Vec::new();
            for (i, c) in a.constraints.into_iter().enumerate() {
                let pred = parse_predicate(schema, &c.predicate)
                    .map_err(|e| format!("constraint {} (`{}`) does not parse: {e}", i + 1, c.predicate))?;
                out.push(ElicitedConstraint { description: c.description, text: c.predicate, pred });
            }
            p.constraints = out;
            Ok(())
        }
        AgentState::RootNodes => {
            #[derive(Deserialize)]
            struct A {
                roots: Vec<String>,
            }
            let a: A = json_answer(text)?;
            if a.roots.is_empty() {
                return Err("at least one root node is required".into());
            }
            p.roots = resolve_names(schema, &a.roots)?;
            Ok(())
        }
        AgentState::RootToNonRootEdges | AgentState::NonRootToNonRootEdges => {
            #[derive(Deserialize)]
            struct A {
                edges: Vec<(String, String)>,
            }
            let a: A = json_answer(text)?;
            let edges = resolve_edges(schema, &a.edges)?;
            let from_root = state == AgentState::RootToNonRootEdges;
            let mut problems = Vec::new();
            for &(u, v) in &edges {
                let (un, vn) = (&schema.variables[u].name, &schema.variables[v].name);
                if p.roots.contains(&v) {
                    problems.push(format!("{un} -> {vn} points into root node {vn}"));
                }
                if from_root && !p.roots.contains(&u) {
                    problems.push(format!("{un} -> {vn} does not start at a root node"));
                }
                if !from_root && p.roots.contains(&u) {
                    problems.push(format!("{un} -> {vn} starts at a root node; root edges were already proposed"));
                }
                if !from_root && p.root_edges.contains(&(u, v)) {
                    problems.push(format!("{un} -> {vn} was already proposed"));
                }
            }
            if !problems.is_empty() {
                return Err(problems.join("; "));
            }
            if from_root {
                p.root_edges = edges;
            } else {
                p.other_edges = edges;
            }
            Ok(())
        }
        AgentState::Dag => {
            #[derive(Deserialize)]
            struct A {
                nodes: Vec<String>,
                edges: Vec<(String, String)>,
            }
            let a: A = json_answer(text)?;
            let nodes = resolve_names(schema, &a.nodes)?;
            if nodes.len() != d {
                let missing: Vec<&str> =
                    (0..d).filter(|v| !nodes.contains(v)).map(|v| schema.variables[v].name.as_str()).collect();
                return Err(format!("the DAG must contain every variable exactly once; missing: {}", missing.join(", ")));
            }
            let edges = resolve_edges(schema, &a.edges)?;
            let mut parents = vec![Vec::new(); d];
            for &(u, v) in &edges {
                parents[v].push(u);
            }
            parents.iter_mut().for_each(|ps| ps.sort_unstable());
            if let Err(cycle) = topo_order(&parents) {
                let names: Vec<&str> = cycle.iter().map(|&v| schema.variables[v].name.as_str()).collect();
                return Err(format!("the graph has a cycle: {}", names.join(" -> ")));
            }
            p.parents = parents;
            Ok(())
        }
        AgentState::StructuralEquations => {
            let doc = dsl_answer(text);
            let (model, params) = parse_scm_template(&doc, schema).map_err(|e| format!("the equations do not parse: {e}"))?;
            same_structure(schema, &model.parents, &p.parents)?;
            p.template = doc;
            p.params = params;
            Ok(())
        }
        AgentState::Parameters => {
            #[derive(Deserialize)]
            struct A {
                parameters: BTreeMap<String, f64>,
            }
            let a: A = if p.params.is_empty() && !text.contains('{') {
                A { parameters: BTreeMap::new() }
            } else {
                json_answer(text)?
            };
            let missing: Vec<&str> =
                p.params.iter().filter(|k| !a.parameters.contains_key(*k)).map(String::as_str).collect();
            if !missing.is_empty() {
                return Err(format!("no value given for: {}", missing.join(", ")));
            }
            let resolved = substitute_params(&p.template, &a.parameters)?;
            parse_scm(&resolved, schema).map_err(|e| format!("with these values the equations are invalid: {e}"))?;
            p.resolved = resolved;
            Ok(())
        }
        AgentState::AssembleModel => {
            let doc = dsl_answer(text);
            let model = parse_scm_with(&doc, schema, ParseOptions { strict_range: false, ..Default::default() })
                .map_err(|e| format!("the document does not parse: {e}"))?;
            same_structure(schema, &model.parents, &p.parents)?;
            p.assembled_text = doc;
            p.assembled = Some(model);
            Ok(())
        }
        AgentState::EnforceRange => {
            let doc = dsl_answer(text);
            let model = parse_scm(&doc, schema).map_err(|e| format!("the document violates the valid values: {e}"))?;
            same_structure(schema, &model.parents, &p.parents)?;
            p.ranged_text = doc;
            Ok(())
        }
        AgentState::EnforceConstraints => {
            let doc = dsl_answer(text);
            let model = parse_scm(&doc, schema).map_err(|e| format!("the document does not parse: {e}"))?;
            same_structure(schema, &model.parents, &p.parents)?;
            let missing: Vec<&str> = p
                .constraints
                .iter()
                .filter(|c| !model.constraints.iter().any(|m| equivalent(schema, &c.pred, &m.predicate)))
                .map(|c| c.text.as_str())
                .collect();
            if !missing.is_empty() {
                return Err(format!("these constraints are missing: {}", missing.join("; ")));
            }
            let pilot = GenSpec { target_m: cfg.pilot_records.max(1), seed: rng::derive_str(seed, "pilot") };
            match sample_scm(&model, &pilot, DEFAULT_MAX_ATTEMPTS) {
                Err(ScmError::Unsatisfiable { .. }) => {
                    return Err("no sampled record satisfies all constraints; the constraints contradict the equations".into())
                }
                Err(e) => return Err(e.to_string()),
                Ok(_) => {}
            }
            p.model = Some(model);
            Ok(())
        }
        AgentState::Sample => Ok(()),
    }
}

/// First JSON object in the text, tolerating code fences and surrounding prose.
fn json_answer<T: DeserializeOwned>(text: &str) -> Result<T, String> {
    let start = text.find('{').ok_or("the answer contains no JSON object")?;
    let end = text.rfind('}').filter(|&e| e > start).ok_or("the answer contains no complete JSON object")?;
    serde_json::from_str(&text[start..=end]).map_err(|e| format!("the JSON answer is invalid: {e}"))
}

/// Contents of the first fenced block, or the whole text.
fn dsl_answer(text: &str) -> String {
    let mut inside = false;
    let mut block = Vec::new();
    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            if inside {
                return block.join("\n");
            }
            inside = true;
        } else if inside {
            block.push(line);
        }
    }
    if inside {
        block.join("\n")
    } else {
        text.to_string()
    }
}

fn resolve_names(schema: &Schema, names: &[String]) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for n in names {
        let v = schema.index_of(n).ok_or_else(|| format!("`{n}` is not a schema variable"))?;
        if out.contains(&v) {
            return Err(format!("`{n}` is listed more than once"));
        }
        out.push(v);
    }
    Ok(out)
}

fn resolve_edges(schema: &Schema, edges: &[(String, String)]) -> Result<Vec<(usize, usize)>, String> {
    let mut out = Vec::new();
    for (a, b) in edges {
        let u = schema.index_of(a).ok_or_else(|| format!("edge {a} -> {b}: `{a}` is not a schema variable"))?;
        let v = schema.index_of(b).ok_or_else(|| format!("edge {a} -> {b}: `{b}` is not a schema variable"))?;
        if u == v {
            return Err(format!("edge {a} -> {b} is a self-loop"));
        }
        if out.contains(&(u, v)) {
            return Err(format!("edge {a} -> {b} is listed more than once"));
        }
        out.push((u, v));
    }
    Ok(out)
}

fn same_structure(schema: &Schema, got: &[Vec<usize>], want: &[Vec<usize>]) -> Result<(), String> {
    let mut problems = Vec::new();
    for (v, (g, w)) in got.iter().zip(want).enumerate() {
        let (g, w): (BTreeSet<_>, BTreeSet<_>) = (g.iter().collect(), w.iter().collect());
        if g != w {
            let names = |s: &BTreeSet<&usize>| s.iter().map(|&&p| schema.variables[p].name.clone()).collect::<Vec<_>>().join(", ");
            problems.push(format!(
                "`{}` must have parents [{}] per the DAG, found [{}]",
                schema.variables[v].name,
                names(&w),
                names(&g)
            ));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems.join("; "))
    }
}

/// Parse a lone predicate against the schema.
pub fn parse_predicate(schema: &Arc<Schema>, text: &str) -> Result<Pred, ScmError> {
    let mut doc = prompts::stub_equations(schema);
    doc.push_str("constraint ");
    doc.push_str(text);
    doc.push('\n');
    let mut m = parse_scm(&doc, schema)?;
    m.constraints.pop().ok_or_else(|| ScmError::Syntax { line: 1, col: 1, msg: "empty predicate".into() })
        .map(|c| c.predicate)
}

/// Replace `$name` placeholders with their values.
pub fn substitute_params(template: &str, values: &BTreeMap<String, f64>) -> Result<String, String> {
    let mut out = String::with_capacity(template.len());
    let mut chars = template.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if c != '$' {
            out.push(c);
            continue;
        }
        let mut end = i + 1;
        while let Some(&(j, c)) = chars.peek() {
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
                end = j + c.len_utf8();
                chars.next();
            } else {
                break;
            }
        }
        let name = &template[i + 1..end];
        let v = values.get(name).ok_or_else(|| format!("no value given for: {name}"))?;
        if !v.is_finite() {
            return Err(format!("parameter {name} is not a finite number"));
        }
        out.push_str(&format!("{v:?}"));
    }
    Ok(out)
}

/// Same truth value on every assignment of the referenced variables; falls
/// back to structural equality when that joint domain is too large.
fn equivalent(schema: &Schema, a: &Pred, b: &Pred) -> bool {
    if a == b {
        return true;
    }
    let mut vars = Vec::new();
    a.variables(&mut vars);
    b.variables(&mut vars);
    let cards: Vec<usize> = vars.iter().map(|&v| schema.variables[v].cardinality()).collect();
    let total = cards.iter().try_fold(1usize, |acc, &k| acc.checked_mul(k).filter(|&t| t <= 1 << 16));
    let Some(total) = total else { return false };
    let mut cells = vec![0u32; schema.len()];
    for mut idx in 0..total {
        for (&v, &k) in vars.iter().zip(&cards) {
            cells[v] = (idx % k) as u32;
            idx /= k;
        }
        if a.eval(schema, &cells) != b.eval(schema, &cells) {
            return false;
        }
    }
    true
}

/// Runs `panel` independent agent sessions in parallel, each with its own seed.
pub fn run_panel(
    client: &LlmClient,
    schema: &Arc<Schema>,
    cfg: &AgentConfig,
    panel: usize,
    max_retries: usize,
    seed: u64,
) -> Vec<Result<AgentRun, AgentError>> {
    (0..panel)
        .into_par_iter()
        .map(|i| run_agent_with(client, schema, cfg, max_retries, rng::derive(seed, i as u64)))
        .collect()
}

pub const DEFAULT_PANEL: usize = 8;

/// Panel of agent runs, each sampled to `target_m` records, then mixed.
pub struct AgentGenerator {
    pub client: Arc<LlmClient>,
    pub config: AgentConfig,
    pub panel: usize,
    pub max_retries: usize,
    pub mode: MixMode,
}

impl AgentGenerator {
    pub fn new(client: Arc<LlmClient>, model: impl Into<String>) -> Self {
        Self {
            client,
            config: AgentConfig::new(model),
            panel: DEFAULT_PANEL,
            max_retries: 5,
            mode: MixMode::MaxCoverage { k: DEFAULT_PANEL.div_ceil(2) },
        }
    }
}

impl SurrogateGenerator for AgentGenerator {
    fn name(&self) -> &str {
        "agent"
    }

    fn generate(&self, ctx: &GenContext<'_>, spec: &GenSpec) -> Result<Generated, GenError> {
        let runs = run_panel(&self.client, ctx.schema, &self.config, self.panel.max(1), self.max_retries, spec.seed);
        let mut artifacts = Vec::new();
        let mut datasets = Vec::new();
        for (i, run) in runs.into_iter().enumerate() {
            match run {
                Ok(run) => {
                    let sample = sample_scm(&run.model, &GenSpec { target_m: spec.target_m, seed: rng::derive(spec.seed, 1000 + i as u64) }, DEFAULT_MAX_ATTEMPTS)
                        .map_err(|e| GenError::Failed(format!("panel member {i}: {e}")))?;
                    artifacts.push(Artifact { name: format!("agent_{i}.scm"), content: run.model.to_dsl() });
                    artifacts.push(Artifact { name: format!("agent_{i}.log.jsonl"), content: run.log.to_jsonl() });
                    datasets.push(sample.dataset);
                }
                Err(e) => {
                    if let Some(log) = e.log() {
                        artifacts.push(Artifact { name: format!("agent_{i}.log.jsonl"), content: log.to_jsonl() });
                    }
                }
            }
        }
        if datasets.is_empty() {
            return Err(GenError::Failed("every agent run failed".into()));
        }
        let mode = match self.mode {
            MixMode::MaxCoverage { k } => MixMode::MaxCoverage { k: k.clamp(1, datasets.len()) },
            m => m,
        };
        let (dataset, selected) = mix(&datasets, &MixSpec { mode, target_m: spec.target_m, seed: spec.seed })
            .map_err(|e| GenError::Failed(e.to_string()))?;
        artifacts.push(Artifact { name: "mix_selection.json".into(), content: serde_json::to_string(&selected).expect("serializable") });
        Ok(Generated { dataset, artifacts })
    }
}

/// Mixes the datasets in `ctx.sources`.
pub struct MixGenerator {
    pub mode: MixMode,
}

impl SurrogateGenerator for MixGenerator {
    fn name(&self) -> &str {
        "mix"
    }

    fn generate(&self, ctx: &GenContext<'_>, spec: &GenSpec) -> Result<Generated, GenError> {
        if ctx.sources.is_empty() {
            return Err(GenError::MissingInput { generator: "mix".into(), what: "source datasets" });
        }
        let (dataset, selected) = mix(ctx.sources, &MixSpec { mode: self.mode, target_m: spec.target_m, seed: spec.seed })
            .map_err(|e| GenError::Failed(e.to_string()))?;
        let content = serde_json::to_string(&selected).expect("serializable");
        Ok(Generated { dataset, artifacts: vec![Artifact { name: "mix_selection.json".into(), content }] })
    }
}
