use super::prompts::step_of;
use super::AgentState;
use crate::llm::{ChatRequest, ChatResponse, Transport, TransportError};
use crate::scm::{Distribution, ScmModel};
use serde_json::json;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;
use std::sync::Mutex;
use std::time::Duration;

/// Offline stand-in for the model: answers every agent step so that the
/// agent reconstructs `truth`. Chosen states can be made to answer wrongly
/// once, or always.
pub struct ModelResponder {
    truth: ScmModel,
    fail_once: BTreeSet<AgentState>,
    always_fail: Option<AgentState>,
    seen: Mutex<BTreeMap<AgentState, usize>>,
}

impl ModelResponder {
    pub fn new(truth: ScmModel) -> Self {
        Self { truth, fail_once: BTreeSet::new(), always_fail: None, seen: Mutex::new(BTreeMap::new()) }
    }

    pub fn failing_once(mut self, states: impl IntoIterator<Item = AgentState>) -> Self {
        self.fail_once.extend(states);
        self
    }

    pub fn always_failing(mut self, state: AgentState) -> Self {
        self.always_fail = Some(state);
        self
    }

    pub fn answer(&self, state: AgentState) -> String {
        let n = {
            let mut seen = self.seen.lock().unwrap();
            let n = seen.entry(state).or_default();
            *n += 1;
            *n
        };
        let fail = self.always_fail == Some(state) || (n == 1 && self.fail_once.contains(&state));
        if fail {
            self.wrong(state)
        } else {
            self.right(state)
        }
    }

    fn name(&self, v: usize) -> &str {
        &self.truth.schema.variables[v].name
    }

    fn roots(&self) -> Vec<usize> {
        (0..self.truth.schema.len()).filter(|&v| self.truth.parents[v].is_empty()).collect()
    }

    fn edge_list(&self, root_parent: Option<bool>) -> Vec<[String; 2]> {
        let roots = self.roots();
        self.truth
            .edges()
            .into_iter()
            .filter(|(u, _)| root_parent.is_none_or(|r| roots.contains(u) == r))
            .map(|(u, v)| [self.name(u).to_string(), self.name(v).to_string()])
            .collect()
    }

    /// Equations with every weight replaced by a named parameter, plus the values.
    fn template(&self) -> (String, BTreeMap<String, f64>) {
        let mut out = String::new();
        let mut values = BTreeMap::new();
        let schema = &self.truth.schema;
        for &v in &self.truth.order {
            let spec = &schema.variables[v];
            out += &format!("var {}", spec.name);
            if !self.truth.parents[v].is_empty() {
                let ps: Vec<&str> = self.truth.parents[v].iter().map(|&p| self.name(p)).collect();
                let _ = write!(out, " | {}", ps.join(", "));
            }
            out += " ~";
            let clauses = &self.truth.equations[v];
            for (ci, clause) in clauses.iter().enumerate() {
                out += "\n    ";
                match &clause.guard {
                    Some(g) => {
                        let _ = write!(out, "when {}: ", g.to_text(schema));
                    }
                    None if clauses.len() > 1 => out += "else ",
                    None => {}
                }
                match &clause.dist {
                    Distribution::Categorical(w) => {
                        let items: Vec<String> = w
                            .iter()
                            .enumerate()
                            .map(|(i, &x)| {
                                let name = format!("w{v}_{ci}_{i}");
                                values.insert(name.clone(), x);
                                format!("{:?}: ${name}", spec.code(i as u32))
                            })
                            .collect();
                        let _ = write!(out, "categorical{{{}}}", items.join(", "));
                    }
                    Distribution::Bernoulli(p) => {
                        let name = format!("p{v}_{ci}");
                        values.insert(name.clone(), *p);
                        let _ = write!(out, "bernoulli(${name})");
                    }
                    Distribution::Uniform(codes) => {
                        let items: Vec<String> = codes.iter().map(|&c| format!("{:?}", spec.code(c))).collect();
                        let _ = write!(out, "uniform{{{}}}", items.join(", "));
                    }
                }
            }
            out.push('\n');
        }
        (out, values)
    }

    fn equations_only(&self) -> String {
        let mut m = self.truth.clone();
        m.constraints.clear();
        m.to_dsl()
    }

    fn fenced(doc: &str) -> String {
        format!("```\n{doc}```")
    }

    fn right(&self, state: AgentState) -> String {
        let schema = &self.truth.schema;
        let all: Vec<&str> = schema.variables.iter().map(|v| v.name.as_str()).collect();
        match state {
            AgentState::Schema => json!({ "variables": all }).to_string(),
            AgentState::ElicitConstraints => {
                let cs: Vec<_> = self
                    .truth
                    .constraints
                    .iter()
                    .map(|c| json!({"description": c.description, "predicate": c.predicate.to_text(schema)}))
                    .collect();
                json!({ "constraints": cs }).to_string()
            }
            AgentState::RootNodes => {
                let roots: Vec<&str> = self.roots().into_iter().map(|v| self.name(v)).collect();
                json!({ "roots": roots }).to_string()
            }
            AgentState::RootToNonRootEdges => json!({ "edges": self.edge_list(Some(true)) }).to_string(),
            AgentState::NonRootToNonRootEdges => json!({ "edges": self.edge_list(Some(false)) }).to_string(),
            AgentState::Dag => json!({ "nodes": all, "edges": self.edge_list(None) }).to_string(),
            AgentState::StructuralEquations => Self::fenced(&self.template().0),
            AgentState::Parameters => json!({ "parameters": self.template().1 }).to_string(),
            AgentState::AssembleModel | AgentState::EnforceRange => Self::fenced(&self.equations_only()),
            AgentState::EnforceConstraints => Self::fenced(&self.truth.to_dsl()),
            AgentState::Sample => String::new(),
        }
    }

    fn wrong(&self, state: AgentState) -> String {
        let schema = &self.truth.schema;
        let mut all: Vec<&str> = schema.variables.iter().map(|v| v.name.as_str()).collect();
        let first_non_root = (0..schema.len()).find(|&v| !self.truth.parents[v].is_empty());
        match state {
            AgentState::Schema => {
                all.pop();
                json!({ "variables": all }).to_string()
            }
            AgentState::ElicitConstraints => {
                json!({"constraints": [{"description": "broken", "predicate": "( unbalanced"}]}).to_string()
            }
            AgentState::RootNodes => json!({ "roots": ["__no_such_variable__"] }).to_string(),
            AgentState::RootToNonRootEdges => {
                let child = first_non_root.map_or(all[0], |v| self.name(v));
                json!({ "edges": [["__no_such_variable__", child]] }).to_string()
            }
            AgentState::NonRootToNonRootEdges => {
                let v = first_non_root.map_or(all[0], |v| self.name(v));
                json!({ "edges": [[v, v]] }).to_string()
            }
            AgentState::Dag => {
                let mut edges = self.edge_list(None);
                match edges.first().cloned() {
                    Some([a, b]) => edges.push([b, a]),
                    None => {
                        all.pop();
                    }
                }
                json!({ "nodes": all, "edges": edges }).to_string()
            }
            AgentState::StructuralEquations => Self::fenced("var ~ ~ nonsense\n"),
            AgentState::Parameters => json!({ "parameters": { "w": "not a number" } }).to_string(),
            AgentState::AssembleModel => "I cannot combine these.".into(),
            AgentState::EnforceRange => {
                let v = self.truth.order[0];
                let doc = self.equations_only();
                let mut lines: Vec<String> = Vec::new();
                let mut skipping = false;
                for line in doc.lines() {
                    if line.starts_with("var ") {
                        skipping = line.starts_with(&format!("var {} ", self.name(v)));
                        if skipping {
                            let mut eq = format!("var {}", self.name(v));
                            if !self.truth.parents[v].is_empty() {
                                let ps: Vec<&str> = self.truth.parents[v].iter().map(|&p| self.name(p)).collect();
                                eq += &format!(" | {}", ps.join(", "));
                            }
                            eq += " ~ uniform{\"__out_of_range__\"}";
                            lines.push(eq);
                            continue;
                        }
                    }
                    if !skipping {
                        lines.push(line.to_string());
                    }
                }
                Self::fenced(&(lines.join("\n") + "\n"))
            }
            AgentState::EnforceConstraints => {
                if self.truth.constraints.is_empty() {
                    "no document".into()
                } else {
                    Self::fenced(&self.equations_only())
                }
            }
            AgentState::Sample => String::new(),
        }
    }
}

impl Transport for ModelResponder {
    fn send(&self, req: &ChatRequest, _timeout: Duration) -> Result<ChatResponse, TransportError> {
        let state = req
            .user
            .first()
            .and_then(|u| step_of(u))
            .and_then(AgentState::from_step)
            .ok_or_else(|| TransportError::Fatal("not an agent prompt".into()))?;
        Ok(ChatResponse::estimated(req, self.answer(state)))
    }
}
