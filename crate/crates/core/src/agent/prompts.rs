use super::{AgentState, Progress};
use crate::schema::Schema;
use std::fmt::Write;

const GRAMMAR: &str = "Model document syntax, one statement per variable:
  var NAME | PARENT1, PARENT2 ~ when GUARD: DIST else DIST
  var ROOT ~ DIST
DIST is one of categorical{CODE: weight, ...} (weights sum to 1), bernoulli(p) (p is the probability of the
second listed value; two-valued variables only) or uniform{CODE, ...}. A GUARD is a predicate over the
variable's parents. Predicates compare a variable with a value code or another variable using
==, !=, <, <=, >, >= (ordering only for integer codes), `VAR in {CODE, ...}`, combined with not, and, or,
implies and parentheses. Constraints are written as: constraint \"description\": PREDICATE";

pub(super) fn system(schema: &Schema) -> String {
    let topic = if schema.topic.is_empty() { "this domain" } else { schema.topic.as_str() };
    format!(
        "You are an expert in {topic}. You are designing a structural causal model of {topic} data using only the \
         dataset schema. Answer every request in exactly the format it asks for."
    )
}

fn names(schema: &Schema, vars: &[usize]) -> String {
    vars.iter().map(|&v| schema.variables[v].name.as_str()).collect::<Vec<_>>().join(", ")
}

fn edges_json(schema: &Schema, edges: &[(usize, usize)]) -> String {
    let items: Vec<String> =
        edges.iter().map(|&(u, v)| format!("[\"{}\", \"{}\"]", schema.variables[u].name, schema.variables[v].name)).collect();
    format!("[{}]", items.join(", "))
}

/// One uniform equation per variable, used to parse free-standing predicates.
pub(super) fn stub_equations(schema: &Schema) -> String {
    let mut out = String::new();
    for v in &schema.variables {
        let codes: Vec<String> = v.codes().map(|c| format!("{c:?}")).collect();
        let _ = writeln!(out, "var {} ~ uniform{{{}}}", v.name, codes.join(", "));
    }
    out
}

pub(super) fn base(state: AgentState, schema: &Schema, p: &Progress) -> String {
    let mut out = format!("Step {}: {state}\n", state.step());
    let all: Vec<usize> = (0..schema.len()).collect();
    let non_roots: Vec<usize> = all.iter().copied().filter(|v| !p.roots.contains(v)).collect();
    match state {
        AgentState::Schema => {
            out += "List every variable (key) defined in the schema below, exactly as written.\n";
            out += "Respond with JSON: {\"variables\": [\"NAME\", ...]}\n\nSchema:\n";
            out += &schema.serialize();
        }
        AgentState::ElicitConstraints => {
            out += "Propose realistic consistency constraints among these variables, such as permissible value \
                    ranges or logical relationships between fields.\n";
            out += GRAMMAR;
            out += "\nRespond with JSON: {\"constraints\": [{\"description\": \"...\", \"predicate\": \"...\"}]}\n\nSchema:\n";
            out += &schema.serialize();
        }
        AgentState::RootNodes => {
            let _ = writeln!(out, "Variables: {}", names(schema, &all));
            out += "Identify the variables that can serve as root nodes of a causal graph: those that are exogenous \
                    or least likely to be influenced by the other variables.\n";
            out += "Respond with JSON: {\"roots\": [\"NAME\", ...]}";
        }
        AgentState::RootToNonRootEdges => {
            let _ = writeln!(out, "Root nodes: {}\nNon-root nodes: {}", names(schema, &p.roots), names(schema, &non_roots));
            out += "Propose parent-child edges from root nodes to non-root nodes.\n";
            out += "Respond with JSON: {\"edges\": [[\"PARENT\", \"CHILD\"], ...]}";
        }
        AgentState::NonRootToNonRootEdges => {
            let _ = writeln!(out, "Non-root nodes: {}", names(schema, &non_roots));
            let _ = writeln!(out, "Edges so far: {}", edges_json(schema, &p.root_edges));
            out += "Propose additional parent-child edges among the non-root nodes.\n";
            out += "Respond with JSON: {\"edges\": [[\"PARENT\", \"CHILD\"], ...]}";
        }
        AgentState::Dag => {
            let mut proposed = p.root_edges.clone();
            proposed.extend(&p.other_edges);
            let _ = writeln!(out, "Variables: {}", names(schema, &all));
            let _ = writeln!(out, "Proposed edges: {}", edges_json(schema, &proposed));
            out += "Combine the proposed edges into a directed acyclic graph that contains every variable exactly once. \
                    Remove or reverse edges as needed so that there are no cycles.\n";
            out += "Respond with JSON: {\"nodes\": [\"NAME\", ...], \"edges\": [[\"PARENT\", \"CHILD\"], ...]}";
        }
        AgentState::StructuralEquations => {
            out += "Write one structural equation per variable. Each equation must declare exactly the parents below \
                    and give a distribution conditional on the parent values. Unknown numbers may be left as \
                    named parameters written $name.\n";
            out += GRAMMAR;
            out += "\n\nParents:\n";
            for (v, ps) in p.parents.iter().enumerate() {
                let _ = writeln!(out, "  {}: [{}]", schema.variables[v].name, names(schema, ps));
            }
            out += "\nSchema:\n";
            out += &schema.serialize();
            out += "\nRespond with the model document in a ``` code block.";
        }
        AgentState::Parameters => {
            out += "Assign a numeric value to every parameter in these equations so that all weights form valid \
                    distributions.\n```\n";
            out += &p.template;
            let _ = write!(out, "\n```\nParameters: {}\n", p.params.join(", "));
            out += "Respond with JSON: {\"parameters\": {\"name\": value, ...}}";
        }
        AgentState::AssembleModel => {
            out += "Combine the DAG and the structural equations into a single model document.\n```\n";
            out += &p.resolved;
            out += "\n```\nRespond with the complete model document in a ``` code block.";
        }
        AgentState::EnforceRange => {
            out += "Amend the model so that every value it mentions is a valid value of its variable.\nValid values:\n";
            for v in &schema.variables {
                let _ = writeln!(out, "  {}: {}", v.name, v.codes().collect::<Vec<_>>().join(", "));
            }
            if let Some(m) = &p.assembled {
                for w in &m.warnings {
                    let _ = writeln!(out, "Problem: {w}");
                }
            }
            out += "```\n";
            out += &p.assembled_text;
            out += "\n```\nRespond with the complete model document in a ``` code block.";
        }
        AgentState::EnforceConstraints => {
            out += "Add the consistency constraints elicited at the beginning to the model as constraint statements.\n";
            for c in &p.constraints {
                let _ = writeln!(out, "  constraint {:?}: {}", c.description, c.text);
            }
            out += "```\n";
            out += &p.ranged_text;
            out += "\n```\nRespond with the complete model document in a ``` code block.";
        }
        AgentState::Sample => {}
    }
    out
}

pub(super) fn retry(previous: &str, reason: &str) -> String {
    format!(
        "Your previous answer was:\n{previous}\n\nIt was rejected: {reason}\nReturn a corrected answer in the requested format."
    )
}

/// Step number from the first line of a prompt built by [`base`].
pub(super) fn step_of(prompt: &str) -> Option<usize> {
    prompt.strip_prefix("Step ")?.split(':').next()?.parse().ok()
}
