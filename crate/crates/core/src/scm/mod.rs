//! Structural causal models over a categorical schema.
//!
//! A model is written in a small text language:
//!
//! ```text
//! # comments run to end of line
//! var AGE ~ categorical{1: 0.5, 2: 0.5}
//! var WORK | AGE ~ when AGE == 1: categorical{1: 0.9, 2: 0.1}
//!                 else categorical{1: 0.2, 2: 0.8}
//! constraint "minors do not work": AGE == 1 implies WORK == 2
//! ```
//!
//! Each variable has one equation: its parents after `|`, then clauses tried in
//! order, the first whose `when` guard holds supplying the distribution. The
//! final clause has no guard. Distributions are `categorical{code: weight, ..}`,
//! `bernoulli(p)` (probability of the second value of a two-value variable) and
//! `uniform{code, ..}`. Predicates combine `==`, `!=`, `<`, `<=`, `>`, `>=`,
//! `in {..}` and `not in {..}` with `not`, `and`, `or` and `implies`; ordering
//! comparisons need integer codes. `$name` placeholders are template
//! parameters and must be substituted before parsing.

mod parse;

pub use parse::{parse_scm, parse_scm_template, parse_scm_with, ParseOptions, WEIGHT_SUM_TOLERANCE};

use crate::dataset::{Dataset, Record, Role};
use crate::generators::GenSpec;
use crate::rng::{self, sample_weighted};
use crate::schema::Schema;
use rand::Rng;
use rayon::prelude::*;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::cmp::Reverse;
use std::fmt::{self, Write};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScmError {
    #[error("{line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: unknown variable `{name}`")]
    UnknownVariable { name: String, line: usize, col: usize },
    #[error("{line}:{col}: {msg}")]
    Type { line: usize, col: usize, msg: String },
    #[error("guard in equation for `{var}` references `{referenced}`, which is not a parent")]
    NonParentGuard { var: String, referenced: String },
    #[error("equation for `{0}` has no default clause")]
    MissingDefault(String),
    #[error("weights for `{var}` are not a distribution (sum {sum})")]
    BadWeights { var: String, sum: f64 },
    #[error("value `{code}` is not valid for `{var}`")]
    UnknownCode { var: String, code: String },
    #[error("unsupported {0}")]
    Unsupported(String),
    #[error("unresolved parameter `${0}`")]
    UnresolvedParameter(String),
    #[error("no equation for `{0}`")]
    MissingEquation(String),
    #[error("more than one equation for `{0}`")]
    DuplicateEquation(String),
    #[error("cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("no record satisfied the constraints after {attempts} attempts each")]
    Unsatisfiable { attempts: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn is_ordering(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }

    pub fn apply(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
        }
    }

    /// The operator with its operands swapped.
    pub fn flipped(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Ge => CmpOp::Le,
            o => o,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Operand {
    Var(usize),
    Lit(String),
}

/// Boolean expression over one record. Codes are resolved to indices at parse time.
#[derive(Debug, Clone, PartialEq)]
pub enum Pred {
    Const(bool),
    Not(Box<Pred>),
    And(Vec<Pred>),
    Or(Vec<Pred>),
    Implies(Box<Pred>, Box<Pred>),
    In { var: usize, set: Vec<u32> },
    CmpLit { var: usize, op: CmpOp, value: i64 },
    CmpVars { lhs: usize, op: CmpOp, rhs: usize },
}

impl Pred {
    pub fn eval(&self, schema: &Schema, cells: &[u32]) -> bool {
        let int = |v: usize| schema.variables[v].code(cells[v]).parse::<i64>().unwrap_or(0);
        match self {
            Pred::Const(b) => *b,
            Pred::Not(p) => !p.eval(schema, cells),
            Pred::And(ps) => ps.iter().all(|p| p.eval(schema, cells)),
            Pred::Or(ps) => ps.iter().any(|p| p.eval(schema, cells)),
            Pred::Implies(a, b) => !a.eval(schema, cells) || b.eval(schema, cells),
            Pred::In { var, set } => set.contains(&cells[*var]),
            Pred::CmpLit { var, op, value } => op.apply(int(*var).cmp(value)),
            Pred::CmpVars { lhs, op, rhs } => {
                if op.is_ordering() {
                    op.apply(int(*lhs).cmp(&int(*rhs)))
                } else {
                    let eq = schema.variables[*lhs].code(cells[*lhs]) == schema.variables[*rhs].code(cells[*rhs]);
                    op.apply(if eq { Ordering::Equal } else { Ordering::Less })
                }
            }
        }
    }

    /// Variables referenced, deduplicated, in first-use order.
    pub fn variables(&self, out: &mut Vec<usize>) {
        let add = |v: usize, out: &mut Vec<usize>| {
            if !out.contains(&v) {
                out.push(v)
            }
        };
        match self {
            Pred::Const(_) => {}
            Pred::Not(p) => p.variables(out),
            Pred::And(ps) | Pred::Or(ps) => ps.iter().for_each(|p| p.variables(out)),
            Pred::Implies(a, b) => {
                a.variables(out);
                b.variables(out);
            }
            Pred::In { var, .. } | Pred::CmpLit { var, .. } => add(*var, out),
            Pred::CmpVars { lhs, rhs, .. } => {
                add(*lhs, out);
                add(*rhs, out);
            }
        }
    }

    /// DSL spelling of the predicate.
    pub fn to_text(&self, schema: &Schema) -> String {
        let mut out = String::new();
        self.render(schema, &mut out);
        out
    }

    fn render(&self, schema: &Schema, out: &mut String) {
        let name = |v: usize| schema.variables[v].name.as_str();
        let join = |ps: &[Pred], sep: &str, out: &mut String| {
            out.push('(');
            for (i, p) in ps.iter().enumerate() {
                if i > 0 {
                    out.push_str(sep);
                }
                p.render(schema, out);
            }
            out.push(')');
        };
        match self {
            Pred::Const(b) => out.push_str(if *b { "true" } else { "false" }),
            Pred::Not(p) => {
                out.push_str("not (");
                p.render(schema, out);
                out.push(')');
            }
            Pred::And(ps) => join(ps, " and ", out),
            Pred::Or(ps) => join(ps, " or ", out),
            Pred::Implies(a, b) => {
                out.push('(');
                a.render(schema, out);
                out.push_str(" implies ");
                b.render(schema, out);
                out.push(')');
            }
            Pred::In { var, set } => {
                let spec = &schema.variables[*var];
                let codes: Vec<String> = set.iter().map(|&c| code_token(spec.code(c))).collect();
                let _ = write!(out, "{} in {{{}}}", name(*var), codes.join(", "));
            }
            Pred::CmpLit { var, op, value } => {
                let _ = write!(out, "{} {} {value}", name(*var), op.symbol());
            }
            Pred::CmpVars { lhs, op, rhs } => {
                let _ = write!(out, "{} {} {}", name(*lhs), op.symbol(), name(*rhs));
            }
        }
    }
}

fn code_token(code: &str) -> String {
    let bare = !code.is_empty()
        && (code.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
            && (code.parse::<f64>().is_ok() || code.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_')))
        && !["true", "false", "and", "or", "not", "in", "implies", "when", "else", "var", "constraint"].contains(&code);
    if bare {
        code.to_string()
    } else {
        format!("{code:?}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    /// One weight per value of the variable, summing to 1.
    Categorical(Vec<f64>),
    /// Probability of the second value of a two-value variable.
    Bernoulli(f64),
    /// Uniform over the listed value indices.
    Uniform(Vec<u32>),
}

impl Distribution {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match self {
            Distribution::Categorical(w) => sample_weighted(rng, w) as u32,
            Distribution::Bernoulli(p) => u32::from(rng.random::<f64>() < *p),
            Distribution::Uniform(codes) => codes[rng.random_range(0..codes.len())],
        }
    }

    /// Probability assigned to each value index.
    pub fn probabilities(&self, k: usize) -> Vec<f64> {
        match self {
            Distribution::Categorical(w) => w.clone(),
            Distribution::Bernoulli(p) => vec![1.0 - p, *p],
            Distribution::Uniform(codes) => {
                let mut out = vec![0.0; k];
                for &c in codes {
                    out[c as usize] = 1.0 / codes.len() as f64;
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    /// `None` for the default clause.
    pub guard: Option<Pred>,
    pub dist: Distribution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub description: String,
    pub predicate: Pred,
}

pub fn eval_constraint(constraint: &Constraint, schema: &Schema, record: &Record) -> bool {
    constraint.predicate.eval(schema, &record.cells)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScmModel {
    pub schema: Arc<Schema>,
    pub parents: Vec<Vec<usize>>,
    /// Ordered clauses per variable; the last is the default.
    pub equations: Vec<Vec<Clause>>,
    pub constraints: Vec<Constraint>,
    /// Topological order, filled by the parser.
    pub order: Vec<usize>,
    /// Out-of-range values dropped by a lenient parse.
    pub warnings: Vec<String>,
}

impl ScmModel {
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (v, ps) in self.parents.iter().enumerate() {
            out.extend(ps.iter().map(|&p| (p, v)));
        }
        out
    }

    /// Index of the first clause of `var`'s equation whose guard holds.
    pub fn select_clause(&self, var: usize, cells: &[u32]) -> usize {
        let eq = &self.equations[var];
        eq.iter()
            .position(|c| c.guard.as_ref().is_none_or(|g| g.eval(&self.schema, cells)))
            .unwrap_or(eq.len() - 1)
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u32> {
        let mut cells = vec![0u32; self.schema.len()];
        for &v in &self.order {
            let c = self.select_clause(v, &cells);
            cells[v] = self.equations[v][c].dist.sample(rng);
        }
        cells
    }

    /// Render back to the text language; parsing the output yields an equal model.
    pub fn to_dsl(&self) -> String {
        let mut out = String::new();
        let order = if self.order.len() == self.schema.len() { self.order.clone() } else { (0..self.schema.len()).collect() };
        for v in order {
            let spec = &self.schema.variables[v];
            out.push_str("var ");
            out.push_str(&spec.name);
            if !self.parents[v].is_empty() {
                let ps: Vec<&str> = self.parents[v].iter().map(|&p| self.schema.variables[p].name.as_str()).collect();
                let _ = write!(out, " | {}", ps.join(", "));
            }
            out.push_str(" ~");
            for clause in &self.equations[v] {
                out.push_str("\n    ");
                match &clause.guard {
                    Some(g) => {
                        out.push_str("when ");
                        g.render(&self.schema, &mut out);
                        out.push_str(": ");
                    }
                    None if self.equations[v].len() > 1 => out.push_str("else "),
                    None => {}
                }
                match &clause.dist {
                    Distribution::Categorical(w) => {
                        let items: Vec<String> =
                            w.iter().enumerate().map(|(i, w)| format!("{}: {w:?}", code_token(spec.code(i as u32)))).collect();
                        let _ = write!(out, "categorical{{{}}}", items.join(", "));
                    }
                    Distribution::Bernoulli(p) => {
                        let _ = write!(out, "bernoulli({p:?})");
                    }
                    Distribution::Uniform(codes) => {
                        let items: Vec<String> = codes.iter().map(|&c| code_token(spec.code(c))).collect();
                        let _ = write!(out, "uniform{{{}}}", items.join(", "));
                    }
                }
            }
            out.push('\n');
        }
        for c in &self.constraints {
            let _ = write!(out, "constraint {:?}: ", c.description);
            c.predicate.render(&self.schema, &mut out);
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for ScmModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_dsl())
    }
}

/// Topological order of a parent-list graph (smallest index first among
/// ready nodes), or one cycle as `[a, b, .., a]` in edge direction.
pub fn topo_order(parents: &[Vec<usize>]) -> Result<Vec<usize>, Vec<usize>> {
    let d = parents.len();
    let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut children = vec![Vec::new(); d];
    for (v, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p].push(v);
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> = (0..d).filter(|&v| indeg[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(d);
    while let Some(Reverse(v)) = ready.pop() {
        order.push(v);
        for &c in &children[v] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.push(Reverse(c));
            }
        }
    }
    if order.len() == d {
        return Ok(order);
    }
    // every unplaced node has an unplaced parent, so walking parents must revisit
    let mut placed = vec![false; d];
    order.iter().for_each(|&v| placed[v] = true);
    let start = (0..d).find(|&v| !placed[v]).unwrap();
    let mut seen = vec![usize::MAX; d];
    let mut path = Vec::new();
    let mut v = start;
    while seen[v] == usize::MAX {
        seen[v] = path.len();
        path.push(v);
        v = *parents[v].iter().find(|&&p| !placed[p]).unwrap();
    }
    let mut cycle = path[seen[v]..].to_vec();
    cycle.push(v);
    cycle.reverse();
    Err(cycle)
}

pub fn validate_dag(model: &ScmModel) -> Result<Vec<usize>, ScmError> {
    topo_order(&model.parents)
        .map_err(|cycle| ScmError::Cycle(cycle.into_iter().map(|v| model.schema.variables[v].name.clone()).collect()))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RejectionStats {
    pub records: usize,
    pub attempts: usize,
    pub rejections: usize,
    /// Records emitted from their final attempt while still violating a constraint.
    pub unrepaired: Vec<usize>,
    /// Violations observed per constraint across all attempts.
    pub violations: Vec<usize>,
}

impl RejectionStats {
    pub fn rejection_rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.rejections as f64 / self.attempts as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScmSample {
    pub dataset: Dataset,
    pub stats: RejectionStats,
}

pub const DEFAULT_MAX_ATTEMPTS: usize = 100;

/// Ancestral sampling with constraint rejection. Record `i` uses its own
/// substream of `spec.seed`, so output does not depend on thread scheduling.
pub fn sample_scm(model: &ScmModel, spec: &GenSpec, max_attempts: usize) -> Result<ScmSample, ScmError> {
    let max_attempts = max_attempts.max(1);
    let nc = model.constraints.len();
    let per_record: Vec<(Vec<u32>, usize, Vec<usize>, bool)> = (0..spec.target_m)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::substream(spec.seed, i as u64);
            let mut violations = vec![0usize; nc];
            let mut attempt = 0;
            loop {
                attempt += 1;
                let cells = model.draw(&mut rng);
                let mut ok = true;
                for (j, c) in model.constraints.iter().enumerate() {
                    if !c.predicate.eval(&model.schema, &cells) {
                        violations[j] += 1;
                        ok = false;
                    }
                }
                if ok || attempt == max_attempts {
                    return (cells, attempt, violations, ok);
                }
            }
        })
        .collect();
    let mut stats = RejectionStats { records: spec.target_m, violations: vec![0; nc], ..Default::default() };
    let mut records = Vec::with_capacity(spec.target_m);
    for (i, (cells, attempts, violations, ok)) in per_record.into_iter().enumerate() {
        stats.attempts += attempts;
        stats.rejections += attempts - usize::from(ok);
        if !ok {
            stats.unrepaired.push(i);
        }
        for (total, v) in stats.violations.iter_mut().zip(violations) {
            *total += v;
        }
        records.push(Record::new(cells));
    }
    if nc > 0 && stats.unrepaired.len() == spec.target_m {
        return Err(ScmError::Unsatisfiable { attempts: max_attempts });
    }
    Ok(ScmSample { dataset: Dataset::new(model.schema.clone(), records, Role::Surrogate), stats })
}
