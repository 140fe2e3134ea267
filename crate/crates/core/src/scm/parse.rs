use super::{Clause, CmpOp, Constraint, Distribution, Operand, Pred, ScmError, ScmModel};
use crate::schema::Schema;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(String),
    Str(String),
    Param(String),
    Sym(&'static str),
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

const SYMS: [&str; 20] = [
    "==", "!=", "<=", ">=", "=>", "&&", "||", "<", ">", "|", "~", ",", ":", ";", "{", "}", "(", ")", "!", "=",
];

fn lex(text: &str) -> Result<Vec<Spanned>, ScmError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let syntax = |line, col, msg: String| ScmError::Syntax { line, col, msg };
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
        } else if c.is_whitespace() {
            advance(1, &mut i, &mut col);
        } else if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c.is_ascii_alphabetic() || c == '_' || c == '$' {
            let start = i;
            advance(1, &mut i, &mut col);
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                advance(1, &mut i, &mut col);
            }
            let word: String = chars[start..i].iter().collect();
            let tok = match word.strip_prefix('$') {
                Some(p) => Tok::Param(p.to_string()),
                None => Tok::Ident(word),
            };
            out.push(Spanned { tok, line: l0, col: c0 });
        } else if c.is_ascii_digit() || ((c == '-' || c == '.') && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            advance(1, &mut i, &mut col);
            while i < chars.len() {
                let d = chars[i];
                let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                if d.is_ascii_alphanumeric() || d == '.' || d == '_' || exp_sign {
                    advance(1, &mut i, &mut col);
                } else {
                    break;
                }
            }
            out.push(Spanned { tok: Tok::Num(chars[start..i].iter().collect()), line: l0, col: c0 });
        } else if c == '"' || c == '\'' {
            let quote = c;
            advance(1, &mut i, &mut col);
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => return Err(syntax(l0, c0, "unterminated string".into())),
                    Some(&q) if q == quote => {
                        advance(1, &mut i, &mut col);
                        break;
                    }
                    Some('\\') if chars.get(i + 1).is_some() => {
                        s.push(chars[i + 1]);
                        advance(2, &mut i, &mut col);
                    }
                    Some(&ch) => {
                        s.push(ch);
                        advance(1, &mut i, &mut col);
                    }
                }
            }
            out.push(Spanned { tok: Tok::Str(s), line: l0, col: c0 });
        } else {
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let sym = SYMS
                .iter()
                .find(|s| rest.starts_with(**s))
                .ok_or_else(|| syntax(l0, c0, format!("unexpected character `{c}`")))?;
            advance(sym.len(), &mut i, &mut col);
            out.push(Spanned { tok: Tok::Sym(sym), line: l0, col: c0 });
        }
    }
    Ok(out)
}

/// Parse-time options.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    /// Reject codes outside a variable's value set. When false, such codes are
    /// dropped from distributions (the remaining weight is renormalized) and
    /// make comparisons false; each occurrence is recorded as a warning.
    pub strict_range: bool,
    /// Accept `$name` placeholders in weight positions. Placeholders stand
    /// for unit weights (0.5 in `bernoulli`) and skip the weight-sum check.
    pub template: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self { strict_range: true, template: false }
    }
}

/// Tolerance on the raw weight sum before renormalization.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-3;

struct Parser<'a> {
    toks: Vec<Spanned>,
    pos: usize,
    schema: &'a Schema,
    opts: ParseOptions,
    warnings: Vec<String>,
    params: Vec<String>,
    end: (usize, usize),
}

pub fn parse_scm(text: &str, schema: &Arc<Schema>) -> Result<ScmModel, ScmError> {
    parse_scm_with(text, schema, ParseOptions::default())
}

pub fn parse_scm_with(text: &str, schema: &Arc<Schema>, opts: ParseOptions) -> Result<ScmModel, ScmError> {
    parse_inner(text, schema, opts).map(|(m, _)| m)
}

/// Parse a document whose weights may still be `$name` placeholders.
/// Returns the model (placeholders filled as described on [`ParseOptions`])
/// and the distinct placeholder names in order of first use.
pub fn parse_scm_template(text: &str, schema: &Arc<Schema>) -> Result<(ScmModel, Vec<String>), ScmError> {
    parse_inner(text, schema, ParseOptions { strict_range: true, template: true })
}

fn parse_inner(text: &str, schema: &Arc<Schema>, opts: ParseOptions) -> Result<(ScmModel, Vec<String>), ScmError> {
    let toks = lex(text)?;
    let lines = text.lines().count().max(1);
    let end = (lines, text.lines().last().map_or(1, |l| l.chars().count() + 1));
    let mut p = Parser { toks, pos: 0, schema, opts, warnings: Vec::new(), params: Vec::new(), end };
    let d = schema.len();
    let mut parents: Vec<Option<Vec<usize>>> = vec![None; d];
    let mut equations: Vec<Vec<Clause>> = vec![Vec::new(); d];
    let mut constraints = Vec::new();
    while p.pos < p.toks.len() {
        if p.eat_sym(";") {
            continue;
        }
        let (line, col) = p.here();
        match p.next_ident()?.as_str() {
            "var" => {
                let (v, ps, clauses) = p.equation()?;
                if parents[v].is_some() {
                    return Err(ScmError::DuplicateEquation(schema.variables[v].name.clone()));
                }
                parents[v] = Some(ps);
                equations[v] = clauses;
            }
            "constraint" => constraints.push(p.constraint()?),
            other => {
                return Err(ScmError::Syntax { line, col, msg: format!("expected `var` or `constraint`, found `{other}`") })
            }
        }
    }
    if let Some(v) = parents.iter().position(Option::is_none) {
        return Err(ScmError::MissingEquation(schema.variables[v].name.clone()));
    }
    let mut model = ScmModel {
        schema: schema.clone(),
        parents: parents.into_iter().map(Option::unwrap).collect(),
        equations,
        constraints,
        order: Vec::new(),
        warnings: p.warnings,
    };
    model.order = super::validate_dag(&model)?;
    Ok((model, p.params))
}

impl Parser<'_> {
    fn here(&self) -> (usize, usize) {
        self.toks.get(self.pos).map_or(self.end, |t| (t.line, t.col))
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ScmError> {
        let (line, col) = self.here();
        Err(ScmError::Syntax { line, col, msg: msg.into() })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|t| &t.tok)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(x)) if *x == s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), ScmError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(format!("expected `{s}`{}", self.found()))
        }
    }

    fn found(&self) -> String {
        match self.peek() {
            None => ", found end of input".into(),
            Some(Tok::Ident(s) | Tok::Num(s)) => format!(", found `{s}`"),
            Some(Tok::Str(s)) => format!(", found \"{s}\""),
            Some(Tok::Param(s)) => format!(", found `${s}`"),
            Some(Tok::Sym(s)) => format!(", found `{s}`"),
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(x)) if x == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn next_ident(&mut self) -> Result<String, ScmError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            Some(Tok::Param(p)) => Err(ScmError::UnresolvedParameter(p.clone())),
            _ => self.err(format!("expected identifier{}", self.found())),
        }
    }

    fn variable(&mut self) -> Result<usize, ScmError> {
        let (line, col) = self.here();
        let name = self.next_ident()?;
        self.schema.index_of(&name).ok_or(ScmError::UnknownVariable { name, line, col })
    }

    fn equation(&mut self) -> Result<(usize, Vec<usize>, Vec<Clause>), ScmError> {
        let v = self.variable()?;
        let mut parents = Vec::new();
        if self.eat_sym("|") {
            loop {
                let p = self.variable()?;
                if p == v {
                    return Err(ScmError::Cycle(vec![self.name(v), self.name(v)]));
                }
                if !parents.contains(&p) {
                    parents.push(p);
                }
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym("~")?;
        let mut clauses = Vec::new();
        loop {
            let has_else = self.eat_kw("else");
            let guard = if !has_else && self.eat_kw("when") {
                let g = self.predicate()?;
                let mut refs = Vec::new();
                g.variables(&mut refs);
                if let Some(&bad) = refs.iter().find(|r| !parents.contains(r)) {
                    return Err(ScmError::NonParentGuard { var: self.name(v), referenced: self.name(bad) });
                }
                self.expect_sym(":")?;
                Some(g)
            } else {
                None
            };
            let dist = self.distribution(v)?;
            let last = guard.is_none();
            clauses.push(Clause { guard, dist });
            if last {
                break;
            }
            self.eat_sym(",");
            if self.pos >= self.toks.len() || self.is_kw("var") || self.is_kw("constraint") || self.eat_sym(";") {
                return Err(ScmError::MissingDefault(self.name(v)));
            }
        }
        Ok((v, parents, clauses))
    }

    fn name(&self, v: usize) -> String {
        self.schema.variables[v].name.clone()
    }

    fn number(&mut self) -> Result<f64, ScmError> {
        match self.peek() {
            Some(Tok::Num(s)) => match s.parse::<f64>() {
                Ok(x) if x.is_finite() => {
                    self.pos += 1;
                    Ok(x)
                }
                _ => self.err(format!("invalid number `{s}`")),
            },
            Some(Tok::Param(p)) if self.opts.template => {
                let p = p.clone();
                self.pos += 1;
                if !self.params.contains(&p) {
                    self.params.push(p);
                }
                Ok(f64::NAN)
            }
            Some(Tok::Param(p)) => Err(ScmError::UnresolvedParameter(p.clone())),
            _ => self.err(format!("expected number{}", self.found())),
        }
    }

    fn code_literal(&mut self) -> Result<String, ScmError> {
        match self.peek().cloned() {
            Some(Tok::Num(s) | Tok::Ident(s) | Tok::Str(s)) => {
                self.pos += 1;
                Ok(s)
            }
            Some(Tok::Param(p)) => Err(ScmError::UnresolvedParameter(p)),
            _ => self.err(format!("expected a value code{}", self.found())),
        }
    }

    /// Resolve a code of `v`; `None` when out of range and the parser is lenient.
    fn resolve_code(&mut self, v: usize, code: &str) -> Result<Option<u32>, ScmError> {
        let spec = &self.schema.variables[v];
        if let Some(i) = spec.index_of(code) {
            return Ok(Some(i));
        }
        // numeric spellings such as `1.0` for code `1`
        if let Ok(x) = code.parse::<f64>() {
            if let Some(i) = spec.codes().position(|c| c.parse::<f64>().is_ok_and(|y| y == x)) {
                return Ok(Some(i as u32));
            }
        }
        if self.opts.strict_range {
            Err(ScmError::UnknownCode { var: spec.name.clone(), code: code.to_string() })
        } else {
            self.warnings.push(format!("`{}`: value `{code}` is outside the valid range", spec.name));
            Ok(None)
        }
    }

    fn distribution(&mut self, v: usize) -> Result<Distribution, ScmError> {
        let k = self.schema.variables[v].cardinality();
        let kind = self.next_ident()?;
        match kind.as_str() {
            "categorical" => {
                self.expect_sym("{")?;
                let mut weights = vec![0.0; k];
                let mut total = 0.0;
                let mut placeholder = false;
                while !self.eat_sym("}") {
                    let code = self.code_literal()?;
                    self.expect_sym(":")?;
                    let mut w = self.number()?;
                    if w.is_nan() {
                        placeholder = true;
                        w = 1.0;
                    }
                    if w < 0.0 {
                        return Err(ScmError::BadWeights { var: self.name(v), sum: w });
                    }
                    total += w;
                    if let Some(i) = self.resolve_code(v, &code)? {
                        weights[i as usize] += w;
                    }
                    if !self.eat_sym(",") {
                        self.expect_sym("}")?;
                        break;
                    }
                }
                if !placeholder && (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
                    return Err(ScmError::BadWeights { var: self.name(v), sum: total });
                }
                let kept: f64 = weights.iter().sum();
                if kept <= 0.0 {
                    return Err(ScmError::BadWeights { var: self.name(v), sum: kept });
                }
                if (kept - 1.0).abs() > 1e-12 {
                    weights.iter_mut().for_each(|w| *w /= kept);
                }
                Ok(Distribution::Categorical(weights))
            }
            "bernoulli" => {
                if k != 2 {
                    return Err(ScmError::Unsupported(format!(
                        "bernoulli on `{}` with {k} values",
                        self.name(v)
                    )));
                }
                self.expect_sym("(")?;
                let mut p = self.number()?;
                if p.is_nan() {
                    p = 0.5;
                }
                self.expect_sym(")")?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(ScmError::BadWeights { var: self.name(v), sum: p });
                }
                Ok(Distribution::Bernoulli(p))
            }
            "uniform" => {
                self.expect_sym("{")?;
                let mut codes = Vec::new();
                while !self.eat_sym("}") {
                    let code = self.code_literal()?;
                    if let Some(i) = self.resolve_code(v, &code)? {
                        if !codes.contains(&i) {
                            codes.push(i);
                        }
                    }
                    if !self.eat_sym(",") {
                        self.expect_sym("}")?;
                        break;
                    }
                }
                if codes.is_empty() {
                    return Err(ScmError::BadWeights { var: self.name(v), sum: 0.0 });
                }
                Ok(Distribution::Uniform(codes))
            }
            other => Err(ScmError::Unsupported(format!("distribution `{other}`"))),
        }
    }

    fn constraint(&mut self) -> Result<Constraint, ScmError> {
        let description = match self.peek().cloned() {
            Some(Tok::Str(s)) => {
                self.pos += 1;
                self.expect_sym(":")?;
                s
            }
            _ => String::new(),
        };
        let start = self.pos;
        let predicate = self.predicate()?;
        let source = render_tokens(&self.toks[start..self.pos]);
        Ok(Constraint { description: if description.is_empty() { source.clone() } else { description }, predicate })
    }

    fn predicate(&mut self) -> Result<Pred, ScmError> {
        let lhs = self.disjunction()?;
        if self.eat_kw("implies") || self.eat_sym("=>") {
            let rhs = self.predicate()?;
            return Ok(Pred::Implies(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Pred, ScmError> {
        let mut items = vec![self.conjunction()?];
        while self.eat_kw("or") || self.eat_sym("||") {
            items.push(self.conjunction()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { Pred::Or(items) })
    }

    fn conjunction(&mut self) -> Result<Pred, ScmError> {
        let mut items = vec![self.negation()?];
        while self.eat_kw("and") || self.eat_sym("&&") {
            items.push(self.negation()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { Pred::And(items) })
    }

    fn negation(&mut self) -> Result<Pred, ScmError> {
        if self.eat_kw("not") || self.eat_sym("!") {
            return Ok(Pred::Not(Box::new(self.negation()?)));
        }
        self.atom()
    }

    fn operand(&mut self) -> Result<Operand, ScmError> {
        match self.peek().cloned() {
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(match self.schema.index_of(&s) {
                    Some(v) => Operand::Var(v),
                    None => Operand::Lit(s),
                })
            }
            Some(Tok::Num(s) | Tok::Str(s)) => {
                self.pos += 1;
                Ok(Operand::Lit(s))
            }
            Some(Tok::Param(p)) => Err(ScmError::UnresolvedParameter(p)),
            _ => self.err(format!("expected a variable or value{}", self.found())),
        }
    }

    fn atom(&mut self) -> Result<Pred, ScmError> {
        if self.eat_sym("(") {
            let p = self.predicate()?;
            self.expect_sym(")")?;
            return Ok(p);
        }
        if self.is_kw("true") || self.is_kw("false") {
            // a variable could be named `true`; only treat as a constant when no comparison follows
            if !matches!(self.peek_at(1), Some(Tok::Sym("==" | "!=" | "<" | "<=" | ">" | ">=" | "="))) {
                let b = self.is_kw("true");
                self.pos += 1;
                return Ok(Pred::Const(b));
            }
        }
        let (line, col) = self.here();
        let lhs = self.operand()?;
        let negated_in = self.is_kw("not") && matches!(self.peek_at(1), Some(Tok::Ident(s)) if s == "in");
        if negated_in {
            self.pos += 1;
        }
        if self.eat_kw("in") {
            let Operand::Var(v) = lhs else {
                return Err(ScmError::Syntax { line, col, msg: "left side of `in` must be a variable".into() });
            };
            self.expect_sym("{")?;
            let mut set = Vec::new();
            while !self.eat_sym("}") {
                let code = self.code_literal()?;
                if let Some(i) = self.resolve_code(v, &code)? {
                    set.push(i);
                }
                if !self.eat_sym(",") {
                    self.expect_sym("}")?;
                    break;
                }
            }
            let p = Pred::In { var: v, set };
            return Ok(if negated_in { Pred::Not(Box::new(p)) } else { p });
        }
        let op = match self.peek() {
            Some(Tok::Sym("==" | "=")) => CmpOp::Eq,
            Some(Tok::Sym("!=")) => CmpOp::Ne,
            Some(Tok::Sym("<")) => CmpOp::Lt,
            Some(Tok::Sym("<=")) => CmpOp::Le,
            Some(Tok::Sym(">")) => CmpOp::Gt,
            Some(Tok::Sym(">=")) => CmpOp::Ge,
            _ => return self.err(format!("expected a comparison{}", self.found())),
        };
        self.pos += 1;
        let rhs = self.operand()?;
        self.comparison(lhs, op, rhs, line, col)
    }

    fn comparison(&mut self, lhs: Operand, op: CmpOp, rhs: Operand, line: usize, col: usize) -> Result<Pred, ScmError> {
        let (lhs, op, rhs) = match (lhs, rhs) {
            (Operand::Lit(a), Operand::Var(v)) => (Operand::Var(v), op.flipped(), Operand::Lit(a)),
            (l, r) => (l, op, r),
        };
        let type_err = |what: &str| ScmError::Type { line, col, msg: format!("ordering comparison on {what}") };
        match (&lhs, &rhs) {
            (Operand::Lit(a), Operand::Lit(b)) => {
                if op.is_ordering() {
                    let (Ok(x), Ok(y)) = (a.parse::<i64>(), b.parse::<i64>()) else {
                        return Err(type_err("non-integer literals"));
                    };
                    return Ok(Pred::Const(op.apply(x.cmp(&y))));
                }
                let eq = a == b;
                Ok(Pred::Const(if op == CmpOp::Eq { eq } else { !eq }))
            }
            (Operand::Var(v), Operand::Lit(code)) => {
                let v = *v;
                if op.is_ordering() {
                    if !self.integer_coded(v) {
                        return Err(type_err(&format!("non-integer variable `{}`", self.name(v))));
                    }
                    let Ok(x) = code.parse::<i64>() else {
                        return Err(type_err(&format!("value `{code}`")));
                    };
                    return Ok(Pred::CmpLit { var: v, op, value: x });
                }
                let set = self.resolve_code(v, code)?.into_iter().collect();
                let p = Pred::In { var: v, set };
                Ok(if op == CmpOp::Eq { p } else { Pred::Not(Box::new(p)) })
            }
            (Operand::Var(a), Operand::Var(b)) => {
                let (a, b) = (*a, *b);
                if op.is_ordering() && !(self.integer_coded(a) && self.integer_coded(b)) {
                    return Err(type_err("non-integer variables"));
                }
                Ok(Pred::CmpVars { lhs: a, op, rhs: b })
            }
            (Operand::Lit(_), Operand::Var(_)) => unreachable!(),
        }
    }

    fn integer_coded(&self, v: usize) -> bool {
        self.schema.variables[v].codes().all(|c| c.parse::<i64>().is_ok())
    }
}

fn render_tokens(toks: &[Spanned]) -> String {
    let mut out = String::new();
    for (i, t) in toks.iter().enumerate() {
        let piece = match &t.tok {
            Tok::Ident(s) | Tok::Num(s) => s.clone(),
            Tok::Str(s) => format!("{s:?}"),
            Tok::Param(s) => format!("${s}"),
            Tok::Sym(s) => s.to_string(),
        };
        let tight = matches!(t.tok, Tok::Sym("," | ")" | "}")) || (i > 0 && matches!(toks[i - 1].tok, Tok::Sym("(" | "{")));
        if i > 0 && !tight {
            out.push(' ');
        }
        out.push_str(&piece);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexer_positions() {
        let toks = lex("var A ~\n  categorical{1: 0.5}").unwrap();
        assert_eq!((toks[3].line, toks[3].col), (2, 3));
        assert_eq!(toks[3].tok, Tok::Ident("categorical".into()));
        assert_eq!(toks[7].tok, Tok::Num("0.5".into()));
        assert!(matches!(lex("var A @"), Err(ScmError::Syntax { line: 1, col: 7, .. })));
        assert_eq!(lex("1e-3 -2")
            .unwrap()
            .into_iter()
            .map(|t| t.tok)
            .collect::<Vec<_>>(), vec![Tok::Num("1e-3".into()), Tok::Num("-2".into())]);
    }
}
