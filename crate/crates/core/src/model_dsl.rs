//! Path-model language.
//!
//! ```text
//! # mediation triangle
//! M ~ X
//! Y ~ X + M
//! X1 ~~ X2      # exogenous covariance
//! ```
//!
//! `~` is a single-headed (causal) arrow from each right-hand variable to the
//! left-hand one, `~~` a double-headed arrow between exogenous variables.
//! Statements end at a newline or `;`, and `#` starts a comment.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate path: {0}")]
    DuplicatePath(String),
    #[error("model is not recursive, cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("covariance involves endogenous variable `{0}`; only exogenous variables may covary")]
    CovarianceOnEndogenous(String),
    #[error("model contains no statements")]
    EmptyModel,
    #[error("model variable `{0}` is not a data column")]
    MissingColumn(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Regression {
    pub outcome: String,
    pub predictors: Vec<String>,
}

/// Unordered pair; stored in the order written.
#[derive(Debug, Clone, Eq, Serialize)]
pub struct Covariance {
    pub left: String,
    pub right: String,
}

impl Covariance {
    pub fn involves(&self, a: &str, b: &str) -> bool {
        (self.left == a && self.right == b) || (self.left == b && self.right == a)
    }
}

impl PartialEq for Covariance {
    fn eq(&self, other: &Self) -> bool {
        other.involves(&self.left, &self.right)
    }
}

/// One statement as written, after splitting predictor lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Statement {
    Regression { outcome: String, predictors: Vec<String> },
    Covariance { names: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableRole {
    Exogenous,
    Endogenous,
    Mediator,
}

impl fmt::Display for VariableRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VariableRole::Exogenous => "exogenous",
            VariableRole::Endogenous => "endogenous",
            VariableRole::Mediator => "mediator",
        })
    }
}

/// A validated recursive path model.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    /// Names in order of first appearance.
    pub variables: Vec<String>,
    /// One entry per outcome, predictor lists merged across statements.
    pub regressions: Vec<Regression>,
    pub covariances: Vec<Covariance>,
    pub statements: Vec<Statement>,
    pub source_text: String,
}

impl PartialEq for ModelSpec {
    fn eq(&self, other: &Self) -> bool {
        self.variables == other.variables
            && self.regressions == other.regressions
            && self.covariances == other.covariances
    }
}

impl ModelSpec {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    pub fn predictors_of(&self, outcome: &str) -> &[String] {
        self.regressions
            .iter()
            .find(|r| r.outcome == outcome)
            .map(|r| r.predictors.as_slice())
            .unwrap_or(&[])
    }

    pub fn is_endogenous(&self, name: &str) -> bool {
        self.regressions.iter().any(|r| r.outcome == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tok {
    Ident,
    Tilde,
    DoubleTilde,
    Plus,
}

#[derive(Debug, Clone)]
struct Token<'a> {
    kind: Tok,
    text: &'a str,
    line: usize,
    column: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Splits the source into statements of tokens.
fn tokenize(text: &str) -> Result<Vec<Vec<Token<'_>>>, ModelError> {
    let mut statements = Vec::new();
    for (line_idx, raw_line) in text.lines().enumerate() {
        let line = line_idx + 1;
        let code = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let mut current: Vec<Token<'_>> = Vec::new();
        let mut chars = code.char_indices().peekable();
        while let Some((pos, c)) = chars.next() {
            let column = code[..pos].chars().count() + 1;
            match c {
                ';' => {
                    if !current.is_empty() {
                        statements.push(std::mem::take(&mut current));
                    }
                }
                '~' => {
                    if matches!(chars.peek(), Some((_, '~'))) {
                        chars.next();
                        current.push(Token { kind: Tok::DoubleTilde, text: &code[pos..pos + 2], line, column });
                    } else {
                        current.push(Token { kind: Tok::Tilde, text: &code[pos..pos + 1], line, column });
                    }
                }
                '+' => current.push(Token { kind: Tok::Plus, text: &code[pos..pos + 1], line, column }),
                c if c.is_whitespace() => {}
                c if is_ident_start(c) => {
                    let mut end = pos + c.len_utf8();
                    while let Some(&(p, nc)) = chars.peek() {
                        if is_ident_char(nc) {
                            end = p + nc.len_utf8();
                            chars.next();
                        } else {
                            break;
                        }
                    }
                    current.push(Token { kind: Tok::Ident, text: &code[pos..end], line, column });
                }
                other => {
                    return Err(ModelError::Syntax {
                        line,
                        column,
                        message: format!("unexpected character `{other}`"),
                    })
                }
            }
        }
        if !current.is_empty() {
            statements.push(current);
        }
    }
    Ok(statements)
}

fn syntax(tok: &Token<'_>, message: impl Into<String>) -> ModelError {
    ModelError::Syntax { line: tok.line, column: tok.column, message: message.into() }
}

/// `Ident (~|~~) Ident (+ Ident)*`
fn parse_statement(tokens: &[Token<'_>]) -> Result<(Statement, (usize, usize)), ModelError> {
    let first = &tokens[0];
    if first.kind != Tok::Ident {
        return Err(syntax(first, format!("expected variable name, found `{}`", first.text)));
    }
    let op = tokens
        .get(1)
        .ok_or_else(|| syntax(first, "expected `~` or `~~` after variable name"))?;
    if !matches!(op.kind, Tok::Tilde | Tok::DoubleTilde) {
        return Err(syntax(op, format!("expected `~` or `~~`, found `{}`", op.text)));
    }
    let mut rhs = Vec::new();
    let mut expect_ident = true;
    let mut last = op;
    for tok in &tokens[2..] {
        match (expect_ident, tok.kind) {
            (true, Tok::Ident) => rhs.push(tok.text.to_string()),
            (false, Tok::Plus) => {}
            (true, _) => return Err(syntax(tok, format!("expected variable name, found `{}`", tok.text))),
            (false, _) => return Err(syntax(tok, format!("expected `+` or end of statement, found `{}`", tok.text))),
        }
        expect_ident = !expect_ident;
        last = tok;
    }
    if expect_ident {
        return Err(ModelError::Syntax {
            line: last.line,
            column: last.column + last.text.chars().count(),
            message: "expected variable name".into(),
        });
    }
    let lhs = first.text.to_string();
    let stmt = match op.kind {
        Tok::Tilde => Statement::Regression { outcome: lhs, predictors: rhs },
        _ => {
            if let Some(same) = rhs.iter().find(|r| **r == lhs) {
                return Err(syntax(first, format!("covariance `{lhs} ~~ {same}` needs two distinct variables")));
            }
            let mut names = vec![lhs];
            names.extend(rhs);
            Statement::Covariance { names }
        }
    };
    Ok((stmt, (first.line, first.column)))
}

/// Parse and validate model source text.
pub fn parse_model(text: &str) -> Result<ModelSpec, ModelError> {
    let raw = tokenize(text)?;
    if raw.is_empty() {
        return Err(ModelError::EmptyModel);
    }
    let mut statements = Vec::with_capacity(raw.len());
    for toks in &raw {
        statements.push(parse_statement(toks)?.0);
    }
    build_spec(statements, text.to_string())
}

/// Assemble a model from statements, enforcing every model invariant.
pub fn build_spec(statements: Vec<Statement>, source_text: String) -> Result<ModelSpec, ModelError> {
    if statements.is_empty() {
        return Err(ModelError::EmptyModel);
    }
    let mut variables: Vec<String> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut note = |name: &str, variables: &mut Vec<String>| {
        if seen.insert(name.to_string()) {
            variables.push(name.to_string());
        }
    };
    let mut regressions: Vec<Regression> = Vec::new();
    let mut covariances: Vec<Covariance> = Vec::new();

    for stmt in &statements {
        match stmt {
            Statement::Regression { outcome, predictors } => {
                note(outcome, &mut variables);
                for p in predictors {
                    note(p, &mut variables);
                }
                let idx = match regressions.iter().position(|r| &r.outcome == outcome) {
                    Some(i) => i,
                    None => {
                        regressions.push(Regression { outcome: outcome.clone(), predictors: Vec::new() });
                        regressions.len() - 1
                    }
                };
                for p in predictors {
                    if regressions[idx].predictors.contains(p) {
                        return Err(ModelError::DuplicatePath(format!("{outcome} ~ {p}")));
                    }
                    regressions[idx].predictors.push(p.clone());
                }
            }
            Statement::Covariance { names } => {
                for n in names {
                    note(n, &mut variables);
                }
                let left = &names[0];
                for right in &names[1..] {
                    if covariances.iter().any(|c| c.involves(left, right)) {
                        return Err(ModelError::DuplicatePath(format!("{left} ~~ {right}")));
                    }
                    covariances.push(Covariance { left: left.clone(), right: right.clone() });
                }
            }
        }
    }

    let spec = ModelSpec { variables, regressions, covariances, statements, source_text };
    if let Some(cycle) = find_cycle(&spec) {
        return Err(ModelError::Cycle(cycle));
    }
    for c in &spec.covariances {
        for name in [&c.left, &c.right] {
            if spec.is_endogenous(name) {
                return Err(ModelError::CovarianceOnEndogenous(name.clone()));
            }
        }
    }
    Ok(spec)
}

/// Returns one directed cycle (first node repeated at the end) if any.
fn find_cycle(spec: &ModelSpec) -> Option<Vec<String>> {
    let index: HashMap<&str, usize> =
        spec.variables.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
    let p = spec.variables.len();
    let mut children = vec![Vec::new(); p];
    for r in &spec.regressions {
        let o = index[r.outcome.as_str()];
        for pr in &r.predictors {
            children[index[pr.as_str()]].push(o);
        }
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; p];
    let mut stack: Vec<usize> = Vec::new();

    fn dfs(
        v: usize,
        children: &[Vec<usize>],
        state: &mut [u8],
        stack: &mut Vec<usize>,
    ) -> Option<Vec<usize>> {
        state[v] = 1;
        stack.push(v);
        for &c in &children[v] {
            if state[c] == 1 {
                let start = stack.iter().position(|&s| s == c).unwrap();
                let mut cyc = stack[start..].to_vec();
                cyc.push(c);
                return Some(cyc);
            }
            if state[c] == 0 {
                if let Some(cyc) = dfs(c, children, state, stack) {
                    return Some(cyc);
                }
            }
        }
        stack.pop();
        state[v] = 2;
        None
    }

    for v in 0..p {
        if state[v] == 0 {
            if let Some(cyc) = dfs(v, &children, &mut state, &mut stack) {
                return Some(cyc.into_iter().map(|i| spec.variables[i].clone()).collect());
            }
        }
    }
    None
}

/// Role of each variable, in variable order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoleMap(pub Vec<(String, VariableRole)>);

impl RoleMap {
    pub fn get(&self, name: &str) -> Option<VariableRole> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, r)| *r)
    }

    pub fn count(&self, role: VariableRole) -> usize {
        self.0.iter().filter(|(_, r)| *r == role).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, VariableRole)> {
        self.0.iter()
    }
}

pub fn classify_roles(spec: &ModelSpec) -> RoleMap {
    let roles = spec
        .variables
        .iter()
        .map(|v| {
            let incoming = spec.is_endogenous(v);
            let outgoing = spec.regressions.iter().any(|r| r.predictors.contains(v));
            let role = match (incoming, outgoing) {
                (false, _) => VariableRole::Exogenous,
                (true, true) => VariableRole::Mediator,
                (true, false) => VariableRole::Endogenous,
            };
            (v.clone(), role)
        })
        .collect();
    RoleMap(roles)
}

pub fn validate_against_columns<S: AsRef<str>>(spec: &ModelSpec, columns: &[S]) -> Result<(), ModelError> {
    for v in &spec.variables {
        if !columns.iter().any(|c| c.as_ref() == v) {
            return Err(ModelError::MissingColumn(v.clone()));
        }
    }
    Ok(())
}

/// Canonical text: one statement per line, single spaces, no comments.
pub fn render_model(spec: &ModelSpec) -> String {
    let mut out = String::new();
    for stmt in &spec.statements {
        match stmt {
            Statement::Regression { outcome, predictors } => {
                out.push_str(outcome);
                out.push_str(" ~ ");
                out.push_str(&predictors.join(" + "));
            }
            Statement::Covariance { names } => {
                out.push_str(&names[0]);
                out.push_str(" ~~ ");
                out.push_str(&names[1..].join(" + "));
            }
        }
        out.push('\n');
    }
    out
}
