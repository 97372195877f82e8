//! Domain description language and its parser.
//!
//! Statements end with `.`; `%` starts a comment.
//!
//! ```text
//! sort attacker.                         instances supplied by the game
//! sort agent = ah_agent + ext_agent.     union of sorts
//! sort dir = {n, e, s, w}.               enumerated sort
//! static next_dir(dir, dir).             fact table
//! static next_to(x_val, y_val, x_val, y_val) builtin.
//! inertial in(agent, x_val, y_val).
//! defined in_range(agent, agent).
//! action move(ah_agent, x_val, y_val).
//! exogenous action agent_move(ext_agent, x_val, y_val).
//!
//! next_dir(n, e).                        static fact
//! next_to_region(R2, R1) if next_to_region(R1, R2).    static rule
//! agent_in(E, X, Y) if in(E, X, Y).      definition of a defined fluent
//! -in(A, X1, Y1) if in(A, X2, Y2), X1 != X2.           state constraint
//! false if in(A, X, Y), in(B, X, Y), A != B.           denial
//! move(R, X, Y) causes in(R, X, Y).                    causal law
//! impossible shoot(R, A) if agent_shot(A).             executability condition
//! candidates move(R, X, Y) if in(R, X1, Y1), next_to(X1, Y1, X, Y).
//! initial default spread_attack(X) if attacker(X).
//! goal shoot_target(T) if shot(T).
//! ```
//!
//! Body literals are atoms, `not atom` (or `-atom`, the same under the closed
//! world reading of every fluent), and `T1 != T2` / `T1 = T2`. Variables start
//! with an upper-case letter.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub const MAX_ARITY: usize = 6;

#[derive(Copy, Clone, Debug, Hash, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Val {
    Nil,
    Int(i32),
    Sym(u32),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Var(u16),
    Const(Val),
}

pub type PredId = u16;

/// A ground atom. Unused argument slots hold `Val::Nil`.
#[derive(Copy, Clone, Debug, Hash, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Atom {
    pub pred: PredId,
    pub args: [Val; MAX_ARITY],
}

impl Atom {
    pub fn new(pred: PredId, vals: &[Val]) -> Atom {
        let mut args = [Val::Nil; MAX_ARITY];
        args[..vals.len()].copy_from_slice(vals);
        Atom { pred, args }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pattern {
    pub pred: PredId,
    pub args: Vec<Term>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Neq,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BodyLit {
    Pos(Pattern),
    Neg(Pattern),
    Cmp(CmpOp, Term, Term),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredKind {
    /// Sort membership, `attacker(X)`.
    Sort,
    Static,
    Builtin,
    Inertial,
    Defined,
    Action,
    Exogenous,
    /// Zero-arity marker used by denials.
    False,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredDecl {
    pub name: String,
    pub kind: PredKind,
    /// Sort name per argument (the sort itself for sort predicates).
    pub sorts: Vec<String>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    StaticRule,
    Definition,
    /// State constraint with a (possibly negated) inertial head.
    Constraint,
    Denial,
    Causal,
    Impossible,
    Candidates,
    Default,
    Goal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub id: usize,
    pub kind: RuleKind,
    /// Head fluent (or fact) pattern; absent for denials, executability and candidates.
    pub head: Option<Pattern>,
    pub head_negated: bool,
    /// Action pattern for causal laws, executability conditions and candidates.
    pub action: Option<Pattern>,
    /// Goal name for goal rules; its parameters are `action`'s args.
    pub goal: Option<String>,
    pub body: Vec<BodyLit>,
    pub var_names: Vec<String>,
    pub text: String,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SortDef {
    /// Instances supplied when grounding (agents, grid coordinates, regions).
    Context,
    Union(Vec<String>),
    Enum(Vec<String>),
}

#[derive(Clone, Debug, Default)]
pub struct DomainDescription {
    pub sorts: Vec<(String, SortDef)>,
    pub preds: Vec<PredDecl>,
    pub pred_index: HashMap<String, PredId>,
    pub symbols: Vec<String>,
    pub symbol_index: HashMap<String, u32>,
    pub facts: Vec<Atom>,
    pub rules: Vec<Rule>,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
}

impl DomainDescription {
    pub fn parse(text: &str) -> Result<DomainDescription, ParseError> {
        Parser::new(text).run()
    }

    pub fn pred(&self, name: &str) -> Option<PredId> {
        self.pred_index.get(name).copied()
    }

    pub fn decl(&self, p: PredId) -> &PredDecl {
        &self.preds[p as usize]
    }

    pub fn intern(&mut self, s: &str) -> u32 {
        if let Some(&i) = self.symbol_index.get(s) {
            return i;
        }
        let i = self.symbols.len() as u32;
        self.symbols.push(s.to_string());
        self.symbol_index.insert(s.to_string(), i);
        i
    }

    pub fn sym(&self, s: &str) -> Option<Val> {
        self.symbol_index.get(s).map(|&i| Val::Sym(i))
    }

    pub fn val_name(&self, v: Val) -> String {
        match v {
            Val::Nil => "_".into(),
            Val::Int(i) => i.to_string(),
            Val::Sym(s) => self.symbols[s as usize].clone(),
        }
    }

    pub fn atom_text(&self, a: &Atom) -> String {
        let d = self.decl(a.pred);
        if d.sorts.is_empty() {
            return d.name.clone();
        }
        let args: Vec<String> = a.args[..d.sorts.len()].iter().map(|v| self.val_name(*v)).collect();
        format!("{}({})", d.name, args.join(","))
    }

    pub fn arity(&self, p: PredId) -> usize {
        self.preds[p as usize].sorts.len()
    }

    pub fn rules_of(&self, kind: RuleKind) -> impl Iterator<Item = &Rule> {
        self.rules.iter().filter(move |r| r.kind == kind)
    }

    pub fn sort_def(&self, name: &str) -> Option<&SortDef> {
        self.sorts.iter().find(|(n, _)| n == name).map(|(_, d)| d)
    }
}

// ---------------------------------------------------------------- tokenizer

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Var(String),
    Int(i32),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Dot,
    Minus,
    Plus,
    Eq,
    Neq,
}

fn tokenize(line_no: usize, s: &str, out: &mut Vec<(Tok, usize)>) -> Result<(), ParseError> {
    let b = s.as_bytes();
    let mut i = 0;
    let err = |msg: String| ParseError::Syntax { line: line_no, msg };
    while i < b.len() {
        let c = b[i] as char;
        if c == '%' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let t = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            ',' => Tok::Comma,
            '.' => Tok::Dot,
            '+' => Tok::Plus,
            '=' => Tok::Eq,
            '!' if b.get(i + 1) == Some(&b'=') => {
                i += 1;
                Tok::Neq
            }
            '-' if b.get(i + 1).is_some_and(|d| d.is_ascii_digit()) => {
                let start = i;
                i += 1;
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
                let n = s[start..i].parse().map_err(|_| err(format!("bad integer `{}`", &s[start..i])))?;
                out.push((Tok::Int(n), line_no));
                continue;
            }
            '-' => Tok::Minus,
            c if c.is_ascii_digit() => {
                let start = i;
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
                let n = s[start..i].parse().map_err(|_| err(format!("bad integer `{}`", &s[start..i])))?;
                out.push((Tok::Int(n), line_no));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                    i += 1;
                }
                let w = &s[start..i];
                let first = w.as_bytes()[0] as char;
                out.push((if first.is_ascii_uppercase() { Tok::Var(w.into()) } else { Tok::Ident(w.into()) }, line_no));
                continue;
            }
            c => return Err(err(format!("unexpected character `{c}`"))),
        };
        out.push((t, line_no));
        i += 1;
    }
    Ok(())
}

// ------------------------------------------------------------------- parser

/// Raw term before predicates are resolved.
#[derive(Clone, Debug)]
enum RTerm {
    Var(String),
    Sym(String),
    Int(i32),
}

#[derive(Clone, Debug)]
struct RAtom {
    name: String,
    args: Vec<RTerm>,
}

#[derive(Clone, Debug)]
enum RLit {
    Pos(RAtom),
    Neg(RAtom),
    Cmp(CmpOp, RTerm, RTerm),
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    lines: Vec<String>,
    d: DomainDescription,
    /// (statement text, line, kind marker) deferred until all declarations are read
    pending: Vec<Pending>,
}

struct Pending {
    line: usize,
    impossible: bool,
    text: String,
    stmt: Stmt,
}

enum Stmt {
    Fact(RAtom),
    Rule { head: Option<(bool, RAtom)>, body: Vec<RLit> },
    Causal { action: RAtom, neg: bool, head: RAtom, body: Vec<RLit> },
    Impossible { action: RAtom, body: Vec<RLit> },
    Candidates { action: RAtom, body: Vec<RLit> },
    Default { neg: bool, head: RAtom, body: Vec<RLit> },
    Goal { head: RAtom, body: Vec<RLit> },
}

impl Parser {
    fn new(text: &str) -> Self {
        Parser { toks: Vec::new(), pos: 0, lines: text.lines().map(str::to_string).collect(), d: DomainDescription::default(), pending: Vec::new() }
    }

    fn line(&self) -> usize {
        self.toks.get(self.pos).or(self.toks.last()).map_or(0, |t| t.1)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax { line: self.line(), msg: msg.into() })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.0.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, t: Tok) -> Result<(), ParseError> {
        match self.next() {
            Some(ref x) if *x == t => Ok(()),
            other => {
                self.pos -= 1;
                self.err(format!("expected {t:?}, found {other:?}"))
            }
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s),
            other => {
                self.pos -= 1;
                self.err(format!("expected a name, found {other:?}"))
            }
        }
    }

    fn peek_ident(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == w)
    }

    fn run(mut self) -> Result<DomainDescription, ParseError> {
        let mut toks = Vec::new();
        for (n, l) in self.lines.iter().enumerate() {
            tokenize(n + 1, l, &mut toks)?;
        }
        self.toks = toks;
        self.declare("false", PredKind::False, vec![]);
        while self.pos < self.toks.len() {
            let start = self.pos;
            let before = self.pending.len();
            self.statement()?;
            if self.pending.len() > before {
                let text = render(&self.toks[start..self.pos]);
                if let Some(p) = self.pending.last_mut() {
                    p.text = text;
                }
            }
        }
        // sort predicates for every sort
        let sorts: Vec<String> = self.d.sorts.iter().map(|(n, _)| n.clone()).collect();
        for s in sorts {
            if !self.d.pred_index.contains_key(&s) {
                self.declare(&s, PredKind::Sort, vec![s.clone()]);
            }
        }
        for (n, (_, def)) in self.d.sorts.clone().iter().enumerate() {
            if let SortDef::Union(parts) = def {
                for p in parts {
                    if self.d.sort_def(p).is_none() {
                        return Err(ParseError::Syntax { line: 0, msg: format!("sort {} uses undeclared sort `{p}`", self.d.sorts[n].0) });
                    }
                }
            }
        }
        let pending = std::mem::take(&mut self.pending);
        for p in pending {
            self.resolve(p)?;
        }
        Ok(self.d)
    }

    fn declare(&mut self, name: &str, kind: PredKind, sorts: Vec<String>) -> PredId {
        let id = self.d.preds.len() as PredId;
        self.d.preds.push(PredDecl { name: name.into(), kind, sorts });
        self.d.pred_index.insert(name.into(), id);
        id
    }

    fn statement(&mut self) -> Result<(), ParseError> {
        let first = self.peek().cloned();
        match first {
            Some(Tok::Ident(w)) if w == "sort" => {
                self.pos += 1;
                let name = self.ident()?;
                let def = if self.peek() == Some(&Tok::Eq) {
                    self.pos += 1;
                    if self.peek() == Some(&Tok::LBrace) {
                        self.pos += 1;
                        let mut items = vec![self.ident()?];
                        while self.peek() == Some(&Tok::Comma) {
                            self.pos += 1;
                            items.push(self.ident()?);
                        }
                        self.expect(Tok::RBrace)?;
                        for it in &items {
                            self.d.intern(it);
                        }
                        SortDef::Enum(items)
                    } else {
                        let mut parts = vec![self.ident()?];
                        while self.peek() == Some(&Tok::Plus) {
                            self.pos += 1;
                            parts.push(self.ident()?);
                        }
                        SortDef::Union(parts)
                    }
                } else {
                    SortDef::Context
                };
                self.expect(Tok::Dot)?;
                if self.d.sort_def(&name).is_some() {
                    return self.err(format!("sort `{name}` declared twice"));
                }
                self.d.sorts.push((name, def));
                Ok(())
            }
            Some(Tok::Ident(w)) if matches!(w.as_str(), "static" | "inertial" | "defined" | "action" | "exogenous") => {
                self.pos += 1;
                let mut kind = match w.as_str() {
                    "static" => PredKind::Static,
                    "inertial" => PredKind::Inertial,
                    "defined" => PredKind::Defined,
                    "action" => PredKind::Action,
                    _ => {
                        if !self.peek_ident("action") {
                            return self.err("expected `action` after `exogenous`");
                        }
                        self.pos += 1;
                        PredKind::Exogenous
                    }
                };
                let name = self.ident()?;
                let mut sorts = Vec::new();
                if self.peek() == Some(&Tok::LParen) {
                    self.pos += 1;
                    sorts.push(self.ident()?);
                    while self.peek() == Some(&Tok::Comma) {
                        self.pos += 1;
                        sorts.push(self.ident()?);
                    }
                    self.expect(Tok::RParen)?;
                }
                if self.peek_ident("builtin") {
                    self.pos += 1;
                    if kind != PredKind::Static {
                        return self.err("only statics can be builtin");
                    }
                    kind = PredKind::Builtin;
                }
                self.expect(Tok::Dot)?;
                if sorts.len() > MAX_ARITY {
                    return self.err(format!("`{name}` has more than {MAX_ARITY} arguments"));
                }
                for s in &sorts {
                    if self.d.sort_def(s).is_none() {
                        return self.err(format!("`{name}` uses undeclared sort `{s}`"));
                    }
                }
                if self.d.pred_index.contains_key(&name) {
                    return self.err(format!("`{name}` declared twice"));
                }
                self.declare(&name, kind, sorts);
                Ok(())
            }
            _ => self.axiom(),
        }
    }

    fn axiom(&mut self) -> Result<(), ParseError> {
        let line = self.line();
        let stmt = if self.peek_ident("impossible") {
            self.pos += 1;
            let action = self.atom()?;
            let body = self.opt_body()?;
            Stmt::Impossible { action, body }
        } else if self.peek_ident("candidates") {
            self.pos += 1;
            let action = self.atom()?;
            let body = self.opt_body()?;
            Stmt::Candidates { action, body }
        } else if self.peek_ident("initial") {
            self.pos += 1;
            if !self.peek_ident("default") {
                return self.err("expected `default` after `initial`");
            }
            self.pos += 1;
            let neg = self.opt_minus();
            let head = self.atom()?;
            let body = self.opt_body()?;
            Stmt::Default { neg, head, body }
        } else if self.peek_ident("goal") {
            self.pos += 1;
            let head = self.atom()?;
            let body = self.opt_body()?;
            Stmt::Goal { head, body }
        } else if self.peek_ident("false") {
            self.pos += 1;
            let body = self.opt_body()?;
            if body.is_empty() {
                return self.err("denial needs a body");
            }
            Stmt::Rule { head: None, body }
        } else {
            let neg = self.opt_minus();
            let head = self.atom()?;
            if self.peek_ident("causes") {
                if neg {
                    return self.err("an action cannot be negated");
                }
                self.pos += 1;
                let eneg = self.opt_minus();
                let eff = self.atom()?;
                let body = self.opt_body()?;
                Stmt::Causal { action: head, neg: eneg, head: eff, body }
            } else {
                let body = self.opt_body()?;
                if body.is_empty() && !neg {
                    Stmt::Fact(head)
                } else {
                    Stmt::Rule { head: Some((neg, head)), body }
                }
            }
        };
        let impossible = matches!(stmt, Stmt::Impossible { .. });
        self.pending.push(Pending { line, impossible, text: String::new(), stmt });
        Ok(())
    }

    fn opt_minus(&mut self) -> bool {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn opt_body(&mut self) -> Result<Vec<RLit>, ParseError> {
        let mut body = Vec::new();
        if self.peek_ident("if") {
            self.pos += 1;
            body.push(self.literal()?);
            while self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
                body.push(self.literal()?);
            }
        }
        self.expect(Tok::Dot)?;
        Ok(body)
    }

    fn literal(&mut self) -> Result<RLit, ParseError> {
        if self.peek_ident("not") {
            self.pos += 1;
            return Ok(RLit::Neg(self.atom()?));
        }
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            return Ok(RLit::Neg(self.atom()?));
        }
        // comparison or atom
        let save = self.pos;
        if let Ok(t) = self.term() {
            match self.peek() {
                Some(Tok::Eq) | Some(Tok::Neq) => {
                    let op = if self.next() == Some(Tok::Eq) { CmpOp::Eq } else { CmpOp::Neq };
                    let u = self.term()?;
                    return Ok(RLit::Cmp(op, t, u));
                }
                _ => {}
            }
        }
        self.pos = save;
        Ok(RLit::Pos(self.atom()?))
    }

    fn term(&mut self) -> Result<RTerm, ParseError> {
        match self.next() {
            Some(Tok::Var(v)) => Ok(RTerm::Var(v)),
            Some(Tok::Ident(s)) => Ok(RTerm::Sym(s)),
            Some(Tok::Int(i)) => Ok(RTerm::Int(i)),
            other => {
                self.pos -= 1;
                self.err(format!("expected a term, found {other:?}"))
            }
        }
    }

    fn atom(&mut self) -> Result<RAtom, ParseError> {
        let name = self.ident()?;
        let mut args = Vec::new();
        if self.peek() == Some(&Tok::LParen) {
            self.pos += 1;
            args.push(self.term()?);
            while self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
                args.push(self.term()?);
            }
            self.expect(Tok::RParen)?;
        }
        Ok(RAtom { name, args })
    }

    // -------------------------------------------------------------- resolve

    fn resolve(&mut self, p: Pending) -> Result<(), ParseError> {
        let line = p.line;
        let fail = |msg: String| ParseError::Syntax { line, msg };
        let mut vars: Vec<String> = Vec::new();
        let id = self.d.rules.len();
        let rule = match p.stmt {
            Stmt::Fact(a) => {
                let pat = self.pattern(&a, &mut vars, line)?;
                let k = self.d.decl(pat.pred).kind;
                if k != PredKind::Static {
                    return Err(fail(format!("fact `{}` is not a declared static", a.name)));
                }
                if !vars.is_empty() {
                    return Err(fail("facts must be ground".into()));
                }
                let vals: Vec<Val> = pat.args.iter().map(|t| if let Term::Const(v) = t { *v } else { Val::Nil }).collect();
                self.d.facts.push(Atom::new(pat.pred, &vals));
                return Ok(());
            }
            Stmt::Rule { head, body } => {
                let (kind, head, neg) = match head {
                    None => (RuleKind::Denial, None, false),
                    Some((neg, h)) => {
                        let pat = self.pattern(&h, &mut vars, line)?;
                        let kind = match self.d.decl(pat.pred).kind {
                            PredKind::Static => RuleKind::StaticRule,
                            PredKind::Defined => RuleKind::Definition,
                            PredKind::Inertial => RuleKind::Constraint,
                            k => return Err(fail(format!("`{}` ({k:?}) cannot head a rule", h.name))),
                        };
                        if neg && kind != RuleKind::Constraint {
                            return Err(fail("only inertial fluents may have negated heads".into()));
                        }
                        (kind, Some(pat), neg)
                    }
                };
                let body = self.body(&body, &mut vars, line)?;
                Rule { id, kind, head, head_negated: neg, action: None, goal: None, body, var_names: vars, text: p.text, line }
            }
            Stmt::Causal { action, neg, head, body } => {
                let act = self.action_pattern(&action, &mut vars, line)?;
                let h = self.pattern(&head, &mut vars, line)?;
                if self.d.decl(h.pred).kind != PredKind::Inertial {
                    return Err(fail(format!("causal law head `{}` must be an inertial fluent", head.name)));
                }
                let body = self.body(&body, &mut vars, line)?;
                Rule { id, kind: RuleKind::Causal, head: Some(h), head_negated: neg, action: Some(act), goal: None, body, var_names: vars, text: p.text, line }
            }
            Stmt::Impossible { action, body } | Stmt::Candidates { action, body } => {
                let kind = if p.impossible { RuleKind::Impossible } else { RuleKind::Candidates };
                let act = self.action_pattern(&action, &mut vars, line)?;
                let body = self.body(&body, &mut vars, line)?;
                Rule { id, kind, head: None, head_negated: false, action: Some(act), goal: None, body, var_names: vars, text: p.text, line }
            }
            Stmt::Default { neg, head, body } => {
                let h = self.pattern(&head, &mut vars, line)?;
                if self.d.decl(h.pred).kind != PredKind::Inertial {
                    return Err(fail(format!("default `{}` must conclude an inertial fluent", head.name)));
                }
                let body = self.body(&body, &mut vars, line)?;
                Rule { id, kind: RuleKind::Default, head: Some(h), head_negated: neg, action: None, goal: None, body, var_names: vars, text: p.text, line }
            }
            Stmt::Goal { head, body } => {
                let args = head
                    .args
                    .iter()
                    .map(|t| self.term_of(t, &mut vars, line))
                    .collect::<Result<Vec<_>, _>>()?;
                let body = self.body(&body, &mut vars, line)?;
                let pat = Pattern { pred: 0, args };
                Rule { id, kind: RuleKind::Goal, head: None, head_negated: false, action: Some(pat), goal: Some(head.name), body, var_names: vars, text: p.text, line }
            }
        };
        let rule = order_body(rule).map_err(fail)?;
        self.d.rules.push(rule);
        Ok(())
    }

    fn action_pattern(&mut self, a: &RAtom, vars: &mut Vec<String>, line: usize) -> Result<Pattern, ParseError> {
        let p = self.pattern(a, vars, line)?;
        match self.d.decl(p.pred).kind {
            PredKind::Action | PredKind::Exogenous => Ok(p),
            _ => Err(ParseError::Syntax { line, msg: format!("`{}` is not an action", a.name) }),
        }
    }

    fn term_of(&mut self, t: &RTerm, vars: &mut Vec<String>, _line: usize) -> Result<Term, ParseError> {
        Ok(match t {
            RTerm::Var(v) => {
                let i = vars.iter().position(|x| x == v).unwrap_or_else(|| {
                    vars.push(v.clone());
                    vars.len() - 1
                });
                Term::Var(i as u16)
            }
            RTerm::Int(i) => Term::Const(Val::Int(*i)),
            RTerm::Sym(s) => Term::Const(Val::Sym(self.d.intern(s))),
        })
    }

    fn pattern(&mut self, a: &RAtom, vars: &mut Vec<String>, line: usize) -> Result<Pattern, ParseError> {
        let pred = self
            .d
            .pred(&a.name)
            .ok_or_else(|| ParseError::Syntax { line, msg: format!("undeclared predicate `{}`", a.name) })?;
        let arity = self.d.arity(pred);
        if arity != a.args.len() {
            return Err(ParseError::Syntax {
                line,
                msg: format!("`{}` takes {arity} arguments, got {}", a.name, a.args.len()),
            });
        }
        let args = a.args.iter().map(|t| self.term_of(t, vars, line)).collect::<Result<Vec<_>, _>>()?;
        Ok(Pattern { pred, args })
    }

    fn body(&mut self, lits: &[RLit], vars: &mut Vec<String>, line: usize) -> Result<Vec<BodyLit>, ParseError> {
        lits.iter()
            .map(|l| {
                Ok(match l {
                    RLit::Pos(a) => BodyLit::Pos(self.pattern(a, vars, line)?),
                    RLit::Neg(a) => BodyLit::Neg(self.pattern(a, vars, line)?),
                    RLit::Cmp(op, x, y) => BodyLit::Cmp(*op, self.term_of(x, vars, line)?, self.term_of(y, vars, line)?),
                })
            })
            .collect()
    }
}

/// Canonical source text of a statement.
fn render(toks: &[(Tok, usize)]) -> String {
    let mut out = String::new();
    for (i, (t, _)) in toks.iter().enumerate() {
        let prev = if i > 0 { Some(&toks[i - 1].0) } else { None };
        let glue = matches!(t, Tok::LParen | Tok::RParen | Tok::Comma | Tok::Dot | Tok::RBrace)
            || matches!(prev, Some(Tok::LParen) | Some(Tok::Minus) | Some(Tok::LBrace))
            || prev.is_none();
        if !glue {
            out.push(' ');
        }
        match t {
            Tok::Ident(s) | Tok::Var(s) => out.push_str(s),
            Tok::Int(n) => out.push_str(&n.to_string()),
            Tok::LParen => out.push('('),
            Tok::RParen => out.push(')'),
            Tok::LBrace => out.push('{'),
            Tok::RBrace => out.push('}'),
            Tok::Comma => out.push(','),
            Tok::Dot => out.push('.'),
            Tok::Minus => out.push('-'),
            Tok::Plus => out.push('+'),
            Tok::Eq => out.push('='),
            Tok::Neq => out.push_str("!="),
        }
    }
    out
}

fn pattern_vars(p: &Pattern) -> impl Iterator<Item = u16> + '_ {
    p.args.iter().filter_map(|t| if let Term::Var(v) = t { Some(*v) } else { None })
}

/// Move negated literals and comparisons after the positive literals binding
/// their variables; check every variable is range restricted.
fn order_body(mut r: Rule) -> Result<Rule, String> {
    let mut bound = vec![false; r.var_names.len()];
    // variables bound on entry: by the action for causal/impossible/candidates
    // (the action is matched first), by the head for constraints and goals
    let head_in = matches!(r.kind, RuleKind::Constraint | RuleKind::Goal)
        || (r.kind == RuleKind::Definition && false);
    if let Some(a) = &r.action {
        for v in pattern_vars(a) {
            if r.kind != RuleKind::Candidates && r.kind != RuleKind::Goal {
                bound[v as usize] = true;
            }
        }
    }
    if head_in {
        if let Some(h) = &r.head {
            for v in pattern_vars(h) {
                bound[v as usize] = true;
            }
        }
        if r.kind == RuleKind::Goal {
            if let Some(a) = &r.action {
                for v in pattern_vars(a) {
                    bound[v as usize] = true;
                }
            }
        }
    }
    let mut pending: Vec<BodyLit> = std::mem::take(&mut r.body);
    let mut out = Vec::with_capacity(pending.len());
    let lit_vars = |l: &BodyLit| -> Vec<u16> {
        match l {
            BodyLit::Pos(p) | BodyLit::Neg(p) => pattern_vars(p).collect(),
            BodyLit::Cmp(_, a, b) => [a, b].iter().filter_map(|t| if let Term::Var(v) = t { Some(*v) } else { None }).collect(),
        }
    };
    while !pending.is_empty() {
        // first literal that is ready: positive literals always, others when all vars bound
        let idx = pending
            .iter()
            .position(|l| match l {
                BodyLit::Pos(_) => false,
                _ => lit_vars(l).iter().all(|&v| bound[v as usize]),
            })
            .or_else(|| pending.iter().position(|l| matches!(l, BodyLit::Pos(_))));
        let Some(i) = idx else {
            // only negations / comparisons with free variables remain
            let l = &pending[0];
            if let BodyLit::Cmp(..) = l {
                let free: Vec<String> = lit_vars(l).iter().filter(|&&v| !bound[v as usize]).map(|&v| r.var_names[v as usize].clone()).collect();
                return Err(format!("variable {} in a comparison is not bound by a positive literal", free.join(", ")));
            }
            // a negated literal with free variables reads as "no instance exists"
            out.push(pending.remove(0));
            continue;
        };
        let l = pending.remove(i);
        for v in lit_vars(&l) {
            if matches!(l, BodyLit::Pos(_)) {
                bound[v as usize] = true;
            }
        }
        out.push(l);
    }
    r.body = out;
    // head variables of definitions, static rules and defaults must be bound by the body
    if matches!(r.kind, RuleKind::Definition | RuleKind::StaticRule | RuleKind::Default | RuleKind::Causal) {
        if let Some(h) = &r.head {
            for v in pattern_vars(h) {
                if !bound[v as usize] {
                    return Err(format!("head variable {} is not range restricted", r.var_names[v as usize]));
                }
            }
        }
    }
    Ok(r)
}

impl fmt::Display for Val {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Val::Nil => f.write_str("_"),
            Val::Int(i) => write!(f, "{i}"),
            Val::Sym(s) => write!(f, "#{s}"),
        }
    }
}
