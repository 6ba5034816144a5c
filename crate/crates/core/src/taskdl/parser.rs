//! Statement and expression parser.
//!
//! Parsing runs in two passes: a syntactic pass that turns each line into a
//! raw declaration (keeping source positions), then a semantic pass that
//! resolves references and reports every problem it finds with the position
//! of the offending token.

use std::collections::BTreeMap;

use super::lexer::{lex_line, Tok, Token};
use super::{Diagnostic, SimDefaults, TaskDocument};
use crate::algebra::{
    ChannelKind, ChannelOverride, Communication, Dist, DynamicsAddition, EnergyBudget, Goal,
    PerturbMode, Perturbation, Polarity, Problem, ProblemNode, Task, VariantSpec, Window,
};
use crate::expr::{BinaryOp, ChannelId, CmpOp, Cond, Expr, Noise, NoiseDist, UnaryOp};
use crate::interval::Interval;
use crate::world::{
    AgentBody, Assignment, Channel, InvariantRelation, PartialState, TransitionRule, Variable, World,
};

type PResult<T> = Result<T, Diagnostic>;

pub(crate) const RESERVED: [&str; 11] = [
    "delta", "inf", "true", "false", "sqrt", "abs", "min", "max", "if", "gauss", "uniform",
];

/// A variable reference with its source position.
#[derive(Debug, Clone)]
struct Ref {
    name: String,
    line: usize,
    col: usize,
}

struct Cursor<'a> {
    toks: &'a [Token],
    pos: usize,
    line: usize,
    refs: Vec<Ref>,
    noise_count: u32,
}

impl<'a> Cursor<'a> {
    fn new(toks: &'a [Token], line: usize) -> Self {
        Cursor {
            toks,
            pos: 0,
            line,
            refs: Vec::new(),
            noise_count: 0,
        }
    }

    fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, ahead: usize) -> Option<&'a Tok> {
        self.toks.get(self.pos + ahead).map(|t| &t.tok)
    }

    fn col(&self) -> usize {
        match self.toks.get(self.pos) {
            Some(t) => t.col,
            None => self.toks.last().map_or(1, |t| t.col + 1),
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(Diagnostic::new(self.line, self.col(), msg))
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn done(&self) -> PResult<()> {
        if self.at_end() {
            Ok(())
        } else {
            self.err(format!("unexpected {}", describe(self.peek())))
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(x)) if *x == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(format!("expected `{s}`, found {}", describe(self.peek())))
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(x)) if x == kw)
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.is_keyword(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<()> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            self.err(format!("expected `{kw}`, found {}", describe(self.peek())))
        }
    }

    fn ident(&mut self) -> PResult<(String, usize)> {
        let col = self.col();
        match self.peek() {
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok((s.clone(), col))
            }
            other => self.err(format!("expected a name, found {}", describe(other))),
        }
    }

    /// A name that must not be a reserved word.
    fn name(&mut self) -> PResult<(String, usize)> {
        let (n, col) = self.ident()?;
        if RESERVED.contains(&n.as_str()) {
            return Err(Diagnostic::new(self.line, col, format!("`{n}` is a reserved word")));
        }
        Ok((n, col))
    }

    fn var_ref(&mut self) -> PResult<String> {
        let (n, col) = self.name()?;
        self.refs.push(Ref {
            name: n.clone(),
            line: self.line,
            col,
        });
        Ok(n)
    }

    fn string(&mut self) -> PResult<String> {
        match self.peek() {
            Some(Tok::Str(s)) => {
                self.pos += 1;
                Ok(s.clone())
            }
            other => self.err(format!("expected a string, found {}", describe(other))),
        }
    }

    fn number(&mut self) -> PResult<f64> {
        let neg = self.eat_sym("-");
        match self.peek() {
            Some(Tok::Num(x)) => {
                self.pos += 1;
                Ok(if neg { -x } else { *x })
            }
            other => self.err(format!("expected a number, found {}", describe(other))),
        }
    }

    /// A number, `inf` or `-inf`.
    fn bound(&mut self) -> PResult<f64> {
        let neg = self.is_sym("-");
        if neg && matches!(self.peek_at(1), Some(Tok::Ident(s)) if s == "inf") {
            self.pos += 2;
            return Ok(f64::NEG_INFINITY);
        }
        if self.eat_keyword("inf") {
            return Ok(f64::INFINITY);
        }
        self.number()
    }

    fn integer(&mut self) -> PResult<u64> {
        let col = self.col();
        let x = self.number()?;
        if x < 0.0 || x.fract() != 0.0 || x > 9.007_199_254_740_992e15 {
            return Err(Diagnostic::new(self.line, col, "expected a non-negative integer"));
        }
        Ok(x as u64)
    }

    fn interval(&mut self) -> PResult<Interval> {
        let col = self.col();
        let lo_open = if self.eat_sym("(") {
            true
        } else if self.eat_sym("[") {
            false
        } else {
            return self.err("expected `[` or `(` to open an interval");
        };
        let lo = self.bound()?;
        self.expect_sym(",")?;
        let hi = self.bound()?;
        let hi_open = if self.eat_sym(")") {
            true
        } else if self.eat_sym("]") {
            false
        } else {
            return self.err("expected `]` or `)` to close an interval");
        };
        if lo > hi {
            return Err(Diagnostic::new(self.line, col, "interval bounds are reversed"));
        }
        Ok(Interval::new(lo, hi, lo_open, hi_open))
    }

    // expressions

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat_sym("+") {
                BinaryOp::Add
            } else if self.eat_sym("-") {
                BinaryOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat_sym("*") {
                BinaryOp::Mul
            } else if self.eat_sym("/") {
                BinaryOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat_sym("-") {
            return Ok(Expr::neg(self.unary()?));
        }
        self.power()
    }

    fn power(&mut self) -> PResult<Expr> {
        let base = self.atom()?;
        if self.eat_sym("^") {
            let exp = self.unary()?;
            return Ok(Expr::binary(BinaryOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn args(&mut self, n: usize) -> PResult<Vec<Expr>> {
        self.expect_sym("(")?;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            if i > 0 {
                self.expect_sym(",")?;
            }
            out.push(self.expr()?);
        }
        self.expect_sym(")")?;
        Ok(out)
    }

    fn noise(&mut self, dist: NoiseDist) -> Expr {
        let channel = ChannelId {
            scope: String::new(),
            index: self.noise_count,
        };
        self.noise_count += 1;
        Expr::Noise(Noise::new(dist, channel))
    }

    fn atom(&mut self) -> PResult<Expr> {
        let col = self.col();
        match self.peek() {
            Some(Tok::Num(x)) => {
                self.pos += 1;
                Ok(Expr::Lit(*x))
            }
            Some(Tok::Sym("(")) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                let called = matches!(self.peek_at(1), Some(Tok::Sym("(")));
                match (name.as_str(), called) {
                    ("delta", _) => {
                        self.pos += 1;
                        Ok(Expr::Delta)
                    }
                    ("sqrt" | "abs", true) => {
                        let op = if name == "sqrt" { UnaryOp::Sqrt } else { UnaryOp::Abs };
                        self.pos += 1;
                        let mut a = self.args(1)?;
                        Ok(Expr::Unary(op, Box::new(a.remove(0))))
                    }
                    ("min" | "max", true) => {
                        let op = if name == "min" { BinaryOp::Min } else { BinaryOp::Max };
                        self.pos += 1;
                        let mut a = self.args(2)?;
                        let b = a.pop().unwrap();
                        Ok(Expr::binary(op, a.pop().unwrap(), b))
                    }
                    ("if", true) => {
                        self.pos += 2;
                        let c = self.cond()?;
                        self.expect_sym(",")?;
                        let a = self.expr()?;
                        self.expect_sym(",")?;
                        let b = self.expr()?;
                        self.expect_sym(")")?;
                        Ok(Expr::If(Box::new(c), Box::new(a), Box::new(b)))
                    }
                    ("gauss", true) => {
                        self.pos += 2;
                        let scol = self.col();
                        let sigma = self.number()?;
                        self.expect_sym(")")?;
                        if sigma < 0.0 {
                            return Err(Diagnostic::new(self.line, scol, "noise sigma must be >= 0"));
                        }
                        Ok(self.noise(NoiseDist::Gauss { sigma }))
                    }
                    ("uniform", true) => {
                        self.pos += 2;
                        let lcol = self.col();
                        let lo = self.number()?;
                        self.expect_sym(",")?;
                        let hi = self.number()?;
                        self.expect_sym(")")?;
                        if lo > hi {
                            return Err(Diagnostic::new(self.line, lcol, "uniform bounds are reversed"));
                        }
                        Ok(self.noise(NoiseDist::Uniform { lo, hi }))
                    }
                    _ => Ok(Expr::var(self.var_ref()?)),
                }
            }
            other => Err(Diagnostic::new(
                self.line,
                col,
                format!("expected an expression, found {}", describe(other)),
            )),
        }
    }

    fn cond(&mut self) -> PResult<Cond> {
        let mut lhs = self.conj()?;
        while self.eat_sym("||") {
            let rhs = self.conj()?;
            lhs = Cond::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn conj(&mut self) -> PResult<Cond> {
        let mut lhs = self.cnot()?;
        while self.eat_sym("&&") {
            let rhs = self.cnot()?;
            lhs = Cond::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn cnot(&mut self) -> PResult<Cond> {
        if self.eat_sym("!") {
            return Ok(Cond::Not(Box::new(self.cnot()?)));
        }
        self.cprim()
    }

    fn cprim(&mut self) -> PResult<Cond> {
        if self.eat_keyword("true") {
            return Ok(Cond::Const(true));
        }
        if self.eat_keyword("false") {
            return Ok(Cond::Const(false));
        }
        if self.is_sym("(") {
            let (pos, nrefs, nnoise) = (self.pos, self.refs.len(), self.noise_count);
            self.pos += 1;
            if let Ok(c) = self.cond() {
                if self.eat_sym(")") && !self.continues_expression() {
                    return Ok(c);
                }
            }
            self.pos = pos;
            self.refs.truncate(nrefs);
            self.noise_count = nnoise;
        }
        let lhs = self.expr()?;
        let op = match self.peek() {
            Some(Tok::Sym("<")) => CmpOp::Lt,
            Some(Tok::Sym("<=")) => CmpOp::Le,
            Some(Tok::Sym(">")) => CmpOp::Gt,
            Some(Tok::Sym(">=")) => CmpOp::Ge,
            Some(Tok::Sym("==")) => CmpOp::Eq,
            Some(Tok::Sym("!=")) => CmpOp::Ne,
            other => return self.err(format!("expected a comparison, found {}", describe(other))),
        };
        self.pos += 1;
        let rhs = self.expr()?;
        Ok(Cond::Cmp(op, Box::new(lhs), Box::new(rhs)))
    }

    fn continues_expression(&self) -> bool {
        matches!(
            self.peek(),
            Some(Tok::Sym("+" | "-" | "*" | "/" | "^" | "<" | "<=" | ">" | ">=" | "==" | "!="))
        )
    }

    /// `x > 1, y in [0, 2), z ~ 3 +- 0.1`
    fn partial_state(&mut self, stop: &[&str]) -> PResult<PartialState> {
        let mut ps = PartialState::new();
        if self.at_end() || stop.iter().any(|k| self.is_keyword(k)) {
            return Ok(ps);
        }
        loop {
            let col = self.col();
            let name = self.var_ref()?;
            let iv = if self.eat_sym(">") {
                Interval::above(self.bound()?)
            } else if self.eat_sym(">=") {
                Interval::at_least(self.bound()?)
            } else if self.eat_sym("<") {
                Interval::below(self.bound()?)
            } else if self.eat_sym("<=") {
                Interval::at_most(self.bound()?)
            } else if self.eat_keyword("in") {
                self.interval()?
            } else if self.eat_sym("~") {
                let center = self.number()?;
                self.expect_sym("+-")?;
                let tcol = self.col();
                let tol = self.number()?;
                if tol <= 0.0 {
                    return Err(Diagnostic::new(self.line, tcol, "tolerance must be positive"));
                }
                Interval::around(center, tol)
            } else {
                return self.err("expected `<`, `<=`, `>`, `>=`, `in` or `~`");
            };
            ps.insert(name, iv)
                .map_err(|e| Diagnostic::new(self.line, col, e.to_string()))?;
            if !self.eat_sym(",") {
                return Ok(ps);
            }
        }
    }

    fn dist(&mut self) -> PResult<Dist> {
        if matches!(self.peek(), Some(Tok::Num(_))) || self.is_sym("-") {
            return Ok(Dist::Const {
                value: self.number()?,
            });
        }
        let (kind, col) = self.ident()?;
        self.expect_sym("(")?;
        let d = match kind.as_str() {
            "const" => Dist::Const {
                value: self.number()?,
            },
            "uniform" => {
                let lo = self.number()?;
                self.expect_sym(",")?;
                Dist::Uniform {
                    lo,
                    hi: self.number()?,
                }
            }
            "gauss" => {
                let mean = self.number()?;
                self.expect_sym(",")?;
                Dist::Gauss {
                    mean,
                    sigma: self.number()?,
                }
            }
            _ => {
                return Err(Diagnostic::new(
                    self.line,
                    col,
                    format!("unknown distribution `{kind}`; use const, uniform or gauss"),
                ))
            }
        };
        self.expect_sym(")")?;
        match d {
            Dist::Uniform { lo, hi } if lo > hi => {
                Err(Diagnostic::new(self.line, col, "uniform bounds are reversed"))
            }
            Dist::Gauss { sigma, .. } if sigma < 0.0 => {
                Err(Diagnostic::new(self.line, col, "gauss sigma must be >= 0"))
            }
            d => Ok(d),
        }
    }

    /// `noise X res Y lat Z` in any order.
    fn channel_options(&mut self) -> PResult<(Option<f64>, Option<f64>, Option<u32>)> {
        let (mut noise, mut res, mut lat) = (None, None, None);
        while !self.at_end() {
            let col = self.col();
            if self.eat_keyword("noise") {
                noise = Some(self.number()?);
            } else if self.eat_keyword("res") {
                res = Some(self.number()?);
            } else if self.eat_keyword("lat") {
                lat = Some(u32::try_from(self.integer()?).map_err(|_| {
                    Diagnostic::new(self.line, col, "latency is too large")
                })?);
            } else {
                return self.err(format!(
                    "expected `noise`, `res` or `lat`, found {}",
                    describe(self.peek())
                ));
            }
            if noise.is_some_and(|x| x < 0.0) || res.is_some_and(|x| x < 0.0) {
                return Err(Diagnostic::new(self.line, col, "channel parameters must be >= 0"));
            }
        }
        Ok((noise, res, lat))
    }
}

fn describe(tok: Option<&Tok>) -> String {
    match tok {
        None => "end of line".into(),
        Some(Tok::Ident(s)) => format!("`{s}`"),
        Some(Tok::Num(x)) => format!("number {x}"),
        Some(Tok::Str(s)) => format!("string {s:?}"),
        Some(Tok::Sym(s)) => format!("`{s}`"),
    }
}

struct RawVar {
    var: Variable,
    init: f64,
    line: usize,
    col: usize,
    init_col: usize,
}

struct RawRule {
    target: String,
    expr: Expr,
    refs: Vec<Ref>,
    line: usize,
    col: usize,
}

struct RawRel {
    cond: Cond,
    refs: Vec<Ref>,
    line: usize,
}

struct RawBody {
    name: String,
    line: usize,
    sensors: Vec<(Channel, Ref)>,
    actuators: Vec<(Channel, Ref)>,
}

#[derive(Clone, Copy, PartialEq)]
enum FrameKind {
    Root,
    Atom,
    And,
    Or,
    Not,
    Then,
}

struct Frame {
    kind: FrameKind,
    line: usize,
    initial: PartialState,
    goals: Vec<Goal>,
    children: Vec<Problem>,
}

impl Frame {
    fn new(kind: FrameKind, line: usize) -> Self {
        Frame {
            kind,
            line,
            initial: PartialState::new(),
            goals: Vec::new(),
            children: Vec::new(),
        }
    }

    fn close(self) -> PResult<Problem> {
        let here = |msg: &str| Diagnostic::new(self.line, 1, msg);
        let fold = |mut children: Vec<Problem>, make: fn(Box<Problem>, Box<Problem>) -> ProblemNode| {
            let mut acc = children.pop().expect("checked length");
            while let Some(prev) = children.pop() {
                acc = Problem {
                    initial: PartialState::new(),
                    node: make(Box::new(prev), Box::new(acc)),
                };
            }
            acc
        };
        let node = match self.kind {
            FrameKind::Root | FrameKind::Atom if self.children.is_empty() => ProblemNode::Atomic(self.goals),
            FrameKind::Root => {
                if !self.goals.is_empty() || self.children.len() != 1 {
                    return Err(here("a task holds either goal lines or a single problem block"));
                }
                if !self.initial.is_empty() {
                    return Err(here("put `require` lines inside the problem block"));
                }
                return Ok(self.children.into_iter().next().unwrap());
            }
            FrameKind::Atom => return Err(here("`atom` blocks hold only require, goal and fail lines")),
            FrameKind::Not => {
                if self.children.len() != 1 {
                    return Err(here("`not` takes exactly one problem block"));
                }
                ProblemNode::Not(Box::new(self.children.into_iter().next().unwrap()))
            }
            kind => {
                if self.children.len() < 2 {
                    return Err(here("compound problems take at least two blocks"));
                }
                let make: fn(Box<Problem>, Box<Problem>) -> ProblemNode = match kind {
                    FrameKind::And => ProblemNode::And,
                    FrameKind::Or => ProblemNode::Or,
                    _ => ProblemNode::Then,
                };
                let mut folded = fold(self.children, make);
                folded.initial = self.initial;
                return Ok(folded);
            }
        };
        Ok(Problem {
            initial: self.initial,
            node,
        })
    }
}

struct RawTask {
    name: String,
    line: usize,
    body: Option<Ref>,
    communication: Communication,
    deadline: Option<f64>,
    energy: Option<(Ref, f64)>,
    start: Vec<(Ref, f64)>,
    params: BTreeMap<String, f64>,
    problem: Option<Problem>,
    refs: Vec<Ref>,
}

struct RawVariant {
    name: String,
    line: usize,
    spec: VariantSpec,
    refs: Vec<Ref>,
    bodies: Vec<Ref>,
}

enum Block {
    Body(RawBody),
    Task(RawTask, Vec<Frame>),
    Variant(RawVariant),
}

#[derive(Default)]
struct Raw {
    world: Option<(String, usize)>,
    sim: SimDefaults,
    vars: Vec<RawVar>,
    rules: Vec<RawRule>,
    rels: Vec<RawRel>,
    bodies: Vec<RawBody>,
    tasks: Vec<RawTask>,
    variants: Vec<RawVariant>,
}

/// Parses a standalone expression (no position information is kept).
pub fn parse_expr(text: &str) -> Result<Expr, Diagnostic> {
    let toks = lex_line(text, 1)?;
    let mut c = Cursor::new(&toks, 1);
    let e = c.expr()?;
    c.done()?;
    Ok(e)
}

pub fn parse_document(text: &str) -> Result<TaskDocument, Vec<Diagnostic>> {
    let mut raw = Raw::default();
    let mut diags = Vec::new();
    let mut block: Option<Block> = None;

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let toks = match lex_line(line, lineno) {
            Ok(t) => t,
            Err(d) => {
                diags.push(d);
                continue;
            }
        };
        if toks.is_empty() {
            continue;
        }
        let mut c = Cursor::new(&toks, lineno);
        let result = match block.take() {
            None => top_level(&mut c, &mut raw, &mut block),
            Some(Block::Body(b)) => body_line(&mut c, b, &mut raw, &mut block),
            Some(Block::Task(t, frames)) => task_line(&mut c, t, frames, &mut raw, &mut block),
            Some(Block::Variant(v)) => variant_line(&mut c, v, &mut raw, &mut block),
        };
        if let Err(d) = result {
            diags.push(d);
        }
    }
    match block {
        Some(Block::Body(b)) => diags.push(Diagnostic::new(b.line, 1, format!("body `{}` is missing `end`", b.name))),
        Some(Block::Task(t, _)) => diags.push(Diagnostic::new(t.line, 1, format!("task `{}` is missing `end`", t.name))),
        Some(Block::Variant(v)) => diags.push(Diagnostic::new(v.line, 1, format!("variant `{}` is missing `end`", v.name))),
        None => {}
    }
    if !diags.is_empty() {
        return Err(diags);
    }
    build(raw)
}

fn top_level(c: &mut Cursor, raw: &mut Raw, block: &mut Option<Block>) -> PResult<()> {
    let line = c.line;
    let (kw, col) = c.ident()?;
    match kw.as_str() {
        "world" => {
            if raw.world.is_some() {
                return Err(Diagnostic::new(line, col, "`world` is declared twice"));
            }
            let (name, _) = c.ident()?;
            c.done()?;
            raw.world = Some((name, line));
        }
        "sim" => {
            while !c.at_end() {
                let col = c.col();
                if c.eat_keyword("delta") {
                    let d = c.number()?;
                    if d <= 0.0 {
                        return Err(Diagnostic::new(line, col, "delta must be positive"));
                    }
                    raw.sim.delta = Some(d);
                } else if c.eat_keyword("seed") {
                    raw.sim.seed = Some(c.integer()?);
                } else if c.eat_keyword("horizon") {
                    let h = c.number()?;
                    if h <= 0.0 {
                        return Err(Diagnostic::new(line, col, "horizon must be positive"));
                    }
                    raw.sim.horizon = Some(h);
                } else {
                    return c.err("expected `delta`, `seed` or `horizon`");
                }
            }
        }
        "var" => {
            let (name, ncol) = c.name()?;
            let domain = if c.eat_keyword("in") {
                c.interval()?
            } else {
                Interval::unbounded()
            };
            c.expect_sym("=")?;
            let init_col = c.col();
            let init = c.number()?;
            let unit = if c.eat_keyword("unit") { Some(c.string()?) } else { None };
            c.done()?;
            let mut var = Variable::new(name, domain);
            var.unit = unit;
            raw.vars.push(RawVar {
                var,
                init,
                line,
                col: ncol,
                init_col,
            });
        }
        "dyn" => {
            let (target, tcol) = c.name()?;
            c.expect_sym("<-")?;
            let expr = c.expr()?;
            c.done()?;
            raw.rules.push(RawRule {
                target,
                expr,
                refs: std::mem::take(&mut c.refs),
                line,
                col: tcol,
            });
        }
        "rel" => {
            let cond = c.cond()?;
            c.done()?;
            if cond.has_noise() {
                return Err(Diagnostic::new(line, col, "relations cannot contain noise terms"));
            }
            raw.rels.push(RawRel {
                cond,
                refs: std::mem::take(&mut c.refs),
                line,
            });
        }
        "body" => {
            let (name, _) = c.ident()?;
            c.done()?;
            *block = Some(Block::Body(RawBody {
                name,
                line,
                sensors: Vec::new(),
                actuators: Vec::new(),
            }));
        }
        "task" => {
            let (name, _) = c.ident()?;
            c.done()?;
            *block = Some(Block::Task(
                RawTask {
                    name,
                    line,
                    body: None,
                    communication: Communication::FullDescription,
                    deadline: None,
                    energy: None,
                    start: Vec::new(),
                    params: BTreeMap::new(),
                    problem: None,
                    refs: Vec::new(),
                },
                vec![Frame::new(FrameKind::Root, line)],
            ));
        }
        "variant" => {
            let (name, _) = c.ident()?;
            c.done()?;
            *block = Some(Block::Variant(RawVariant {
                name,
                line,
                spec: VariantSpec::default(),
                refs: Vec::new(),
                bodies: Vec::new(),
            }));
        }
        other => {
            return Err(Diagnostic::new(line, col, format!("unknown statement `{other}`")));
        }
    }
    Ok(())
}

fn body_line(c: &mut Cursor, mut b: RawBody, raw: &mut Raw, block: &mut Option<Block>) -> PResult<()> {
    let (kw, col) = c.ident()?;
    let result = match kw.as_str() {
        "end" => {
            c.done()?;
            raw.bodies.push(b);
            return Ok(());
        }
        "sensor" | "actuator" => (|| {
            let (var, vcol) = c.name()?;
            let (noise, res, lat) = c.channel_options()?;
            let ch = Channel {
                variable: var.clone(),
                noise_sigma: noise.unwrap_or(0.0),
                resolution: res.unwrap_or(0.0),
                latency: lat.unwrap_or(0),
            };
            let r = Ref {
                name: var,
                line: c.line,
                col: vcol,
            };
            if kw == "sensor" {
                b.sensors.push((ch, r));
            } else {
                b.actuators.push((ch, r));
            }
            Ok(())
        })(),
        other => Err(Diagnostic::new(
            c.line,
            col,
            format!("expected `sensor`, `actuator` or `end` in body, found `{other}`"),
        )),
    };
    *block = Some(Block::Body(b));
    result
}

fn goal_line(c: &mut Cursor, polarity: Polarity) -> PResult<Goal> {
    let target = c.partial_state(&["hold", "window"])?;
    let mut goal = Goal {
        target,
        window: Window::ALWAYS,
        hold: None,
        polarity,
    };
    while !c.at_end() {
        let col = c.col();
        if c.eat_keyword("hold") {
            let h = c.number()?;
            if h < 0.0 {
                return Err(Diagnostic::new(c.line, col, "hold duration must be >= 0"));
            }
            goal.hold = Some(h);
        } else if c.eat_keyword("window") {
            let start = c.number()?;
            let end = c.bound()?;
            if end < start {
                return Err(Diagnostic::new(c.line, col, "window ends before it starts"));
            }
            goal.window = Window::new(start, end);
        } else {
            return c.err(format!("expected `hold` or `window`, found {}", describe(c.peek())));
        }
    }
    if let Some(h) = goal.hold {
        if h > goal.window.length() {
            return Err(Diagnostic::new(c.line, 1, "hold duration exceeds the goal window"));
        }
    }
    Ok(goal)
}

fn task_line(
    c: &mut Cursor,
    mut t: RawTask,
    mut frames: Vec<Frame>,
    raw: &mut Raw,
    block: &mut Option<Block>,
) -> PResult<()> {
    let line = c.line;
    let result = (|| {
        let (kw, col) = c.ident()?;
        let top = frames.last_mut().expect("root frame");
        let at_root = top.kind == FrameKind::Root;
        let root_only = |what: &str| -> PResult<()> {
            if at_root {
                Ok(())
            } else {
                Err(Diagnostic::new(line, col, format!("`{what}` belongs at task level, not inside a problem block")))
            }
        };
        match kw.as_str() {
            "end" => {
                c.done()?;
                let frame = frames.pop().expect("frame");
                let problem = frame.close()?;
                match frames.last_mut() {
                    Some(parent) => parent.children.push(problem),
                    None => t.problem = Some(problem),
                }
            }
            "body" => {
                root_only("body")?;
                let (name, ncol) = c.ident()?;
                c.done()?;
                t.body = Some(Ref { name, line, col: ncol });
            }
            "mode" => {
                root_only("mode")?;
                let (m, mcol) = c.ident()?;
                t.communication = match m.as_str() {
                    "full" => Communication::FullDescription,
                    "reinforcement" => Communication::IncrementalReinforcement,
                    "hints" => Communication::Hints(if c.at_end() { None } else { Some(c.string()?) }),
                    _ => {
                        return Err(Diagnostic::new(line, mcol, "mode is one of `full`, `reinforcement`, `hints`"));
                    }
                };
                c.done()?;
            }
            "deadline" => {
                root_only("deadline")?;
                let dcol = c.col();
                let d = c.number()?;
                c.done()?;
                if d < 0.0 {
                    return Err(Diagnostic::new(line, dcol, "deadline must be >= 0"));
                }
                t.deadline = Some(d);
            }
            "energy" => {
                root_only("energy")?;
                let (var, vcol) = c.name()?;
                c.expect_keyword("floor")?;
                let floor = c.number()?;
                c.done()?;
                t.energy = Some((Ref { name: var, line, col: vcol }, floor));
            }
            "start" => {
                root_only("start")?;
                let (var, vcol) = c.name()?;
                c.expect_sym("=")?;
                let x = c.number()?;
                c.done()?;
                if t.start.iter().any(|(r, _)| r.name == var) {
                    return Err(Diagnostic::new(line, vcol, format!("start value of `{var}` is given twice")));
                }
                t.start.push((Ref { name: var, line, col: vcol }, x));
            }
            "param" => {
                root_only("param")?;
                let key = c.string()?;
                c.expect_sym("=")?;
                let x = c.number()?;
                c.done()?;
                t.params.insert(key, x);
            }
            "require" => {
                let ps = c.partial_state(&[])?;
                c.done()?;
                let top = frames.last_mut().expect("frame");
                for (n, iv) in ps.iter() {
                    top.initial
                        .insert(n.clone(), *iv)
                        .map_err(|e| Diagnostic::new(line, col, e.to_string()))?;
                }
            }
            "goal" | "fail" => {
                let polarity = if kw == "goal" { Polarity::Goal } else { Polarity::Failure };
                let g = goal_line(c, polarity)?;
                let top = frames.last_mut().expect("frame");
                if !matches!(top.kind, FrameKind::Root | FrameKind::Atom) {
                    return Err(Diagnostic::new(line, col, "goal lines go inside an `atom` block here"));
                }
                top.goals.push(g);
            }
            "atom" | "and" | "or" | "not" | "then" => {
                c.done()?;
                let kind = match kw.as_str() {
                    "atom" => FrameKind::Atom,
                    "and" => FrameKind::And,
                    "or" => FrameKind::Or,
                    "not" => FrameKind::Not,
                    _ => FrameKind::Then,
                };
                if frames.last().expect("frame").kind == FrameKind::Atom {
                    return Err(Diagnostic::new(line, col, "`atom` blocks cannot nest problems"));
                }
                frames.push(Frame::new(kind, line));
            }
            other => {
                return Err(Diagnostic::new(line, col, format!("unknown task statement `{other}`")));
            }
        }
        Ok(())
    })();
    t.refs.append(&mut c.refs);
    if frames.is_empty() {
        raw.tasks.push(t);
    } else {
        *block = Some(Block::Task(t, frames));
    }
    result
}

fn variant_line(c: &mut Cursor, mut v: RawVariant, raw: &mut Raw, block: &mut Option<Block>) -> PResult<()> {
    let line = c.line;
    let result = (|| {
        let (kw, col) = c.ident()?;
        match kw.as_str() {
            "end" => {
                c.done()?;
                return Ok(true);
            }
            "perturb" => {
                let variable = c.var_ref()?;
                let (m, mcol) = c.ident()?;
                let mode = match m.as_str() {
                    "set" => PerturbMode::Set,
                    "offset" => PerturbMode::Offset,
                    "scale" => PerturbMode::Scale,
                    _ => return Err(Diagnostic::new(line, mcol, "mode is one of `set`, `offset`, `scale`")),
                };
                let dist = c.dist()?;
                c.done()?;
                v.spec.perturbations.push(Perturbation { variable, mode, dist });
            }
            "deadline" | "energy" => {
                c.expect_keyword("scale")?;
                let dist = c.dist()?;
                c.done()?;
                if kw == "deadline" {
                    v.spec.deadline_scale = Some(dist);
                } else {
                    v.spec.energy_scale = Some(dist);
                }
            }
            "sensor" | "actuator" => {
                let (body, bcol) = c.ident()?;
                v.bodies.push(Ref { name: body.clone(), line, col: bcol });
                let variable = c.var_ref()?;
                let (noise_sigma, resolution, latency) = c.channel_options()?;
                v.spec.channels.push(ChannelOverride {
                    body,
                    kind: if kw == "sensor" { ChannelKind::Sensor } else { ChannelKind::Actuator },
                    variable,
                    noise_sigma,
                    resolution,
                    latency,
                });
            }
            "add" => {
                let (name, _) = c.ident()?;
                let target = c.var_ref()?;
                c.expect_sym("<-")?;
                let mut expr = c.expr()?;
                c.done()?;
                expr.renumber_noise(&target);
                v.spec.dynamics.push(DynamicsAddition { name, target, expr });
            }
            "clause" => {
                let ps = c.partial_state(&[])?;
                c.done()?;
                for (n, iv) in ps.iter() {
                    v.spec
                        .clauses
                        .insert(n.clone(), *iv)
                        .map_err(|e| Diagnostic::new(line, col, e.to_string()))?;
                }
            }
            other => {
                return Err(Diagnostic::new(line, col, format!("unknown variant statement `{other}`")));
            }
        }
        Ok(false)
    })();
    v.refs.append(&mut c.refs);
    match result {
        Ok(true) => {
            raw.variants.push(v);
            Ok(())
        }
        Ok(false) => {
            *block = Some(Block::Variant(v));
            Ok(())
        }
        Err(d) => {
            *block = Some(Block::Variant(v));
            Err(d)
        }
    }
}

fn unknown(r: &Ref) -> Diagnostic {
    Diagnostic::new(r.line, r.col, format!("unknown variable `{}`", r.name))
}

fn build(raw: Raw) -> Result<TaskDocument, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let Some((world_name, world_line)) = raw.world.clone() else {
        return Err(vec![Diagnostic::new(1, 1, "missing `world` declaration")]);
    };

    let mut declared: BTreeMap<String, &RawVar> = BTreeMap::new();
    for v in &raw.vars {
        if declared.contains_key(&v.var.name) {
            diags.push(Diagnostic::new(v.line, v.col, format!("variable `{}` is declared twice", v.var.name)));
            continue;
        }
        if v.var.domain.is_empty() {
            diags.push(Diagnostic::new(v.line, v.col, format!("domain {} is empty", v.var.domain)));
        } else if !v.var.domain.contains(v.init) {
            diags.push(Diagnostic::new(
                v.line,
                v.init_col,
                format!("initial value {} of `{}` lies outside its domain {}", v.init, v.var.name, v.var.domain),
            ));
        }
        declared.insert(v.var.name.clone(), v);
    }
    let known = |r: &Ref| declared.contains_key(&r.name);

    let mut targets: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &raw.rules {
        if !declared.contains_key(&r.target) {
            diags.push(Diagnostic::new(r.line, r.col, format!("unknown variable `{}`", r.target)));
        }
        if let Some(prev) = targets.insert(&r.target, r.line) {
            diags.push(Diagnostic::new(
                r.line,
                r.col,
                format!("second rule for `{}` (first on line {prev})", r.target),
            ));
        }
        diags.extend(r.refs.iter().filter(|x| !known(x)).map(unknown));
    }
    for r in &raw.rels {
        diags.extend(r.refs.iter().filter(|x| !known(x)).map(unknown));
    }
    for b in &raw.bodies {
        for (_, r) in b.sensors.iter().chain(&b.actuators) {
            if !known(r) {
                diags.push(unknown(r));
            }
        }
    }
    let body_names: Vec<&str> = raw.bodies.iter().map(|b| b.name.as_str()).collect();
    for t in &raw.tasks {
        diags.extend(t.refs.iter().filter(|x| !known(x)).map(unknown));
        match &t.body {
            None => diags.push(Diagnostic::new(t.line, 1, format!("task `{}` has no `body`", t.name))),
            Some(r) if !body_names.contains(&r.name.as_str()) => {
                diags.push(Diagnostic::new(r.line, r.col, format!("unknown body `{}`", r.name)))
            }
            _ => {}
        }
        if t.deadline.is_none() {
            diags.push(Diagnostic::new(t.line, 1, format!("task `{}` has no `deadline`", t.name)));
        }
        match &t.energy {
            None => diags.push(Diagnostic::new(t.line, 1, format!("task `{}` has no `energy` budget", t.name))),
            Some((r, _)) if !known(r) => diags.push(unknown(r)),
            _ => {}
        }
        for (r, x) in &t.start {
            match declared.get(&r.name) {
                None => diags.push(unknown(r)),
                Some(v) if !v.var.domain.contains(*x) => diags.push(Diagnostic::new(
                    r.line,
                    r.col,
                    format!("start value {x} of `{}` lies outside its domain {}", r.name, v.var.domain),
                )),
                _ => {}
            }
        }
    }
    for v in &raw.variants {
        diags.extend(v.refs.iter().filter(|x| !known(x)).map(unknown));
        for b in &v.bodies {
            if !body_names.contains(&b.name.as_str()) {
                diags.push(Diagnostic::new(b.line, b.col, format!("unknown body `{}`", b.name)));
            }
        }
    }
    for (kind, names) in [
        ("body", raw.bodies.iter().map(|b| (&b.name, b.line)).collect::<Vec<_>>()),
        ("task", raw.tasks.iter().map(|t| (&t.name, t.line)).collect()),
        ("variant", raw.variants.iter().map(|v| (&v.name, v.line)).collect()),
    ] {
        let mut seen = BTreeMap::new();
        for (n, line) in names {
            if seen.insert(n, line).is_some() {
                diags.push(Diagnostic::new(line, 1, format!("{kind} `{n}` is declared twice")));
            }
        }
    }
    if !diags.is_empty() {
        diags.sort_by_key(|d| (d.line, d.column));
        return Err(diags);
    }

    let initial: Assignment = raw.vars.iter().map(|v| (v.var.name.clone(), v.init)).collect();
    let rules = raw
        .rules
        .iter()
        .map(|r| TransitionRule::new(r.target.clone(), r.expr.clone()))
        .collect();
    let rels: Vec<InvariantRelation> = raw.rels.iter().map(|r| InvariantRelation::new(r.cond.clone())).collect();
    let world = match World::new(
        world_name,
        raw.vars.iter().map(|v| v.var.clone()).collect(),
        rules,
        &initial,
        rels,
    ) {
        Ok(w) => w,
        Err(crate::Error::InitialRelation(text)) => {
            let line = raw
                .rels
                .iter()
                .find(|r| r.cond.to_string() == text)
                .map_or(world_line, |r| r.line);
            return Err(vec![Diagnostic::new(line, 1, format!("initial state violates relation `{text}`"))]);
        }
        Err(e) => return Err(vec![Diagnostic::new(world_line, 1, e.to_string())]),
    };

    let mut bodies = BTreeMap::new();
    for b in raw.bodies {
        let line = b.line;
        let body = AgentBody::new(
            b.sensors.into_iter().map(|(c, _)| c).collect(),
            b.actuators.into_iter().map(|(c, _)| c).collect(),
        );
        if let Err(e) = body.validate(&world) {
            diags.push(Diagnostic::new(line, 1, format!("body `{}`: {e}", b.name)));
        }
        bodies.insert(b.name, body);
    }
    let mut tasks = BTreeMap::new();
    for t in raw.tasks {
        let (energy_ref, floor) = t.energy.expect("checked above");
        let task = Task {
            name: t.name.clone(),
            problem: t.problem.unwrap_or_else(Problem::trivial),
            body: t.body.expect("checked above").name,
            communication: t.communication,
            deadline: t.deadline.expect("checked above"),
            energy: EnergyBudget {
                variable: energy_ref.name,
                floor,
            },
            start: t.start.into_iter().map(|(r, x)| (r.name, x)).collect(),
            params: t.params,
        };
        if let Err(e) = task.validate(&world) {
            diags.push(Diagnostic::new(t.line, 1, format!("task `{}`: {e}", t.name)));
        }
        tasks.insert(t.name, task);
    }
    let variants: BTreeMap<String, VariantSpec> = raw.variants.into_iter().map(|v| (v.name, v.spec)).collect();
    if !diags.is_empty() {
        return Err(diags);
    }
    TaskDocument::new(world, bodies, tasks, variants, raw.sim)
        .map_err(|e| vec![Diagnostic::new(world_line, 1, e.to_string())])
}
