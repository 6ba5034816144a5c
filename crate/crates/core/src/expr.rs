//! Arithmetic and boolean expression trees used by transition rules and
//! invariant relations, with evaluation over dense state vectors.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::EvalFault;
use crate::rng::NoiseStreams;
use crate::taskdl::fmt_num;

/// A variable reference. `index` is the position of the variable in the
/// owning world's (sorted) variable list and is filled in when the world is
/// built.
#[derive(Debug, Clone, PartialEq)]
pub struct VarRef {
    pub name: String,
    pub(crate) index: usize,
}

impl VarRef {
    pub fn new(name: impl Into<String>) -> Self {
        VarRef {
            name: name.into(),
            index: usize::MAX,
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }
}

/// Identifies a noise term: the rule it lives in and its pre-order
/// occurrence index within that rule.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChannelId {
    pub scope: String,
    pub index: u32,
}

impl ChannelId {
    pub fn stream_key(&self) -> String {
        format!("dyn:{}#{}", self.scope, self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseDist {
    Gauss { sigma: f64 },
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Noise {
    pub dist: NoiseDist,
    pub channel: ChannelId,
    key: String,
}

impl Noise {
    pub fn new(dist: NoiseDist, channel: ChannelId) -> Self {
        let key = channel.stream_key();
        Noise { dist, channel, key }
    }

    fn draw(&self, streams: &mut NoiseStreams) -> f64 {
        let rng = streams.stream(&self.key);
        match self.dist {
            NoiseDist::Gauss { sigma } => {
                if sigma == 0.0 {
                    0.0
                } else {
                    Normal::new(0.0, sigma).map(|n| n.sample(rng)).unwrap_or(0.0)
                }
            }
            NoiseDist::Uniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..hi)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sqrt,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    fn apply(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(f64),
    Var(VarRef),
    /// The step size.
    Delta,
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    If(Box<Cond>, Box<Expr>, Box<Expr>),
    Noise(Noise),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cond {
    Const(bool),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
    Not(Box<Cond>),
}

fn finite(x: f64) -> Result<f64, EvalFault> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(EvalFault::NonFinite)
    }
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Self {
        Expr::Var(VarRef::new(name))
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Self {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    /// Negation; folds literals so that `-3` is a single literal.
    pub fn neg(e: Expr) -> Self {
        match e {
            Expr::Lit(x) => Expr::Lit(-x),
            other => Expr::Unary(UnaryOp::Neg, Box::new(other)),
        }
    }

    /// Evaluates against a dense value vector laid out in world order.
    pub fn eval(
        &self,
        values: &[f64],
        delta: f64,
        noise: &mut NoiseStreams,
    ) -> Result<f64, EvalFault> {
        match self {
            Expr::Lit(x) => Ok(*x),
            Expr::Var(v) => Ok(values[v.index]),
            Expr::Delta => Ok(delta),
            Expr::Noise(n) => Ok(n.draw(noise)),
            Expr::Unary(op, a) => {
                let x = a.eval(values, delta, noise)?;
                match op {
                    UnaryOp::Neg => Ok(-x),
                    UnaryOp::Abs => Ok(x.abs()),
                    UnaryOp::Sqrt => {
                        if x < 0.0 {
                            Err(EvalFault::NegativeSqrt(x))
                        } else {
                            Ok(x.sqrt())
                        }
                    }
                }
            }
            Expr::Binary(op, a, b) => {
                let x = a.eval(values, delta, noise)?;
                let y = b.eval(values, delta, noise)?;
                match op {
                    BinaryOp::Add => finite(x + y),
                    BinaryOp::Sub => finite(x - y),
                    BinaryOp::Mul => finite(x * y),
                    BinaryOp::Div => {
                        if y == 0.0 {
                            Err(EvalFault::DivisionByZero)
                        } else {
                            finite(x / y)
                        }
                    }
                    BinaryOp::Pow => {
                        if y.fract() == 0.0 && y.abs() <= 64.0 {
                            finite(x.powi(y as i32))
                        } else {
                            finite(x.powf(y))
                        }
                    }
                    BinaryOp::Min => Ok(x.min(y)),
                    BinaryOp::Max => Ok(x.max(y)),
                }
            }
            Expr::If(c, a, b) => {
                if c.eval(values, delta, noise)? {
                    a.eval(values, delta, noise)
                } else {
                    b.eval(values, delta, noise)
                }
            }
        }
    }

    pub fn for_each_var<'a>(&'a self, f: &mut impl FnMut(&'a VarRef)) {
        match self {
            Expr::Var(v) => f(v),
            Expr::Lit(_) | Expr::Delta | Expr::Noise(_) => {}
            Expr::Unary(_, a) => a.for_each_var(f),
            Expr::Binary(_, a, b) => {
                a.for_each_var(f);
                b.for_each_var(f);
            }
            Expr::If(c, a, b) => {
                c.for_each_var(f);
                a.for_each_var(f);
                b.for_each_var(f);
            }
        }
    }

    pub(crate) fn for_each_var_mut(&mut self, f: &mut impl FnMut(&mut VarRef)) {
        match self {
            Expr::Var(v) => f(v),
            Expr::Lit(_) | Expr::Delta | Expr::Noise(_) => {}
            Expr::Unary(_, a) => a.for_each_var_mut(f),
            Expr::Binary(_, a, b) => {
                a.for_each_var_mut(f);
                b.for_each_var_mut(f);
            }
            Expr::If(c, a, b) => {
                c.for_each_var_mut(f);
                a.for_each_var_mut(f);
                b.for_each_var_mut(f);
            }
        }
    }

    /// Names of all referenced variables, in first-occurrence order.
    pub fn variables(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        self.for_each_var(&mut |v| {
            if !out.contains(&v.name) {
                out.push(v.name.clone());
            }
        });
        out
    }

    pub(crate) fn resolve(&mut self, index: &HashMap<String, usize>) -> Result<(), String> {
        let mut missing = None;
        self.for_each_var_mut(&mut |v| match index.get(&v.name) {
            Some(i) => v.index = *i,
            None => {
                missing.get_or_insert_with(|| v.name.clone());
            }
        });
        missing.map_or(Ok(()), Err)
    }

    pub fn has_noise(&self) -> bool {
        match self {
            Expr::Noise(_) => true,
            Expr::Lit(_) | Expr::Var(_) | Expr::Delta => false,
            Expr::Unary(_, a) => a.has_noise(),
            Expr::Binary(_, a, b) => a.has_noise() || b.has_noise(),
            Expr::If(c, a, b) => c.has_noise() || a.has_noise() || b.has_noise(),
        }
    }

    /// No kinks, branches or noise: only arithmetic, powers and roots.
    pub fn is_smooth(&self) -> bool {
        match self {
            Expr::Lit(_) | Expr::Var(_) | Expr::Delta => true,
            Expr::Noise(_) | Expr::If(..) => false,
            Expr::Unary(UnaryOp::Abs, _) => false,
            Expr::Unary(_, a) => a.is_smooth(),
            Expr::Binary(BinaryOp::Min | BinaryOp::Max, ..) => false,
            Expr::Binary(_, a, b) => a.is_smooth() && b.is_smooth(),
        }
    }

    /// Replaces every reference to `name` with a copy of `with`.
    pub fn substitute(&self, name: &str, with: &Expr) -> Expr {
        match self {
            Expr::Var(v) if v.name == name => with.clone(),
            Expr::Lit(_) | Expr::Var(_) | Expr::Delta | Expr::Noise(_) => self.clone(),
            Expr::Unary(op, a) => Expr::Unary(*op, Box::new(a.substitute(name, with))),
            Expr::Binary(op, a, b) => Expr::Binary(
                *op,
                Box::new(a.substitute(name, with)),
                Box::new(b.substitute(name, with)),
            ),
            Expr::If(c, a, b) => Expr::If(
                Box::new(c.substitute(name, with)),
                Box::new(a.substitute(name, with)),
                Box::new(b.substitute(name, with)),
            ),
        }
    }

    /// Re-assigns noise channel ids in pre-order under `scope`.
    pub fn renumber_noise(&mut self, scope: &str) {
        let mut next = 0u32;
        self.renumber_inner(scope, &mut next);
    }

    fn renumber_inner(&mut self, scope: &str, next: &mut u32) {
        match self {
            Expr::Noise(n) => {
                *n = Noise::new(
                    n.dist,
                    ChannelId {
                        scope: scope.to_string(),
                        index: *next,
                    },
                );
                *next += 1;
            }
            Expr::Lit(_) | Expr::Var(_) | Expr::Delta => {}
            Expr::Unary(_, a) => a.renumber_inner(scope, next),
            Expr::Binary(_, a, b) => {
                a.renumber_inner(scope, next);
                b.renumber_inner(scope, next);
            }
            Expr::If(c, a, b) => {
                c.renumber_inner(scope, next);
                a.renumber_inner(scope, next);
                b.renumber_inner(scope, next);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
            Expr::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
            Expr::Unary(UnaryOp::Neg, _) => 3,
            Expr::Lit(x) if x.is_sign_negative() => 3,
            Expr::Binary(BinaryOp::Pow, ..) => 4,
            _ => 5,
        }
    }
}

impl Cond {
    pub fn eval(
        &self,
        values: &[f64],
        delta: f64,
        noise: &mut NoiseStreams,
    ) -> Result<bool, EvalFault> {
        match self {
            Cond::Const(b) => Ok(*b),
            Cond::Cmp(op, a, b) => {
                let x = a.eval(values, delta, noise)?;
                let y = b.eval(values, delta, noise)?;
                Ok(op.apply(x, y))
            }
            Cond::And(a, b) => Ok(a.eval(values, delta, noise)? && b.eval(values, delta, noise)?),
            Cond::Or(a, b) => Ok(a.eval(values, delta, noise)? || b.eval(values, delta, noise)?),
            Cond::Not(a) => Ok(!a.eval(values, delta, noise)?),
        }
    }

    pub fn for_each_var<'a>(&'a self, f: &mut impl FnMut(&'a VarRef)) {
        match self {
            Cond::Const(_) => {}
            Cond::Cmp(_, a, b) => {
                a.for_each_var(f);
                b.for_each_var(f);
            }
            Cond::And(a, b) | Cond::Or(a, b) => {
                a.for_each_var(f);
                b.for_each_var(f);
            }
            Cond::Not(a) => a.for_each_var(f),
        }
    }

    pub(crate) fn for_each_var_mut(&mut self, f: &mut impl FnMut(&mut VarRef)) {
        match self {
            Cond::Const(_) => {}
            Cond::Cmp(_, a, b) => {
                a.for_each_var_mut(f);
                b.for_each_var_mut(f);
            }
            Cond::And(a, b) | Cond::Or(a, b) => {
                a.for_each_var_mut(f);
                b.for_each_var_mut(f);
            }
            Cond::Not(a) => a.for_each_var_mut(f),
        }
    }

    pub fn variables(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        self.for_each_var(&mut |v| {
            if !out.contains(&v.name) {
                out.push(v.name.clone());
            }
        });
        out
    }

    pub(crate) fn resolve(&mut self, index: &HashMap<String, usize>) -> Result<(), String> {
        let mut missing = None;
        self.for_each_var_mut(&mut |v| match index.get(&v.name) {
            Some(i) => v.index = *i,
            None => {
                missing.get_or_insert_with(|| v.name.clone());
            }
        });
        missing.map_or(Ok(()), Err)
    }

    pub fn has_noise(&self) -> bool {
        match self {
            Cond::Const(_) => false,
            Cond::Cmp(_, a, b) => a.has_noise() || b.has_noise(),
            Cond::And(a, b) | Cond::Or(a, b) => a.has_noise() || b.has_noise(),
            Cond::Not(a) => a.has_noise(),
        }
    }

    fn substitute(&self, name: &str, with: &Expr) -> Cond {
        match self {
            Cond::Const(b) => Cond::Const(*b),
            Cond::Cmp(op, a, b) => Cond::Cmp(
                *op,
                Box::new(a.substitute(name, with)),
                Box::new(b.substitute(name, with)),
            ),
            Cond::And(a, b) => Cond::And(
                Box::new(a.substitute(name, with)),
                Box::new(b.substitute(name, with)),
            ),
            Cond::Or(a, b) => Cond::Or(
                Box::new(a.substitute(name, with)),
                Box::new(b.substitute(name, with)),
            ),
            Cond::Not(a) => Cond::Not(Box::new(a.substitute(name, with))),
        }
    }

    fn renumber_inner(&mut self, scope: &str, next: &mut u32) {
        match self {
            Cond::Const(_) => {}
            Cond::Cmp(_, a, b) => {
                a.renumber_inner(scope, next);
                b.renumber_inner(scope, next);
            }
            Cond::And(a, b) | Cond::Or(a, b) => {
                a.renumber_inner(scope, next);
                b.renumber_inner(scope, next);
            }
            Cond::Not(a) => a.renumber_inner(scope, next),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Cond::Or(..) => 1,
            Cond::And(..) => 2,
            Cond::Not(_) => 3,
            _ => 4,
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(x) => f.write_str(&fmt_num(*x)),
            Expr::Var(v) => f.write_str(&v.name),
            Expr::Delta => f.write_str("delta"),
            Expr::Noise(n) => match n.dist {
                NoiseDist::Gauss { sigma } => write!(f, "gauss({})", fmt_num(sigma)),
                NoiseDist::Uniform { lo, hi } => {
                    write!(f, "uniform({}, {})", fmt_num(lo), fmt_num(hi))
                }
            },
            Expr::Unary(UnaryOp::Neg, a) => {
                f.write_str("-")?;
                write_child(f, a, a.precedence() < 3)
            }
            Expr::Unary(UnaryOp::Sqrt, a) => write!(f, "sqrt({a})"),
            Expr::Unary(UnaryOp::Abs, a) => write!(f, "abs({a})"),
            Expr::Binary(BinaryOp::Min, a, b) => write!(f, "min({a}, {b})"),
            Expr::Binary(BinaryOp::Max, a, b) => write!(f, "max({a}, {b})"),
            Expr::Binary(BinaryOp::Pow, a, b) => {
                write_child(f, a, a.precedence() <= 4)?;
                f.write_str(" ^ ")?;
                write_child(f, b, b.precedence() < 3)
            }
            Expr::Binary(op, a, b) => {
                let p = self.precedence();
                let sym = match op {
                    BinaryOp::Add => "+",
                    BinaryOp::Sub => "-",
                    BinaryOp::Mul => "*",
                    _ => "/",
                };
                write_child(f, a, a.precedence() < p)?;
                write!(f, " {sym} ")?;
                write_child(f, b, b.precedence() <= p)
            }
            Expr::If(c, a, b) => write!(f, "if({c}, {a}, {b})"),
        }
    }
}

impl fmt::Display for Cond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let child = |f: &mut fmt::Formatter<'_>, c: &Cond, parens: bool| {
            if parens {
                write!(f, "({c})")
            } else {
                write!(f, "{c}")
            }
        };
        match self {
            Cond::Const(b) => write!(f, "{b}"),
            Cond::Cmp(op, a, b) => write!(f, "{a} {} {b}", op.symbol()),
            Cond::And(a, b) => {
                child(f, a, a.precedence() < 2)?;
                f.write_str(" && ")?;
                child(f, b, b.precedence() <= 2)
            }
            Cond::Or(a, b) => {
                child(f, a, a.precedence() < 1)?;
                f.write_str(" || ")?;
                child(f, b, b.precedence() <= 1)
            }
            Cond::Not(a) => {
                f.write_str("!")?;
                child(f, a, !matches!(**a, Cond::Not(_) | Cond::Const(_)))
            }
        }
    }
}
