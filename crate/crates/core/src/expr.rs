//! Closed-form scalar expressions in chart variables.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?          right associative
//! primary := number | 'pi' | var | func '(' expr ')' | '(' expr ')'
//! var     := 'x' digits | 'y' digits       y only in tangent-bundle mode
//! func    := sin cos tan exp log ln sinh cosh sqrt
//! ```
//!
//! Variables are one-based in text (`x1`) and zero-based in the tree.
//! Evaluation is generic over [`Scalar`], so the same tree yields values,
//! first derivatives (`Dual<f64>`) and second derivatives
//! (`Dual<Dual<f64>>`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::scalar::{Dual, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("empty expression")]
    Empty,
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("variable `{name}` at {pos} out of range for dimension {dim}")]
    VariableOutOfRange { name: String, pos: usize, dim: usize },
    #[error("domain error in `{node}`: {msg}")]
    Domain { node: String, msg: String },
    #[error("point has {got} coordinates, expression needs {need}")]
    PointTooShort { got: usize, need: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sinh,
    Cosh,
    Sqrt,
}

impl UnaryOp {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Self::Sin,
            "cos" => Self::Cos,
            "tan" => Self::Tan,
            "exp" => Self::Exp,
            "log" | "ln" => Self::Log,
            "sinh" => Self::Sinh,
            "cosh" => Self::Cosh,
            "sqrt" => Self::Sqrt,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Self::Neg => "-",
            Self::Sin => "sin",
            Self::Cos => "cos",
            Self::Tan => "tan",
            Self::Exp => "exp",
            Self::Log => "log",
            Self::Sinh => "sinh",
            Self::Cosh => "cosh",
            Self::Sqrt => "sqrt",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            Self::Add => '+',
            Self::Sub => '-',
            Self::Mul => '*',
            Self::Div => '/',
            Self::Pow => '^',
        }
    }
}

/// Chart variable: a position coordinate `x^i` or a fiber coordinate `y^i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    Pos(usize),
    Fiber(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

/// Parse an expression in the position variables `x1..x{dim}`.
pub fn parse(source: &str, dim: usize) -> Result<Expr, ExprError> {
    Parser::new(source, dim, false)?.parse_all()
}

/// Parse an expression on the tangent bundle: `x1..x{dim}` and `y1..y{dim}`.
pub fn parse_tm(source: &str, dim: usize) -> Result<Expr, ExprError> {
    Parser::new(source, dim, true)?.parse_all()
}

/// Evaluate at position coordinates.
pub fn eval<T: Scalar>(ast: &Expr, x: &[T]) -> Result<T, ExprError> {
    ast.eval_tm(x, &[])
}

/// Exact partial derivative of `ast` at `p`.
///
/// `wrt` holds one index for `order == 1` and two for `order == 2`.
pub fn derivative(ast: &Expr, p: &[f64], wrt: &[usize]) -> Result<f64, ExprError> {
    match *wrt {
        [i] => {
            let x = Dual::seed(p, i);
            Ok(ast.eval(&x)?.eps)
        }
        [i, j] => {
            let inner: Vec<Dual<f64>> = Dual::seed(p, j);
            let x: Vec<Dual<Dual<f64>>> = inner
                .iter()
                .enumerate()
                .map(|(k, &v)| Dual::new(v, Dual::from_f64(if k == i { 1.0 } else { 0.0 })))
                .collect();
            Ok(ast.eval(&x)?.eps.eps)
        }
        _ => Err(ExprError::Syntax {
            pos: 0,
            msg: format!("derivative order must be 1 or 2, got {}", wrt.len()),
        }),
    }
}

impl Expr {
    pub fn constant(v: f64) -> Self {
        Expr::Const(v)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(v) if *v == 0.0)
    }

    pub fn eval<T: Scalar>(&self, x: &[T]) -> Result<T, ExprError> {
        self.eval_tm(x, &[])
    }

    pub fn eval_tm<T: Scalar>(&self, x: &[T], y: &[T]) -> Result<T, ExprError> {
        match self {
            Expr::Const(v) => Ok(T::from_f64(*v)),
            Expr::Var(Var::Pos(i)) => x.get(*i).copied().ok_or(ExprError::PointTooShort {
                got: x.len(),
                need: i + 1,
            }),
            Expr::Var(Var::Fiber(i)) => y.get(*i).copied().ok_or(ExprError::PointTooShort {
                got: y.len(),
                need: i + 1,
            }),
            Expr::Unary(op, arg) => {
                let a = arg.eval_tm(x, y)?;
                let domain = |msg: &str| ExprError::Domain {
                    node: self.to_string(),
                    msg: msg.to_string(),
                };
                Ok(match op {
                    UnaryOp::Neg => -a,
                    UnaryOp::Sin => a.sin(),
                    UnaryOp::Cos => a.cos(),
                    UnaryOp::Tan => {
                        if a.value().cos() == 0.0 {
                            return Err(domain("tangent pole"));
                        }
                        a.tan()
                    }
                    UnaryOp::Exp => a.exp(),
                    UnaryOp::Log => {
                        if a.value() <= 0.0 {
                            return Err(domain("logarithm of non-positive value"));
                        }
                        a.ln()
                    }
                    UnaryOp::Sinh => a.sinh(),
                    UnaryOp::Cosh => a.cosh(),
                    UnaryOp::Sqrt => {
                        if a.value() < 0.0 {
                            return Err(domain("square root of negative value"));
                        }
                        a.sqrt()
                    }
                })
            }
            Expr::Binary(op, lhs, rhs) => {
                if *op == BinaryOp::Pow {
                    return self.eval_pow(lhs, rhs, x, y);
                }
                let a = lhs.eval_tm(x, y)?;
                let b = rhs.eval_tm(x, y)?;
                Ok(match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b.value() == 0.0 {
                            return Err(ExprError::Domain {
                                node: self.to_string(),
                                msg: "division by zero".into(),
                            });
                        }
                        a / b
                    }
                    BinaryOp::Pow => unreachable!(),
                })
            }
        }
    }

    fn eval_pow<T: Scalar>(&self, base: &Expr, exponent: &Expr, x: &[T], y: &[T]) -> Result<T, ExprError> {
        let b = base.eval_tm(x, y)?;
        if let Some(k) = exponent.integer_constant() {
            if k < 0 && b.value() == 0.0 {
                return Err(ExprError::Domain {
                    node: self.to_string(),
                    msg: "negative power of zero".into(),
                });
            }
            return Ok(b.powi(k));
        }
        let e = exponent.eval_tm(x, y)?;
        if b.value() <= 0.0 {
            return Err(ExprError::Domain {
                node: self.to_string(),
                msg: "non-integer power of non-positive base".into(),
            });
        }
        Ok((e * b.ln()).exp())
    }

    /// Value of a variable-free subtree when it is a small integer.
    fn integer_constant(&self) -> Option<i32> {
        if self.arity() != (0, 0) {
            return None;
        }
        match self.eval::<f64>(&[]) {
            Ok(v) if v.fract() == 0.0 && v.abs() <= 64.0 => Some(v as i32),
            _ => None,
        }
    }

    /// Largest position / fiber variable index used, plus one.
    pub fn arity(&self) -> (usize, usize) {
        match self {
            Expr::Const(_) => (0, 0),
            Expr::Var(Var::Pos(i)) => (i + 1, 0),
            Expr::Var(Var::Fiber(i)) => (0, i + 1),
            Expr::Unary(_, a) => a.arity(),
            Expr::Binary(_, a, b) => {
                let (pa, fa) = a.arity();
                let (pb, fb) = b.arity();
                (pa.max(pb), fa.max(fb))
            }
        }
    }

    pub fn depends_on_fiber(&self) -> bool {
        self.arity().1 > 0
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) => write!(f, "{v:?}"),
            Expr::Var(Var::Pos(i)) => write!(f, "x{}", i + 1),
            Expr::Var(Var::Fiber(i)) => write!(f, "y{}", i + 1),
            Expr::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            Expr::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}

/// An expression together with its source text and declared dimension.
///
/// This is the form carried through configs and reports; it serializes as
/// its source text.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarExpr {
    pub source: String,
    pub ast: Expr,
}

impl ScalarExpr {
    pub fn parse(source: &str, dim: usize) -> Result<Self, ExprError> {
        Ok(Self {
            source: source.trim().to_string(),
            ast: parse(source, dim)?,
        })
    }

    pub fn parse_tm(source: &str, dim: usize) -> Result<Self, ExprError> {
        Ok(Self {
            source: source.trim().to_string(),
            ast: parse_tm(source, dim)?,
        })
    }

    pub fn constant(v: f64) -> Self {
        Self {
            source: format!("{v:?}"),
            ast: Expr::Const(v),
        }
    }
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Serialize for ScalarExpr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for ScalarExpr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let source = String::deserialize(d)?;
        // Dimension checks happen where the expression is bound to a manifold.
        ScalarExpr::parse_tm(&source, usize::MAX).map_err(serde::de::Error::custom)
    }
}

impl FromStr for Expr {
    type Err = ExprError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_tm(s, usize::MAX)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
    end: usize,
    dim: usize,
    allow_fiber: bool,
}

impl Parser {
    fn new(source: &str, dim: usize, allow_fiber: bool) -> Result<Self, ExprError> {
        if source.trim().is_empty() {
            return Err(ExprError::Empty);
        }
        Ok(Self {
            toks: lex(source)?,
            at: 0,
            end: source.len(),
            dim,
            allow_fiber,
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |(_, p)| *p)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|(t, _)| t.clone());
        self.at += 1;
        t
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Syntax {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    fn parse_all(mut self) -> Result<Expr, ExprError> {
        let e = self.expr()?;
        if self.peek().is_some() {
            return self.syntax("unexpected trailing input");
        }
        Ok(e)
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinaryOp::Add } else { BinaryOp::Sub };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinaryOp::Mul } else { BinaryOp::Div };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.bump();
                Ok(Expr::Unary(UnaryOp::Neg, Box::new(self.unary()?)))
            }
            Some(Tok::Op('+')) => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinaryOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let pos = self.pos();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Expr::Const(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                match self.bump() {
                    Some(Tok::RParen) => Ok(e),
                    _ => {
                        self.at -= 1;
                        self.syntax("expected `)`")
                    }
                }
            }
            Some(Tok::Ident(name)) => self.identifier(name, pos),
            Some(t) => {
                self.at -= 1;
                self.syntax(format!("unexpected token {t:?}"))
            }
            None => self.syntax("unexpected end of input"),
        }
    }

    fn identifier(&mut self, name: String, pos: usize) -> Result<Expr, ExprError> {
        if let Some(op) = UnaryOp::from_name(&name) {
            if self.peek() != Some(&Tok::LParen) {
                return self.syntax(format!("expected `(` after `{name}`"));
            }
            self.bump();
            let arg = self.expr()?;
            if self.bump() != Some(Tok::RParen) {
                self.at -= 1;
                return self.syntax("expected `)`");
            }
            return Ok(Expr::Unary(op, Box::new(arg)));
        }
        if name == "pi" {
            return Ok(Expr::Const(std::f64::consts::PI));
        }
        let (head, digits) = name.split_at(1);
        let fiber = match head {
            "x" => false,
            "y" if self.allow_fiber => true,
            _ => return Err(ExprError::UnknownIdentifier { name, pos }),
        };
        let Ok(index) = digits.parse::<usize>() else {
            return Err(ExprError::UnknownIdentifier { name, pos });
        };
        if index == 0 || index > self.dim {
            return Err(ExprError::VariableOutOfRange {
                name,
                pos,
                dim: self.dim,
            });
        }
        Ok(Expr::Var(if fiber {
            Var::Fiber(index - 1)
        } else {
            Var::Pos(index - 1)
        }))
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| ExprError::Syntax {
                pos: start,
                msg: format!("malformed number `{text}`"),
            })?;
            if !v.is_finite() {
                return Err(ExprError::Syntax {
                    pos: start,
                    msg: format!("number `{text}` is not finite"),
                });
            }
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else {
            let tok = match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                _ => {
                    return Err(ExprError::Syntax {
                        pos: i,
                        msg: format!("unexpected character `{c}`"),
                    })
                }
            };
            out.push((tok, i));
            i += 1;
        }
    }
    Ok(out)
}
