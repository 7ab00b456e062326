//! One-variable scalar expressions used to describe path components.
//!
//! Expressions are written in a small infix language over the single
//! parameter `w`:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := ['-'] atom ['^' integer]
//! atom   := number | 'pi' | 'w' | func '(' expr ')' | '(' expr ')'
//! func   := 'sin' | 'cos' | 'atan'
//! ```
//!
//! The node set is closed under differentiation, so first and second
//! derivatives of every path component are available in exact symbolic form.
//!
//! ```
//! use dgvf::expr::Expr;
//!
//! let e: Expr = "5*sin(pi*w/50)".parse().unwrap();
//! let de = e.differentiate();
//! let h = 1e-6;
//! let fd = (e.eval(25.0 + h).unwrap() - e.eval(25.0 - h).unwrap()) / (2.0 * h);
//! assert!((de.eval(25.0).unwrap() - fd).abs() < 1e-6);
//! ```

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Atan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Expression tree in the single variable `w`.
///
/// Integer powers are their own node so that the exponent is a `u32` by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var,
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    UnexpectedEnd,
    UnknownIdentifier(String),
    NonIntegerExponent,
    InvalidNumber,
    TrailingInput,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at byte offset {offset}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub offset: usize,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character {c:?}"),
            ParseErrorKind::UnexpectedEnd => write!(f, "unexpected end of input"),
            ParseErrorKind::UnknownIdentifier(id) => write!(f, "unknown identifier `{id}`"),
            ParseErrorKind::NonIntegerExponent => {
                write!(f, "exponent must be a non-negative integer")
            }
            ParseErrorKind::InvalidNumber => write!(f, "invalid number literal"),
            ParseErrorKind::TrailingInput => write!(f, "unexpected trailing input"),
        }
    }
}

/// Evaluation failure. `node` is the pre-order index of the offending node,
/// counting the root as 0.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("division by zero at node {node}")]
    DivisionByZero { node: usize },
}

impl Expr {
    pub fn constant(value: f64) -> Self {
        Expr::Const(value)
    }

    pub fn var() -> Self {
        Expr::Var
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut parser = Parser { src: text.as_bytes(), pos: 0 };
        let expr = parser.expr()?;
        parser.skip_ws();
        if parser.pos < parser.src.len() {
            return Err(parser.error(ParseErrorKind::TrailingInput));
        }
        Ok(expr)
    }

    /// Value of the expression at `w`.
    pub fn eval(&self, w: f64) -> Result<f64, EvalError> {
        let mut counter = 0;
        self.eval_at(w, &mut counter)
    }

    fn eval_at(&self, w: f64, counter: &mut usize) -> Result<f64, EvalError> {
        let node = *counter;
        *counter += 1;
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var => w,
            Expr::Unary(op, child) => {
                let x = child.eval_at(w, counter)?;
                match op {
                    UnaryOp::Neg => -x,
                    UnaryOp::Sin => x.sin(),
                    UnaryOp::Cos => x.cos(),
                    UnaryOp::Atan => x.atan(),
                }
            }
            Expr::Binary(op, lhs, rhs) => {
                let a = lhs.eval_at(w, counter)?;
                let b = rhs.eval_at(w, counter)?;
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero { node });
                        }
                        a / b
                    }
                }
            }
            Expr::Pow(base, k) => powi(base.eval_at(w, counter)?, *k),
        })
    }

    /// Exact derivative with respect to `w`, with constant folding.
    pub fn differentiate(&self) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var => Expr::Const(1.0),
            Expr::Unary(op, u) => {
                let du = u.differentiate();
                match op {
                    UnaryOp::Neg => neg(du),
                    UnaryOp::Sin => mul(unary(UnaryOp::Cos, (**u).clone()), du),
                    UnaryOp::Cos => mul(neg(unary(UnaryOp::Sin, (**u).clone())), du),
                    UnaryOp::Atan => div(
                        du,
                        add(Expr::Const(1.0), pow((**u).clone(), 2)),
                    ),
                }
            }
            Expr::Binary(op, u, v) => {
                let du = u.differentiate();
                let dv = v.differentiate();
                match op {
                    BinaryOp::Add => add(du, dv),
                    BinaryOp::Sub => sub(du, dv),
                    BinaryOp::Mul => add(mul(du, (**v).clone()), mul((**u).clone(), dv)),
                    BinaryOp::Div => div(
                        sub(mul(du, (**v).clone()), mul((**u).clone(), dv)),
                        pow((**v).clone(), 2),
                    ),
                }
            }
            Expr::Pow(u, k) => match *k {
                0 => Expr::Const(0.0),
                k => mul(
                    mul(Expr::Const(f64::from(k)), pow((**u).clone(), k - 1)),
                    u.differentiate(),
                ),
            },
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var => 1,
            Expr::Unary(_, c) => 1 + c.node_count(),
            Expr::Binary(_, a, b) => 1 + a.node_count() + b.node_count(),
            Expr::Pow(b, _) => 1 + b.node_count(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var => 1,
            Expr::Unary(_, c) | Expr::Pow(c, _) => 1 + c.depth(),
            Expr::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// True when the expression does not reference `w`.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Const(_) => true,
            Expr::Var => false,
            Expr::Unary(_, c) | Expr::Pow(c, _) => c.is_constant(),
            Expr::Binary(_, a, b) => a.is_constant() && b.is_constant(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
            Expr::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
            Expr::Unary(UnaryOp::Neg, _) | Expr::Pow(..) => 3,
            Expr::Const(c) if c.is_sign_negative() => 3,
            _ => 4,
        }
    }

    fn fmt_atom(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.precedence() >= 4 {
            write!(f, "{self}")
        } else {
            write!(f, "({self})")
        }
    }
}

fn powi(x: f64, k: u32) -> f64 {
    match i32::try_from(k) {
        Ok(k) => x.powi(k),
        Err(_) => x.powf(f64::from(k)),
    }
}

fn unary(op: UnaryOp, e: Expr) -> Expr {
    match e {
        Expr::Const(c) => Expr::Const(match op {
            UnaryOp::Neg => -c,
            UnaryOp::Sin => c.sin(),
            UnaryOp::Cos => c.cos(),
            UnaryOp::Atan => c.atan(),
        }),
        e => Expr::Unary(op, Box::new(e)),
    }
}

fn neg(e: Expr) -> Expr {
    match e {
        Expr::Unary(UnaryOp::Neg, inner) => *inner,
        e => unary(UnaryOp::Neg, e),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        (Expr::Const(z), e) | (e, Expr::Const(z)) if z == 0.0 => e,
        (a, b) => Expr::Binary(BinaryOp::Add, Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        (e, Expr::Const(z)) if z == 0.0 => e,
        (Expr::Const(z), e) if z == 0.0 => neg(e),
        (a, b) => Expr::Binary(BinaryOp::Sub, Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        (Expr::Const(z), _) | (_, Expr::Const(z)) if z == 0.0 => Expr::Const(0.0),
        (Expr::Const(o), e) | (e, Expr::Const(o)) if o == 1.0 => e,
        (Expr::Const(m), e) | (e, Expr::Const(m)) if m == -1.0 => neg(e),
        (a, b) => Expr::Binary(BinaryOp::Mul, Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) if y != 0.0 => Expr::Const(x / y),
        (Expr::Const(z), _) if z == 0.0 => Expr::Const(0.0),
        (e, Expr::Const(o)) if o == 1.0 => e,
        (a, b) => Expr::Binary(BinaryOp::Div, Box::new(a), Box::new(b)),
    }
}

fn pow(base: Expr, k: u32) -> Expr {
    match (base, k) {
        (_, 0) => Expr::Const(1.0),
        (b, 1) => b,
        (Expr::Const(c), k) => Expr::Const(powi(c, k)),
        (b, k) => Expr::Pow(Box::new(b), k),
    }
}

impl FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

/// Canonical printer. Its output parses back to a structurally equal tree
/// for every tree produced by the parser.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) if *c == PI => write!(f, "pi"),
            Expr::Const(c) if c.is_sign_negative() => write!(f, "-{}", -c),
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var => write!(f, "w"),
            Expr::Unary(UnaryOp::Neg, child) => {
                write!(f, "-")?;
                match child.as_ref() {
                    Expr::Pow(base, k) => {
                        base.fmt_atom(f)?;
                        write!(f, "^{k}")
                    }
                    c => c.fmt_atom(f),
                }
            }
            Expr::Unary(op, child) => {
                let name = match op {
                    UnaryOp::Sin => "sin",
                    UnaryOp::Cos => "cos",
                    UnaryOp::Atan => "atan",
                    UnaryOp::Neg => unreachable!(),
                };
                write!(f, "{name}({child})")
            }
            Expr::Binary(op, lhs, rhs) => {
                let (sym, prec) = match op {
                    BinaryOp::Add => ('+', 1),
                    BinaryOp::Sub => ('-', 1),
                    BinaryOp::Mul => ('*', 2),
                    BinaryOp::Div => ('/', 2),
                };
                if lhs.precedence() < prec {
                    write!(f, "({lhs})")?;
                } else {
                    write!(f, "{lhs}")?;
                }
                write!(f, " {sym} ")?;
                if rhs.precedence() <= prec {
                    write!(f, "({rhs})")
                } else {
                    write!(f, "{rhs}")
                }
            }
            Expr::Pow(base, k) => {
                base.fmt_atom(f)?;
                write!(f, "^{k}")
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, kind: ParseErrorKind) -> ParseError {
        ParseError { kind, offset: self.pos }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn unexpected(&mut self) -> ParseError {
        match self.peek() {
            None => self.error(ParseErrorKind::UnexpectedEnd),
            Some(_) => {
                let c = std::str::from_utf8(&self.src[self.pos..])
                    .ok()
                    .and_then(|s| s.chars().next())
                    .unwrap_or('\u{fffd}');
                self.error(ParseErrorKind::UnexpectedChar(c))
            }
        }
    }

    fn expect(&mut self, byte: u8) -> Result<(), ParseError> {
        if self.peek() == Some(byte) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinaryOp::Add,
                Some(b'-') => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinaryOp::Mul,
                Some(b'/') => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let negate = if self.peek() == Some(b'-') {
            self.pos += 1;
            true
        } else {
            false
        };
        let mut base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let k = self.exponent()?;
            base = Expr::Pow(Box::new(base), k);
        }
        Ok(if negate {
            Expr::Unary(UnaryOp::Neg, Box::new(base))
        } else {
            base
        })
    }

    fn exponent(&mut self) -> Result<u32, ParseError> {
        self.skip_ws();
        let start = self.pos;
        match self.src.get(self.pos) {
            Some(c) if c.is_ascii_digit() => {}
            Some(b'-' | b'.') => return Err(self.error(ParseErrorKind::NonIntegerExponent)),
            _ => return Err(self.unexpected()),
        }
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.src.get(self.pos) == Some(&b'.') {
            return Err(ParseError { kind: ParseErrorKind::NonIntegerExponent, offset: start });
        }
        let digits = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        digits
            .parse()
            .map_err(|_| ParseError { kind: ParseErrorKind::InvalidNumber, offset: start })
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let ident = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii ident");
                let op = match ident {
                    "w" => return Ok(Expr::Var),
                    "pi" => return Ok(Expr::Const(PI)),
                    "sin" => UnaryOp::Sin,
                    "cos" => UnaryOp::Cos,
                    "atan" => UnaryOp::Atan,
                    other => {
                        return Err(ParseError {
                            kind: ParseErrorKind::UnknownIdentifier(other.to_string()),
                            offset: start,
                        })
                    }
                };
                self.expect(b'(')?;
                let arg = self.expr()?;
                self.expect(b')')?;
                Ok(Expr::Unary(op, Box::new(arg)))
            }
            _ => Err(self.unexpected()),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii number");
        text.parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| ParseError { kind: ParseErrorKind::InvalidNumber, offset: start })
    }
}
