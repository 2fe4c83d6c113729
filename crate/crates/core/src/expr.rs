//! Closed-form scalar expressions over domain coordinates.
//!
//! Grammar (usual precedence, `^` binds tighter than unary minus):
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := atom ('^' integer)*
//! atom    := number | 'pi' | variable | func '(' sum ')' | '(' sum ')'
//! integer := ['-' | '+'] digits | '(' ['-' | '+'] digits ')'
//! ```
//!
//! Variables are `x0 .. x{d-1}`; for `d <= 3` the aliases `x`, `y`, `z` are
//! accepted as well. Functions: `sin cos tanh sinh cosh exp log sqrt`.
//!
//! Evaluation propagates [`Jet2`]s, so every expression yields its exact
//! gradient and Laplacian alongside its value.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use core::fmt;

use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryFn {
    Neg,
    Sin,
    Cos,
    Tanh,
    Sinh,
    Cosh,
    Exp,
    Log,
    Sqrt,
}

impl UnaryFn {
    pub fn name(self) -> &'static str {
        match self {
            UnaryFn::Neg => "neg",
            UnaryFn::Sin => "sin",
            UnaryFn::Cos => "cos",
            UnaryFn::Tanh => "tanh",
            UnaryFn::Sinh => "sinh",
            UnaryFn::Cosh => "cosh",
            UnaryFn::Exp => "exp",
            UnaryFn::Log => "log",
            UnaryFn::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => UnaryFn::Sin,
            "cos" => UnaryFn::Cos,
            "tanh" => UnaryFn::Tanh,
            "sinh" => UnaryFn::Sinh,
            "cosh" => UnaryFn::Cosh,
            "exp" => UnaryFn::Exp,
            "log" => UnaryFn::Log,
            "sqrt" => UnaryFn::Sqrt,
            _ => return None,
        })
    }

    /// `(h(v), h′(v), h″(v))`, or a message when `v` is outside the domain.
    fn derivatives(self, v: f64) -> core::result::Result<(f64, f64, f64), String> {
        Ok(match self {
            UnaryFn::Neg => (-v, -1.0, 0.0),
            UnaryFn::Sin => {
                let (s, c) = (math::sin(v), math::cos(v));
                (s, c, -s)
            }
            UnaryFn::Cos => {
                let (s, c) = (math::sin(v), math::cos(v));
                (c, -s, -c)
            }
            UnaryFn::Tanh => {
                let t = math::tanh(v);
                let d = 1.0 - t * t;
                (t, d, -2.0 * t * d)
            }
            UnaryFn::Sinh => {
                let (s, c) = (math::sinh(v), math::cosh(v));
                (s, c, s)
            }
            UnaryFn::Cosh => {
                let (s, c) = (math::sinh(v), math::cosh(v));
                (c, s, c)
            }
            UnaryFn::Exp => {
                let e = math::exp(v);
                (e, e, e)
            }
            UnaryFn::Log => {
                if v <= 0.0 {
                    return Err(format!("log of non-positive argument {v}"));
                }
                (math::ln(v), 1.0 / v, -1.0 / (v * v))
            }
            UnaryFn::Sqrt => {
                if v <= 0.0 {
                    return Err(format!("sqrt needs a positive argument, got {v}"));
                }
                let r = math::sqrt(v);
                (r, 0.5 / r, -0.25 / (r * v))
            }
        })
    }

    fn value(self, v: f64) -> core::result::Result<f64, String> {
        match self {
            UnaryFn::Sqrt if v == 0.0 => Ok(0.0),
            _ => self.derivatives(v).map(|(h, _, _)| h),
        }
    }
}

/// Expression tree. Immutable once built; evaluation is reentrant.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// Integer power; general powers are written `exp(b*log(a))`.
    Pow(Box<Expr>, i32),
    Unary(UnaryFn, Box<Expr>),
}

impl Expr {
    pub fn parse(text: &str, dim: usize) -> Result<Expr> {
        if text.trim().is_empty() {
            return Err(Error::Syntax {
                offset: 0,
                message: "empty expression".to_string(),
            });
        }
        let mut p = Parser {
            src: text.as_bytes(),
            pos: 0,
            dim,
        };
        let e = p.sum()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    /// One past the largest variable index used, or 0 for closed expressions.
    pub fn arity(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Binary(_, a, b) => a.arity().max(b.arity()),
            Expr::Pow(a, _) | Expr::Unary(_, a) => a.arity(),
        }
    }

    pub fn is_zero_constant(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    /// Replaces every occurrence of `x_axis` with the constant `value`.
    pub fn substitute(&self, axis: usize, value: f64) -> Expr {
        match self {
            Expr::Var(i) if *i == axis => Expr::Const(value),
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Binary(op, a, b) => Expr::Binary(
                *op,
                Box::new(a.substitute(axis, value)),
                Box::new(b.substitute(axis, value)),
            ),
            Expr::Pow(a, n) => Expr::Pow(Box::new(a.substitute(axis, value)), *n),
            Expr::Unary(f, a) => Expr::Unary(*f, Box::new(a.substitute(axis, value))),
        }
    }

    /// Value only.
    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        self.check_dim(point.len())?;
        let mut node = 0;
        self.eval_value(point, &mut node)
    }

    /// Value, gradient and Laplacian at `point`.
    pub fn eval_jet(&self, point: &[f64]) -> Result<Jet2> {
        self.check_dim(point.len())?;
        let mut node = 0;
        self.eval_jet_at(point, &mut node)
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if self.arity() > dim {
            return Err(Error::Shape(format!(
                "expression uses x{} but the point has {} coordinates",
                self.arity() - 1,
                dim
            )));
        }
        Ok(())
    }

    fn eval_value(&self, x: &[f64], node: &mut usize) -> Result<f64> {
        let me = *node;
        *node += 1;
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(i) => Ok(x[*i]),
            Expr::Binary(op, a, b) => {
                let a = a.eval_value(x, node)?;
                let b = b.eval_value(x, node)?;
                Ok(match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(domain(me, "div", "division by zero"));
                        }
                        a / b
                    }
                })
            }
            Expr::Pow(a, n) => {
                let a = a.eval_value(x, node)?;
                if a == 0.0 && *n < 0 {
                    return Err(domain(me, "pow", "zero to a negative power"));
                }
                Ok(math::powi(a, *n))
            }
            Expr::Unary(f, a) => {
                let a = a.eval_value(x, node)?;
                f.value(a).map_err(|m| domain(me, f.name(), &m))
            }
        }
    }

    fn eval_jet_at(&self, x: &[f64], node: &mut usize) -> Result<Jet2> {
        let me = *node;
        *node += 1;
        let d = x.len();
        match self {
            Expr::Const(c) => Ok(Jet2::constant(*c, d)),
            Expr::Var(i) => Ok(Jet2::variable(x[*i], *i, d)),
            Expr::Binary(op, a, b) => {
                let a = a.eval_jet_at(x, node)?;
                let b = b.eval_jet_at(x, node)?;
                Ok(match op {
                    BinOp::Add => &a + &b,
                    BinOp::Sub => &a - &b,
                    BinOp::Mul => &a * &b,
                    BinOp::Div => {
                        let v = b.value;
                        if v == 0.0 {
                            return Err(domain(me, "div", "division by zero"));
                        }
                        let inv = b.compose(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v));
                        let mut q = &a * &inv;
                        q.value = a.value / v;
                        q
                    }
                })
            }
            Expr::Pow(a, n) => {
                let a = a.eval_jet_at(x, node)?;
                let v = a.value;
                if v == 0.0 && *n < 0 {
                    return Err(domain(me, "pow", "zero to a negative power"));
                }
                let n = *n;
                let nf = n as f64;
                let h = math::powi(v, n);
                let dh = if n == 0 { 0.0 } else { nf * math::powi(v, n - 1) };
                let d2h = if n == 0 || n == 1 {
                    0.0
                } else {
                    nf * (nf - 1.0) * math::powi(v, n - 2)
                };
                Ok(a.compose(h, dh, d2h))
            }
            Expr::Unary(f, a) => {
                let a = a.eval_jet_at(x, node)?;
                let (h, dh, d2h) = f.derivatives(a.value).map_err(|m| domain(me, f.name(), &m))?;
                Ok(a.compose(h, dh, d2h))
            }
        }
    }
}

fn domain(node: usize, op: &'static str, message: &str) -> Error {
    Error::Domain {
        node,
        op,
        message: message.to_string(),
    }
}

/// Canonical, fully parenthesised form; parsing it yields the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) if *c < 0.0 => write!(f, "(-{:?})", -c),
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var(i) => write!(f, "x{i}"),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Pow(a, n) if *n < 0 => write!(f, "({a}^({n}))"),
            Expr::Pow(a, n) => write!(f, "({a}^{n})"),
            Expr::Unary(UnaryFn::Neg, a) => write!(f, "(-{a})"),
            Expr::Unary(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
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

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", c as char)))
        }
    }

    fn sum(&mut self) -> Result<Expr> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            let inner = self.unary()?;
            return Ok(Expr::Unary(UnaryFn::Neg, Box::new(inner)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let mut base = self.atom()?;
        while self.eat(b'^') {
            let n = self.integer_exponent()?;
            base = Expr::Pow(Box::new(base), n);
        }
        Ok(base)
    }

    fn integer_exponent(&mut self) -> Result<i32> {
        let paren = self.eat(b'(');
        let negative = if self.eat(b'-') {
            true
        } else {
            self.eat(b'+');
            false
        };
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            self.pos = start;
            return Err(self.error("exponent must be an integer constant"));
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'.' | b'e' | b'E') {
            return Err(self.error("exponent must be an integer constant"));
        }
        let digits = core::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        let magnitude: i32 = digits.parse().map_err(|_| Error::Syntax {
            offset: start,
            message: "exponent out of range".to_string(),
        })?;
        if paren {
            self.expect(b')')?;
        }
        Ok(if negative { -magnitude } else { magnitude })
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.sum()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(c) => Err(self.error(&format!("unexpected character `{}`", c as char))),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            digits(self);
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let mark = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            let exp_start = self.pos;
            digits(self);
            if exp_start == self.pos {
                self.pos = mark;
                return Err(self.error("malformed exponent in number"));
            }
        }
        let text = core::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        text.parse::<f64>().map(Expr::Const).map_err(|_| Error::Syntax {
            offset: start,
            message: format!("malformed number `{text}`"),
        })
    }

    fn identifier(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = core::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        if name == "pi" {
            return Ok(Expr::Const(core::f64::consts::PI));
        }
        if let Some(func) = UnaryFn::from_name(name) {
            self.expect(b'(')?;
            let arg = self.sum()?;
            self.expect(b')')?;
            return Ok(Expr::Unary(func, Box::new(arg)));
        }
        let index = match name {
            "x" if self.dim <= 3 => Some(0),
            "y" if self.dim <= 3 => Some(1),
            "z" if self.dim <= 3 => Some(2),
            _ => name
                .strip_prefix('x')
                .filter(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()))
                .and_then(|s| s.parse::<usize>().ok()),
        };
        match index {
            Some(index) if index < self.dim => Ok(Expr::Var(index)),
            Some(index) => Err(Error::VariableOutOfRange {
                offset: start,
                index,
                dim: self.dim,
            }),
            None => Err(Error::UnknownIdentifier {
                offset: start,
                name: name.to_string(),
            }),
        }
    }
}
