//! A small expression language for branch maps, roofs, potentials and
//! observables.
//!
//! Expressions are functions of `x`. Observables of the suspension flow may
//! also mention the height coordinate `u`; see [`parse_observable`].

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::ExprError;

/// Nesting limit for parentheses and unary minus. Keeps the parser total.
const MAX_DEPTH: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    U,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Pi,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

#[allow(clippy::should_implement_trait)]
impl Expr {
    /// Literal constant. Negative values become `Neg(Num(|c|))` so that
    /// printing and parsing agree structurally.
    pub fn num(c: f64) -> Expr {
        if c < 0.0 {
            Expr::Neg(Box::new(Expr::Num(-c)))
        } else {
            Expr::Num(c)
        }
    }

    pub fn x() -> Expr {
        Expr::Var(Var::X)
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::Sub(Box::new(a), Box::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Box::new(a), Box::new(b))
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::Div(Box::new(a), Box::new(b))
    }

    pub fn neg(a: Expr) -> Expr {
        Expr::Neg(Box::new(a))
    }

    pub fn pow(a: Expr, k: i32) -> Expr {
        Expr::Pow(Box::new(a), k)
    }

    pub fn call(f: Func, a: Expr) -> Expr {
        Expr::Call(f, Box::new(a))
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Var(_) | Expr::Pi => 1,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => 1 + a.depth(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    pub fn mentions(&self, var: Var) -> bool {
        match self {
            Expr::Var(v) => *v == var,
            Expr::Num(_) | Expr::Pi => false,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.mentions(var),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => a.mentions(var) || b.mentions(var),
        }
    }

    /// Evaluate at `x` (with `u = 0`).
    pub fn eval(&self, x: f64) -> Result<f64, ExprError> {
        self.eval2(x, 0.0)
    }

    pub fn eval2(&self, x: f64, u: f64) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::Num(c) => *c,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::U) => u,
            Expr::Pi => core::f64::consts::PI,
            Expr::Neg(a) => -a.eval2(x, u)?,
            Expr::Add(a, b) => a.eval2(x, u)? + b.eval2(x, u)?,
            Expr::Sub(a, b) => a.eval2(x, u)? - b.eval2(x, u)?,
            Expr::Mul(a, b) => a.eval2(x, u)? * b.eval2(x, u)?,
            Expr::Div(a, b) => a.eval2(x, u)? / b.eval2(x, u)?,
            Expr::Pow(a, k) => a.eval2(x, u)?.powi(*k),
            Expr::Call(f, a) => {
                let v = a.eval2(x, u)?;
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Log => {
                        if !(v > 0.0) {
                            return Err(ExprError::Domain { arg: v });
                        }
                        v.ln()
                    }
                }
            }
        })
    }

    /// Symbolic derivative with respect to `x`. No simplification.
    pub fn differentiate(&self) -> Expr {
        match self {
            Expr::Num(_) | Expr::Pi | Expr::Var(Var::U) => Expr::Num(0.0),
            Expr::Var(Var::X) => Expr::Num(1.0),
            Expr::Neg(a) => Expr::neg(a.differentiate()),
            Expr::Add(a, b) => Expr::add(a.differentiate(), b.differentiate()),
            Expr::Sub(a, b) => Expr::sub(a.differentiate(), b.differentiate()),
            Expr::Mul(a, b) => Expr::add(Expr::mul(a.differentiate(), (**b).clone()), Expr::mul((**a).clone(), b.differentiate())),
            Expr::Div(a, b) => Expr::div(
                Expr::sub(Expr::mul(a.differentiate(), (**b).clone()), Expr::mul((**a).clone(), b.differentiate())),
                Expr::pow((**b).clone(), 2),
            ),
            Expr::Pow(a, k) => {
                if *k == 0 {
                    Expr::Num(0.0)
                } else {
                    Expr::mul(Expr::mul(Expr::num(*k as f64), Expr::pow((**a).clone(), k - 1)), a.differentiate())
                }
            }
            Expr::Call(f, a) => {
                let inner = (**a).clone();
                let da = a.differentiate();
                match f {
                    Func::Sin => Expr::mul(Expr::call(Func::Cos, inner), da),
                    Func::Cos => Expr::neg(Expr::mul(Expr::call(Func::Sin, inner), da)),
                    Func::Exp => Expr::mul(Expr::call(Func::Exp, inner), da),
                    Func::Log => Expr::div(da, inner),
                }
            }
        }
    }

    /// Flatten into a stack program for fast repeated evaluation.
    pub fn compile(&self) -> Program {
        let mut ops = Vec::new();
        emit(self, &mut ops);
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        for op in &ops {
            match op {
                Op::Const(_) | Op::X | Op::U => depth += 1,
                Op::Add | Op::Sub | Op::Mul | Op::Div => depth -= 1,
                _ => {}
            }
            max_depth = max_depth.max(depth);
        }
        Program { ops, max_stack: max_depth }
    }
}

fn emit(e: &Expr, ops: &mut Vec<Op>) {
    match e {
        Expr::Num(c) => ops.push(Op::Const(*c)),
        Expr::Pi => ops.push(Op::Const(core::f64::consts::PI)),
        Expr::Var(Var::X) => ops.push(Op::X),
        Expr::Var(Var::U) => ops.push(Op::U),
        Expr::Neg(a) => {
            emit(a, ops);
            ops.push(Op::Neg);
        }
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
            emit(a, ops);
            emit(b, ops);
            ops.push(match e {
                Expr::Add(..) => Op::Add,
                Expr::Sub(..) => Op::Sub,
                Expr::Mul(..) => Op::Mul,
                _ => Op::Div,
            });
        }
        Expr::Pow(a, k) => {
            emit(a, ops);
            ops.push(Op::Pow(*k));
        }
        Expr::Call(f, a) => {
            emit(a, ops);
            ops.push(match f {
                Func::Sin => Op::Sin,
                Func::Cos => Op::Cos,
                Func::Exp => Op::Exp,
                Func::Log => Op::Log,
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    X,
    U,
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Pow(i32),
    Sin,
    Cos,
    Exp,
    Log,
}

/// Compiled form of an [`Expr`]. `log` of a non-positive value yields NaN
/// or `-inf` instead of an error; use [`Expr::eval`] for checked evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    ops: Vec<Op>,
    max_stack: usize,
}

impl Program {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.eval2(x, 0.0)
    }

    pub fn eval2(&self, x: f64, u: f64) -> f64 {
        if self.max_stack <= 32 {
            let mut stack = [0.0f64; 32];
            self.run(x, u, &mut stack)
        } else {
            let mut stack = alloc::vec![0.0f64; self.max_stack];
            self.run(x, u, &mut stack)
        }
    }

    fn run(&self, x: f64, u: f64, stack: &mut [f64]) -> f64 {
        let mut sp = 0usize;
        for op in &self.ops {
            match *op {
                Op::Const(c) => {
                    stack[sp] = c;
                    sp += 1;
                }
                Op::X => {
                    stack[sp] = x;
                    sp += 1;
                }
                Op::U => {
                    stack[sp] = u;
                    sp += 1;
                }
                Op::Neg => stack[sp - 1] = -stack[sp - 1],
                Op::Add => {
                    sp -= 1;
                    stack[sp - 1] += stack[sp];
                }
                Op::Sub => {
                    sp -= 1;
                    stack[sp - 1] -= stack[sp];
                }
                Op::Mul => {
                    sp -= 1;
                    stack[sp - 1] *= stack[sp];
                }
                Op::Div => {
                    sp -= 1;
                    stack[sp - 1] /= stack[sp];
                }
                Op::Pow(k) => stack[sp - 1] = stack[sp - 1].powi(k),
                Op::Sin => stack[sp - 1] = stack[sp - 1].sin(),
                Op::Cos => stack[sp - 1] = stack[sp - 1].cos(),
                Op::Exp => stack[sp - 1] = stack[sp - 1].exp(),
                Op::Log => stack[sp - 1] = stack[sp - 1].ln(),
            }
        }
        stack[0]
    }

    /// True when the program is a single constant.
    pub fn as_constant(&self) -> Option<f64> {
        match self.ops.as_slice() {
            [Op::Const(c)] => Some(*c),
            _ => None,
        }
    }
}

// Printing. Binary operators are left associative, so a right operand of
// equal precedence needs parentheses.

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) | Expr::Div(..) => 2,
        Expr::Neg(_) => 3,
        Expr::Pow(..) => 4,
        _ => 5,
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if prec(e) < min {
        write!(f, "({})", e)
    } else {
        write!(f, "{}", e)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(c) => {
                if *c < 0.0 || c.is_sign_negative() {
                    write!(f, "(-{})", -c)
                } else {
                    write!(f, "{}", c)
                }
            }
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Var(Var::U) => f.write_str("u"),
            Expr::Pi => f.write_str("pi"),
            Expr::Neg(a) => {
                f.write_str("-")?;
                write_child(f, a, 3)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                write_child(f, a, 1)?;
                f.write_str(if matches!(self, Expr::Add(..)) { "+" } else { "-" })?;
                write_child(f, b, 2)
            }
            Expr::Mul(a, b) | Expr::Div(a, b) => {
                write_child(f, a, 2)?;
                f.write_str(if matches!(self, Expr::Mul(..)) { "*" } else { "/" })?;
                write_child(f, b, 3)
            }
            Expr::Pow(a, k) => {
                write_child(f, a, 5)?;
                write!(f, "^{}", k)
            }
            Expr::Call(func, a) => write!(f, "{}({})", func.name(), a),
        }
    }
}

/// Parse an expression in `x`.
pub fn parse(src: &str) -> Result<Expr, ExprError> {
    Parser::new(src, false).parse_all()
}

/// Parse an expression that may also mention the flow height `u`.
pub fn parse_observable(src: &str) -> Result<Expr, ExprError> {
    Parser::new(src, true).parse_all()
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    depth: usize,
    allow_u: bool,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, allow_u: bool) -> Self {
        Parser { src: src.as_bytes(), pos: 0, depth: 0, allow_u }
    }

    // Offsets in errors are 1-based byte columns.
    fn err(&self, at: usize, msg: &str) -> ExprError {
        ExprError::Syntax { offset: at + 1, message: msg.to_string() }
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

    fn parse_all(mut self) -> Result<Expr, ExprError> {
        let e = self.expr()?;
        match self.peek() {
            None => Ok(e),
            Some(c) => Err(self.err(self.pos, &unexpected(c))),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Expr::add(lhs, self.term()?);
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Expr::sub(lhs, self.term()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Expr::mul(lhs, self.unary()?);
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Expr::div(lhs, self.unary()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    // unary minus binds looser than `^`: -x^2 is -(x^2)
    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(b'-') {
            self.enter()?;
            self.pos += 1;
            let inner = self.unary()?;
            self.depth -= 1;
            return Ok(Expr::neg(inner));
        }
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let k = self.integer()?;
            return Ok(Expr::pow(base, k));
        }
        Ok(base)
    }

    fn enter(&mut self) -> Result<(), ExprError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.err(self.pos, "nesting too deep"));
        }
        Ok(())
    }

    fn integer(&mut self) -> Result<i32, ExprError> {
        self.skip_ws();
        let start = self.pos;
        let mut neg = false;
        if self.src.get(self.pos) == Some(&b'-') {
            neg = true;
            self.pos += 1;
        }
        let digits = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == digits {
            return Err(self.err(self.pos, "expected integer exponent"));
        }
        let text = core::str::from_utf8(&self.src[digits..self.pos]).unwrap_or("");
        let k: i32 = text.parse().map_err(|_| self.err(start, "exponent out of range"))?;
        Ok(if neg { -k } else { k })
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let c = match self.peek() {
            Some(c) => c,
            None => return Err(self.err(self.pos, "unexpected end of input")),
        };
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c == b'(' {
            self.enter()?;
            self.pos += 1;
            let e = self.expr()?;
            if self.peek() != Some(b')') {
                return Err(self.err(self.pos, "expected ')'"));
            }
            self.pos += 1;
            self.depth -= 1;
            return Ok(e);
        }
        if c.is_ascii_alphabetic() {
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                self.pos += 1;
            }
            let name = core::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
            let func = match name {
                "x" => return Ok(Expr::Var(Var::X)),
                "u" if self.allow_u => return Ok(Expr::Var(Var::U)),
                "pi" => return Ok(Expr::Pi),
                "sin" => Func::Sin,
                "cos" => Func::Cos,
                "exp" => Func::Exp,
                "log" => Func::Log,
                _ => return Err(ExprError::UnknownIdentifier { name: name.to_string(), offset: start + 1 }),
            };
            if self.peek() != Some(b'(') {
                return Err(self.err(self.pos, "expected '(' after function name"));
            }
            self.enter()?;
            self.pos += 1;
            let arg = self.expr()?;
            if self.peek() != Some(b')') {
                return Err(self.err(self.pos, "expected ')'"));
            }
            self.pos += 1;
            self.depth -= 1;
            return Ok(Expr::call(func, arg));
        }
        Err(self.err(self.pos, &unexpected(c)))
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let s = self.src;
        let mut i = self.pos;
        while i < s.len() && s[i].is_ascii_digit() {
            i += 1;
        }
        if i < s.len() && s[i] == b'.' {
            i += 1;
            while i < s.len() && s[i].is_ascii_digit() {
                i += 1;
            }
        }
        if i < s.len() && (s[i] == b'e' || s[i] == b'E') {
            let mut j = i + 1;
            if j < s.len() && (s[j] == b'+' || s[j] == b'-') {
                j += 1;
            }
            let exp_digits = j;
            while j < s.len() && s[j].is_ascii_digit() {
                j += 1;
            }
            if j > exp_digits {
                i = j;
            }
        }
        let text = core::str::from_utf8(&s[start..i]).unwrap_or("");
        let value: f64 = text.parse().map_err(|_| self.err(start, "malformed number"))?;
        self.pos = i;
        Ok(Expr::Num(value))
    }
}

fn unexpected(c: u8) -> String {
    if c.is_ascii_graphic() {
        alloc::format!("unexpected character '{}'", c as char)
    } else {
        alloc::format!("unexpected byte 0x{:02x}", c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn n(c: f64) -> Expr {
        Expr::Num(c)
    }

    #[test]
    fn grammar_shapes() {
        assert_eq!(parse("2*x").unwrap(), Expr::mul(n(2.0), Expr::x()));
        let want = Expr::div(Expr::add(n(2.0), Expr::call(Func::Cos, Expr::mul(Expr::mul(n(2.0), Expr::Pi), Expr::x()))), n(3.0));
        assert_eq!(parse("(2+cos(2*pi*x))/3").unwrap(), want);
    }

    #[test]
    fn syntax_error_offset() {
        match parse("2*x +") {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("{:?}", other),
        }
        assert!(matches!(parse("2*y"), Err(ExprError::UnknownIdentifier { offset: 3, .. })));
        assert!(matches!(parse("u+1"), Err(ExprError::UnknownIdentifier { .. })));
        assert!(parse_observable("cos(2*pi*u)+x").is_ok());
    }

    #[test]
    fn unary_minus_below_power() {
        assert_eq!(parse("-x^2").unwrap(), Expr::neg(Expr::pow(Expr::x(), 2)));
        assert_eq!(parse("(-x)^2").unwrap(), Expr::pow(Expr::neg(Expr::x()), 2));
        assert_eq!(parse("-x^2").unwrap().eval(3.0).unwrap(), -9.0);
        assert_eq!(parse("x^-1").unwrap().eval(4.0).unwrap(), 0.25);
    }

    #[test]
    fn evaluation() {
        assert_eq!(parse("2*x").unwrap().eval(0.25).unwrap(), 0.5);
        assert!((parse("cos(2*pi*x)").unwrap().eval(0.5).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(parse("log(x)").unwrap().eval(0.0), Err(ExprError::Domain { .. })));
        assert_eq!(parse("1.5e2").unwrap().eval(0.0).unwrap(), 150.0);
    }

    #[test]
    fn derivatives() {
        let d = parse("2*x").unwrap().differentiate();
        assert_eq!(d.eval(0.7).unwrap(), 2.0);
        let d = parse("cos(2*pi*x)").unwrap().differentiate();
        assert!((d.eval(0.25).unwrap() + 2.0 * PI).abs() < 1e-12);
        let e = parse("(2+cos(2*pi*x))/3").unwrap();
        let d = e.differentiate().eval(0.1).unwrap();
        let h = 1e-5;
        let fd = (e.eval(0.1 + h).unwrap() - e.eval(0.1 - h).unwrap()) / (2.0 * h);
        assert!((d - fd).abs() <= 1e-6 * d.abs());
    }

    #[test]
    fn compiled_matches_tree() {
        let e = parse("exp(sin(3*x))/(2+x^2) - log(1+x)*pi").unwrap();
        let p = e.compile();
        for i in 0..50 {
            let x = i as f64 / 49.0;
            assert_eq!(p.eval(x), e.eval(x).unwrap());
        }
        assert_eq!(parse("0.5").unwrap().compile().as_constant(), Some(0.5));
    }

    #[test]
    fn printing_round_trips() {
        for src in ["2*x", "-x^2", "(-x)^2", "a", "x-(x-1)", "x/(x*2)", "--x", "2*-x", "x^-3"] {
            if let Ok(e) = parse(src) {
                let back = parse(&e.to_string()).unwrap();
                assert_eq!(back, e, "{}", src);
            }
        }
        let e = Expr::mul(Expr::num(-core::f64::consts::LN_2), Expr::x());
        assert_eq!(parse(&e.to_string()).unwrap(), e);
    }

    #[test]
    fn deep_nesting_is_an_error() {
        let src = "(".repeat(10_000);
        assert!(matches!(parse(&src), Err(ExprError::Syntax { .. })));
        let src = "-".repeat(10_000) + "x";
        assert!(matches!(parse(&src), Err(ExprError::Syntax { .. })));
    }
}
