//! A small arithmetic expression language over the torus coordinates.
//!
//! Grammar: real literals, the variables `x`, `y`, `z`, the constant `pi`
//! (or `π`), binary `+ - * /`, unary minus, `sin`, `cos`, `exp` and
//! parentheses. Juxtaposition multiplies, so `2pi x` reads as `2*pi*x`.
//! Periodicity of an expression on the chosen torus is the caller's
//! responsibility.
//!
//! Expressions are kept as trees so that frame coefficients can be
//! differentiated symbolically.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Arc<Expr>),
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    Sin(Arc<Expr>),
    Cos(Arc<Expr>),
    Exp(Arc<Expr>),
}

use Expr::*;

impl Expr {
    pub fn parse(text: &str) -> Result<Expr> {
        Parser {
            tokens: tokenize(text)?,
            pos: 0,
        }
        .parse_all()
    }

    pub fn constant(c: f64) -> Expr {
        Const(c)
    }

    pub fn var(axis: usize) -> Expr {
        Var(axis)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn eval(&self, p: [f64; 3]) -> f64 {
        match self {
            Const(c) => *c,
            Var(a) => p[*a],
            Neg(e) => -e.eval(p),
            Add(a, b) => a.eval(p) + b.eval(p),
            Sub(a, b) => a.eval(p) - b.eval(p),
            Mul(a, b) => a.eval(p) * b.eval(p),
            Div(a, b) => a.eval(p) / b.eval(p),
            Sin(e) => e.eval(p).sin(),
            Cos(e) => e.eval(p).cos(),
            Exp(e) => e.eval(p).exp(),
        }
    }

    /// Samples the expression at every node; non-finite samples are errors.
    pub fn sample(&self, grid: &Grid) -> Result<ScalarField> {
        let values: Vec<f64> = grid.coords().map(|p| self.eval(p)).collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "expression `{self}` is not finite at node {i}"
            )));
        }
        ScalarField::new(*grid, values)
    }

    /// Highest variable index used plus one.
    pub fn arity(&self) -> usize {
        match self {
            Const(_) => 0,
            Var(a) => a + 1,
            Neg(e) | Sin(e) | Cos(e) | Exp(e) => e.arity(),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => a.arity().max(b.arity()),
        }
    }

    /// Symbolic partial derivative with respect to coordinate `axis`.
    pub fn derivative(&self, axis: usize) -> Expr {
        match self {
            Const(_) => Const(0.0),
            Var(a) => Const(if *a == axis { 1.0 } else { 0.0 }),
            Neg(e) => neg(e.derivative(axis)),
            Add(a, b) => add(a.derivative(axis), b.derivative(axis)),
            Sub(a, b) => sub(a.derivative(axis), b.derivative(axis)),
            Mul(a, b) => add(
                mul(a.derivative(axis), (**b).clone()),
                mul((**a).clone(), b.derivative(axis)),
            ),
            Div(a, b) => div(
                sub(
                    mul(a.derivative(axis), (**b).clone()),
                    mul((**a).clone(), b.derivative(axis)),
                ),
                mul((**b).clone(), (**b).clone()),
            ),
            Sin(e) => mul(cos(e.as_ref().clone()), e.derivative(axis)),
            Cos(e) => neg(mul(sin(e.as_ref().clone()), e.derivative(axis))),
            Exp(e) => mul(self.clone(), e.derivative(axis)),
        }
    }
}

// Smart constructors fold constants and drop additive/multiplicative units
// so iterated symbolic brackets stay small.

pub fn neg(e: Expr) -> Expr {
    match e {
        Const(c) => Const(-c),
        Neg(inner) => (*inner).clone(),
        e => Neg(Arc::new(e)),
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Const(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => Add(Arc::new(a), Arc::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Const(x - y),
        (Some(x), _) if x == 0.0 => neg(b),
        (_, Some(y)) if y == 0.0 => a,
        _ => Sub(Arc::new(a), Arc::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Const(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Const(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        (Some(x), _) if x == -1.0 => neg(b),
        (_, Some(y)) if y == -1.0 => neg(a),
        _ => Mul(Arc::new(a), Arc::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) if y != 0.0 => Const(x / y),
        (Some(x), _) if x == 0.0 => Const(0.0),
        (_, Some(y)) if y == 1.0 => a,
        _ => Div(Arc::new(a), Arc::new(b)),
    }
}

pub fn sin(e: Expr) -> Expr {
    match e {
        Const(c) => Const(c.sin()),
        e => Sin(Arc::new(e)),
    }
}

pub fn cos(e: Expr) -> Expr {
    match e {
        Const(c) => Const(c.cos()),
        e => Cos(Arc::new(e)),
    }
}

pub fn exp(e: Expr) -> Expr {
    match e {
        Const(c) => Const(c.exp()),
        e => Exp(Arc::new(e)),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const(c) => {
                if *c < 0.0 {
                    write!(f, "({c})")
                } else {
                    write!(f, "{c}")
                }
            }
            Var(a) => write!(f, "{}", ["x", "y", "z"][*a]),
            Neg(e) => write!(f, "-({e})"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "{a}*{b}"),
            Div(a, b) => write!(f, "{a}/({b})"),
            Sin(e) => write!(f, "sin({e})"),
            Cos(e) => write!(f, "cos({e})"),
            Exp(e) => write!(f, "exp({e})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    End,
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
}

fn parse_error(column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        column,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<(Token, usize)>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push((Token::Plus, col));
                i += 1
            }
            '-' | '−' => {
                out.push((Token::Minus, col));
                i += 1
            }
            '*' | '·' => {
                out.push((Token::Star, col));
                i += 1
            }
            '/' => {
                out.push((Token::Slash, col));
                i += 1
            }
            '(' => {
                out.push((Token::LParen, col));
                i += 1
            }
            ')' => {
                out.push((Token::RParen, col));
                i += 1
            }
            'π' => {
                out.push((Token::Ident("pi".into()), col));
                i += 1
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let s: String = chars[start..i].iter().collect();
                let v: f64 = s
                    .parse()
                    .map_err(|_| parse_error(col, format!("malformed number `{s}`")))?;
                out.push((Token::Num(v), col));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push((Token::Ident(chars[start..i].iter().collect()), col));
            }
            other => return Err(parse_error(col, format!("unexpected character `{other}`"))),
        }
    }
    out.push((Token::End, chars.len() + 1));
    Ok(out)
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].0
    }

    fn column(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].0.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn parse_all(mut self) -> Result<Expr> {
        let e = self.expr()?;
        match self.peek() {
            Token::End => Ok(e),
            Token::RParen => Err(parse_error(self.column(), "unmatched `)`")),
            t => Err(parse_error(self.column(), format!("unexpected token {t:?}"))),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Token::Plus => {
                    self.bump();
                    lhs = add(lhs, self.term()?);
                }
                Token::Minus => {
                    self.bump();
                    lhs = sub(lhs, self.term()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Token::Star => {
                    self.bump();
                    lhs = mul(lhs, self.unary()?);
                }
                Token::Slash => {
                    self.bump();
                    lhs = div(lhs, self.unary()?);
                }
                Token::Num(_) | Token::Ident(_) | Token::LParen => {
                    lhs = mul(lhs, self.primary()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Token::Minus => {
                self.bump();
                Ok(neg(self.unary()?))
            }
            Token::Plus => {
                self.bump();
                self.unary()
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Expr> {
        let col = self.column();
        match self.bump() {
            Token::Num(v) => Ok(Const(v)),
            Token::LParen => {
                let e = self.expr()?;
                self.expect_rparen(col)?;
                Ok(e)
            }
            Token::Ident(name) => match name.as_str() {
                "x" => Ok(Var(0)),
                "y" => Ok(Var(1)),
                "z" => Ok(Var(2)),
                "pi" => Ok(Const(std::f64::consts::PI)),
                "sin" | "cos" | "exp" => {
                    let open = self.column();
                    if self.bump() != Token::LParen {
                        return Err(parse_error(open, format!("expected `(` after `{name}`")));
                    }
                    let arg = self.expr()?;
                    self.expect_rparen(open)?;
                    Ok(match name.as_str() {
                        "sin" => sin(arg),
                        "cos" => cos(arg),
                        _ => exp(arg),
                    })
                }
                other => Err(parse_error(col, format!("unknown identifier `{other}`"))),
            },
            Token::End => Err(parse_error(col, "unexpected end of input")),
            t => Err(parse_error(col, format!("unexpected token {t:?}"))),
        }
    }

    fn expect_rparen(&mut self, open: usize) -> Result<()> {
        match self.peek() {
            Token::RParen => {
                self.bump();
                Ok(())
            }
            Token::End => Err(parse_error(
                self.column(),
                format!("unexpected end of input: `(` at column {open} is never closed"),
            )),
            t => Err(parse_error(self.column(), format!("expected `)`, found {t:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn parses_and_evaluates() {
        let e = Expr::parse("1 + 0.3*sin(2*pi*z)").unwrap();
        let p = [0.1, 0.2, 0.125];
        assert!((e.eval(p) - (1.0 + 0.3 * (2.0 * PI * 0.125).sin())).abs() < 1e-15);
        assert_eq!(Expr::parse("0").unwrap(), Const(0.0));
        let e = Expr::parse("-x/2 - -y * 3e-1 + exp(cos(x))").unwrap();
        let v = -0.1 / 2.0 + 0.2 * 0.3 + (0.1f64).cos().exp();
        assert!((e.eval(p) - v).abs() < 1e-15);
    }

    #[test]
    fn implicit_multiplication_and_unicode_pi() {
        let a = Expr::parse("sin(2πx)").unwrap();
        let b = Expr::parse("sin(2*pi*x)").unwrap();
        let p = [0.3, 0.0, 0.0];
        assert_eq!(a.eval(p), b.eval(p));
    }

    #[test]
    fn samples_match_closed_form() {
        let g = Grid::new(&[16, 4], &[1.0, 1.0]).unwrap();
        let f = Expr::parse("sin(2*pi*x)").unwrap().sample(&g).unwrap();
        for i in 0..g.len() {
            let x = g.coord(i)[0];
            assert_eq!(f.values()[i], (2.0 * PI * x).sin());
        }
    }

    #[test]
    fn error_positions() {
        match Expr::parse("sin(2*pi*x") {
            Err(Error::Parse { column, message }) => {
                assert_eq!(column, 11);
                assert!(message.contains("end of input"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        match Expr::parse("sin(2πx") {
            Err(Error::Parse { column, .. }) => assert_eq!(column, 8),
            other => panic!("{other:?}"),
        }
        match Expr::parse("1 + $") {
            Err(Error::Parse { column, .. }) => assert_eq!(column, 5),
            other => panic!("{other:?}"),
        }
        match Expr::parse("tan(x)") {
            Err(Error::Parse { column, message }) => {
                assert_eq!(column, 1);
                assert!(message.contains("tan"));
            }
            other => panic!("{other:?}"),
        }
        assert!(Expr::parse("x)").is_err());
        assert!(Expr::parse("").is_err());
        assert!(Expr::parse("2 *").is_err());
    }

    #[test]
    fn derivative_of_frame_coefficient() {
        let s = Expr::parse("sin(2*pi*x)").unwrap();
        let d = s.derivative(0);
        let p = [0.1, 0.0, 0.0];
        assert!((d.eval(p) - 2.0 * PI * (2.0 * PI * 0.1).cos()).abs() < 1e-14);
        assert!(s.derivative(1).is_zero());
        assert!(s.derivative(2).is_zero());
    }

    fn arb_expr() -> impl Strategy<Value = String> {
        let leaf = prop_oneof![
            Just("x".to_string()),
            Just("y".to_string()),
            Just("z".to_string()),
            (-3.0f64..3.0).prop_map(|c| format!("({c:.3})")),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a}*{b}")),
                inner.clone().prop_map(|a| format!("sin({a})")),
                inner.clone().prop_map(|a| format!("cos({a})")),
                inner.prop_map(|a| format!("exp(0.1*{a})")),
            ]
        })
    }

    proptest! {
        #[test]
        fn symbolic_derivative_matches_central_difference(
            src in arb_expr(),
            p in prop::array::uniform3(-1.0f64..1.0),
            axis in 0usize..3,
        ) {
            let e = Expr::parse(&src).unwrap();
            let d = e.derivative(axis).eval(p);
            let h = 1e-5;
            let mut lo = p;
            let mut hi = p;
            lo[axis] -= h;
            hi[axis] += h;
            let fd = (e.eval(hi) - e.eval(lo)) / (2.0 * h);
            prop_assert!((d - fd).abs() <= 1e-5 * (1.0 + d.abs()), "{src}: {d} vs {fd}");
        }

        #[test]
        fn display_round_trips(src in arb_expr(), p in prop::array::uniform3(-1.0f64..1.0)) {
            let e = Expr::parse(&src).unwrap();
            let again = Expr::parse(&e.to_string()).unwrap();
            prop_assert!((e.eval(p) - again.eval(p)).abs() <= 1e-12 * (1.0 + e.eval(p).abs()));
        }
    }
}
