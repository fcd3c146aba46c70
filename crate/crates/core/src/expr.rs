//! A small expression language for symmetric speed functions.
//!
//! Expressions are built from real literals, the four arithmetic operators, powers with a
//! constant exponent, and symmetric atoms only:
//!
//! * `S1` .. `Sn` - elementary symmetric polynomials of the principal curvatures
//! * `H` - `S1 / n`
//! * `K` - `Sn`, the Gauss curvature
//! * `n` - the dimension, as a constant
//!
//! ```text
//! expr     := term (("+" | "-") term)*
//! term     := unary (("*" | "/") unary)*
//! unary    := "-" unary | power
//! power    := primary ("^" exponent)?
//! primary  := number | atom | "(" expr ")"
//! exponent := "-"? number | "(" expr ")"        ; must not contain curvature atoms
//! atom     := "S" digit+ | "H" | "K" | "n"
//! ```
//!
//! Because raw curvatures cannot be named, every expression is symmetric by construction.

use crate::real::{halton_point, Real};
use crate::symmetric::{elementary_symmetric, elementary_symmetric_split};
use std::fmt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("parse error at offset {offset}: expected {}, found {found}", expected.join(" | "))]
    Parse {
        offset: usize,
        expected: Vec<&'static str>,
        found: String,
    },
    #[error(
        "atom S{k} at offset {offset} is out of range for dimension {dim} (valid: S1..S{dim})"
    )]
    Dimension { offset: usize, k: usize, dim: usize },
    #[error("dimension must be at least 2, got {0}")]
    BadDimension(usize),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("expression is not homogeneous: degree estimates spread by {spread:e}")]
    NotHomogeneous { spread: f64 },
    #[error("expression has non-positive homogeneity degree {0}")]
    NonPositiveDegree(f64),
}

impl ExprError {
    /// Byte offset into the source, for errors that have one.
    pub fn offset(&self) -> Option<usize> {
        match self {
            ExprError::Parse { offset, .. } | ExprError::Dimension { offset, .. } => Some(*offset),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Atom {
    /// Elementary symmetric polynomial of the given order.
    S(usize),
    H,
    K,
    N,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Atom(Atom),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Pow(Box<Node>, f64),
}

/// A parsed speed expression bound to a dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedExpr {
    ast: Node,
    dim: usize,
    source: String,
}

impl SpeedExpr {
    pub fn ast(&self) -> &Node {
        &self.ast
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Evaluates at an arbitrary curvature vector of length `dim`.
    pub fn eval<T: Real>(&self, z: &[T]) -> Result<T, ExprError> {
        if z.len() != self.dim {
            return Err(ExprError::Domain(format!(
                "expected {} curvatures, got {}",
                self.dim,
                z.len()
            )));
        }
        let e = elementary_symmetric(z);
        self.finish(eval_node(&self.ast, &e, self.dim)?)
    }

    /// Evaluates at `(x, y, ..., y)` without materialising the vector.
    pub fn eval_split<T: Real>(&self, x: T, y: T) -> Result<T, ExprError> {
        let m = self.dim - 1;
        let e: Vec<T> = (0..=self.dim)
            .map(|k| elementary_symmetric_split(k, x, y, m))
            .collect();
        self.finish(eval_node(&self.ast, &e, self.dim)?)
    }

    fn finish<T: Real>(&self, v: T) -> Result<T, ExprError> {
        if !v.is_finite() {
            return Err(ExprError::Domain(format!("value is not finite ({v})")));
        }
        if v <= T::zero() {
            return Err(ExprError::Domain(format!("value is not positive ({v})")));
        }
        Ok(v)
    }
}

impl fmt::Display for SpeedExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.ast)
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(v) => write!(f, "{v}"),
            Node::Atom(Atom::S(k)) => write!(f, "S{k}"),
            Node::Atom(Atom::H) => write!(f, "H"),
            Node::Atom(Atom::K) => write!(f, "K"),
            Node::Atom(Atom::N) => write!(f, "n"),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Bin(op, a, b) => {
                let c = match op {
                    BinOp::Add => '+',
                    BinOp::Sub => '-',
                    BinOp::Mul => '*',
                    BinOp::Div => '/',
                };
                write!(f, "({a} {c} {b})")
            }
            Node::Pow(a, p) => write!(f, "{a}^({p})"),
        }
    }
}

fn eval_node<T: Real>(node: &Node, e: &[T], dim: usize) -> Result<T, ExprError> {
    let v = match node {
        Node::Num(v) => T::lit(*v),
        Node::Atom(Atom::S(k)) => e[*k],
        Node::Atom(Atom::H) => e[1] / T::from_usize(dim).unwrap(),
        Node::Atom(Atom::K) => e[dim],
        Node::Atom(Atom::N) => T::from_usize(dim).unwrap(),
        Node::Neg(a) => -eval_node(a, e, dim)?,
        Node::Bin(op, a, b) => {
            let a = eval_node(a, e, dim)?;
            let b = eval_node(b, e, dim)?;
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b == T::zero() {
                        return Err(ExprError::Domain("division by zero".into()));
                    }
                    a / b
                }
            }
        }
        Node::Pow(a, p) => {
            let base = eval_node(a, e, dim)?;
            if base < T::zero() && p.fract() != 0.0 {
                return Err(ExprError::Domain(format!(
                    "fractional power {p} of negative value {base}"
                )));
            }
            if base == T::zero() && *p < 0.0 {
                return Err(ExprError::Domain("negative power of zero".into()));
            }
            if p.fract() == 0.0 && p.abs() < 64.0 {
                base.powi(*p as i32)
            } else {
                base.powf(T::lit(*p))
            }
        }
    };
    if v.is_nan() {
        return Err(ExprError::Domain("intermediate value is NaN".into()));
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok {
    Num(f64),
    Atom(Atom),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Atom(Atom::S(k)) => format!("atom S{k}"),
            Tok::Atom(Atom::H) => "atom H".into(),
            Tok::Atom(Atom::K) => "atom K".into(),
            Tok::Atom(Atom::N) => "atom n".into(),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Caret => "'^'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::End => "end of input".into(),
        }
    }
}

const OPERAND: &[&str] = &["number", "atom", "'('", "'-'"];

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'H' => Tok::Atom(Atom::H),
            b'K' => Tok::Atom(Atom::K),
            b'n' => Tok::Atom(Atom::N),
            b'S' => {
                let mut j = i + 1;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j == i + 1 {
                    return Err(ExprError::Parse {
                        offset: j,
                        expected: vec!["digit"],
                        found: found_at(src, j),
                    });
                }
                let k: usize = src[i + 1..j].parse().map_err(|_| ExprError::Parse {
                    offset: i + 1,
                    expected: vec!["small integer"],
                    found: src[i + 1..j].to_string(),
                })?;
                i = j;
                out.push((Tok::Atom(Atom::S(k)), start));
                continue;
            }
            b'0'..=b'9' | b'.' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_digit() || bytes[j] == b'.') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    let digits = k;
                    while k < bytes.len() && bytes[k].is_ascii_digit() {
                        k += 1;
                    }
                    if k > digits {
                        j = k;
                    }
                }
                let text = &src[i..j];
                let v: f64 = text.parse().map_err(|_| ExprError::Parse {
                    offset: i,
                    expected: vec!["number"],
                    found: format!("'{text}'"),
                })?;
                i = j;
                out.push((Tok::Num(v), start));
                continue;
            }
            _ => {
                return Err(ExprError::Parse {
                    offset: i,
                    expected: vec!["number", "atom", "operator", "'('", "')'"],
                    found: found_at(src, i),
                })
            }
        };
        i += 1;
        out.push((tok, start));
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

fn found_at(src: &str, offset: usize) -> String {
    match src[offset..].chars().next() {
        Some(c) => format!("'{c}'"),
        None => "end of input".into(),
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> Tok {
        self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos];
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail(&self, expected: &[&'static str]) -> ExprError {
        ExprError::Parse {
            offset: self.offset(),
            expected: expected.to_vec(),
            found: self.peek().describe(),
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.peek() == Tok::Minus {
            self.bump();
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.primary()?;
        if self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let p = self.exponent()?;
        Ok(Node::Pow(Box::new(base), p))
    }

    fn exponent(&mut self) -> Result<f64, ExprError> {
        match self.peek() {
            Tok::Num(v) => {
                self.bump();
                Ok(v)
            }
            Tok::Minus => {
                self.bump();
                match self.peek() {
                    Tok::Num(v) => {
                        self.bump();
                        Ok(-v)
                    }
                    _ => Err(self.fail(&["number"])),
                }
            }
            Tok::LParen => {
                let open = self.offset();
                self.bump();
                let inner = self.expr()?;
                self.expect_rparen()?;
                constant_value(&inner, self.dim).ok_or(ExprError::Parse {
                    offset: open,
                    expected: vec!["constant exponent"],
                    found: "expression with curvature atoms".into(),
                })
            }
            _ => Err(self.fail(&["number", "'-'", "'('"])),
        }
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        let offset = self.offset();
        match self.peek() {
            Tok::Num(v) => {
                self.bump();
                Ok(Node::Num(v))
            }
            Tok::Atom(Atom::S(k)) => {
                self.bump();
                if k == 0 || k > self.dim {
                    return Err(ExprError::Dimension {
                        offset,
                        k,
                        dim: self.dim,
                    });
                }
                Ok(Node::Atom(Atom::S(k)))
            }
            Tok::Atom(a) => {
                self.bump();
                Ok(Node::Atom(a))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            _ => Err(self.fail(OPERAND)),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        if self.peek() == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            Err(self.fail(&["')'", "operator"]))
        }
    }
}

/// Value of a subtree built only from numbers and `n`, if it is one.
fn constant_value(node: &Node, dim: usize) -> Option<f64> {
    match node {
        Node::Num(v) => Some(*v),
        Node::Atom(Atom::N) => Some(dim as f64),
        Node::Atom(_) => None,
        Node::Neg(a) => constant_value(a, dim).map(|v| -v),
        Node::Bin(op, a, b) => {
            let (a, b) = (constant_value(a, dim)?, constant_value(b, dim)?);
            Some(match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
            })
        }
        Node::Pow(a, p) => constant_value(a, dim).map(|v| v.powf(*p)),
    }
}

/// Parses `source` as a speed expression in dimension `dim`.
pub fn parse_speed(source: &str, dim: usize) -> Result<SpeedExpr, ExprError> {
    if dim < 2 {
        return Err(ExprError::BadDimension(dim));
    }
    let toks = lex(source)?;
    let mut p = Parser { toks, pos: 0, dim };
    let ast = p.expr()?;
    if p.peek() != Tok::End {
        return Err(p.fail(&["operator", "end of input"]));
    }
    Ok(SpeedExpr {
        ast,
        dim,
        source: source.to_string(),
    })
}

/// Number of probe points used by [`measure_homogeneity`].
pub const HOMOGENEITY_PROBES: usize = 20;
/// Largest tolerated spread between per-point degree estimates.
pub const HOMOGENEITY_TOL: f64 = 1e-8;

/// Estimates the homogeneity degree from `log2(f(2z) / f(z))` at deterministic probe points.
pub fn measure_homogeneity(expr: &SpeedExpr) -> Result<f64, ExprError> {
    measure_homogeneity_with_scale(expr, 2.0)
}

/// As [`measure_homogeneity`], with an arbitrary scaling factor `lambda > 1`.
pub fn measure_homogeneity_with_scale(expr: &SpeedExpr, lambda: f64) -> Result<f64, ExprError> {
    let mut estimates = Vec::with_capacity(HOMOGENEITY_PROBES);
    for i in 0..HOMOGENEITY_PROBES {
        let z = halton_point(i, expr.dim(), 0.1, 10.0);
        let zl: Vec<f64> = z.iter().map(|v| v * lambda).collect();
        let f0 = expr.eval(&z)?;
        let f1 = expr.eval(&zl)?;
        estimates.push((f1 / f0).ln() / lambda.ln());
    }
    let lo = estimates.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = estimates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo > HOMOGENEITY_TOL {
        return Err(ExprError::NotHomogeneous { spread: hi - lo });
    }
    let alpha = estimates.iter().sum::<f64>() / estimates.len() as f64;
    if alpha <= 0.0 {
        return Err(ExprError::NonPositiveDegree(alpha));
    }
    Ok(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval2(src: &str, dim: usize, z: &[f64]) -> f64 {
        parse_speed(src, dim).unwrap().eval(z).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval2("1 + 2 * 3", 2, &[1.0, 1.0]), 7.0);
        assert_eq!(eval2("(1 + 2) * 3", 2, &[1.0, 1.0]), 9.0);
        assert_eq!(eval2("8 / 4 / 2", 2, &[1.0, 1.0]), 1.0);
        assert_eq!(eval2("10 - 4 - 3", 2, &[1.0, 1.0]), 3.0);
        // power binds tighter than unary minus
        assert_eq!(eval2("10 - -2^2", 2, &[1.0, 1.0]), 14.0);
        assert_eq!(eval2("2 * 3^2", 2, &[1.0, 1.0]), 18.0);
    }

    #[test]
    fn atoms() {
        let z = [2.0, 3.0, 5.0];
        assert_eq!(eval2("S1", 3, &z), 10.0);
        assert_eq!(eval2("S2", 3, &z), 6.0 + 10.0 + 15.0);
        assert_eq!(eval2("S3", 3, &z), 30.0);
        assert_eq!(eval2("K", 3, &z), 30.0);
        assert!((eval2("H", 3, &z) - 10.0 / 3.0).abs() < 1e-15);
        assert_eq!(eval2("n + S1", 3, &z), 13.0);
    }

    #[test]
    fn spec_examples_parse() {
        let e = parse_speed("S1", 2).unwrap();
        assert_eq!(e.eval(&[1.0, 1.0]).unwrap(), 2.0);
        let q1 = parse_speed("S2 / S1", 3).unwrap();
        assert!((q1.eval(&[1.0f64, 2.0, 3.0]).unwrap() - 11.0 / 6.0).abs() < 1e-15);
        let scal = parse_speed("(2*S2)^0.5", 3).unwrap();
        assert!((scal.eval(&[1.0, 1.0, 1.0]).unwrap() - 6f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn parenthesised_constant_exponent() {
        let e = parse_speed("(S1*K)^(1/3)", 2).unwrap();
        let want = ((2.0 + 3.0) * 6.0f64).powf(1.0 / 3.0);
        assert!((e.eval(&[2.0, 3.0]).unwrap() - want).abs() < 1e-14);
        let g = parse_speed("K^(1/n)", 4).unwrap();
        assert!((g.eval(&[1.0, 2.0, 4.0, 8.0]).unwrap() - 64f64.powf(0.25)).abs() < 1e-14);
        let h = parse_speed("K^-0.5", 2).unwrap();
        assert!((h.eval(&[4.0f64, 1.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn exponent_with_atoms_is_rejected() {
        let err = parse_speed("S1^(S2)", 2).unwrap_err();
        assert_eq!(err.offset(), Some(3));
    }

    #[test]
    fn trailing_operator_reports_offset() {
        let err = parse_speed("S1+", 2).unwrap_err();
        match err {
            ExprError::Parse {
                offset, expected, ..
            } => {
                assert_eq!(offset, 3);
                assert!(expected.contains(&"number"));
                assert!(expected.contains(&"atom"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_inputs() {
        for (src, off) in [
            ("", 0),
            ("S", 1),
            ("(S1", 3),
            ("S1 S2", 3),
            ("k1", 0),
            ("S1 + * S2", 5),
            ("S1)", 2),
        ] {
            let err = parse_speed(src, 2).unwrap_err();
            assert_eq!(err.offset(), Some(off), "{src:?}: {err}");
        }
    }

    #[test]
    fn out_of_range_symmetric_polynomial() {
        assert_eq!(
            parse_speed("S1 + S3", 2).unwrap_err(),
            ExprError::Dimension {
                offset: 5,
                k: 3,
                dim: 2
            }
        );
        assert!(matches!(
            parse_speed("S0", 3),
            Err(ExprError::Dimension { k: 0, .. })
        ));
        assert_eq!(parse_speed("S1", 1), Err(ExprError::BadDimension(1)));
    }

    #[test]
    fn domain_errors_at_evaluation() {
        let e = parse_speed("(S1 - 3*S2)^0.5", 2).unwrap();
        assert!(matches!(e.eval(&[1.0, 1.0]), Err(ExprError::Domain(_))));
        let neg = parse_speed("-S1", 2).unwrap();
        assert!(matches!(neg.eval(&[1.0, 1.0]), Err(ExprError::Domain(_))));
        let zero = parse_speed("S1 / (S1 - S1)", 2).unwrap();
        assert!(matches!(zero.eval(&[1.0, 2.0]), Err(ExprError::Domain(_))));
    }

    #[test]
    fn whitespace_insensitive() {
        let a = parse_speed("  ( 2 *S2 ) ^ 0.5 ", 3).unwrap();
        let b = parse_speed("(2*S2)^0.5", 3).unwrap();
        assert_eq!(a.ast(), b.ast());
    }

    #[test]
    fn split_evaluation_agrees() {
        let e = parse_speed("(S2/S1 + 0.5*H)^1.5 * K^0.1", 4).unwrap();
        let (x, y) = (0.3f64, 1.7);
        let direct = e.eval(&[x, y, y, y]).unwrap();
        let split = e.eval_split(x, y).unwrap();
        assert!((direct - split).abs() < 1e-13 * direct);
    }

    #[test]
    fn homogeneity_degrees() {
        let a = measure_homogeneity(&parse_speed("S1", 2).unwrap()).unwrap();
        assert!((a - 1.0).abs() < 1e-12);
        let k = measure_homogeneity(&parse_speed("S2", 2).unwrap()).unwrap();
        assert!((k - 2.0).abs() < 1e-12);
        assert!(matches!(
            measure_homogeneity(&parse_speed("S1 + S2", 2).unwrap()),
            Err(ExprError::NotHomogeneous { .. })
        ));
        assert!(matches!(
            measure_homogeneity(&parse_speed("S1 / S2", 2).unwrap()),
            Err(ExprError::NonPositiveDegree(_))
        ));
    }

    #[test]
    fn homogeneity_independent_of_scale() {
        for src in ["S1", "(2*S2)^0.5", "K^0.75", "S3/S2", "(S1*K)^(1/3)"] {
            let e = parse_speed(src, 3).unwrap();
            let a2 = measure_homogeneity(&e).unwrap();
            for lambda in [3.0, 7.0] {
                let al = measure_homogeneity_with_scale(&e, lambda).unwrap();
                assert!((al - a2).abs() < 1e-8, "{src}: {al} vs {a2}");
            }
        }
    }

    #[test]
    fn display_round_trips() {
        for src in ["S1 + 2*S2^0.5", "-(K - H)/n", "(S1*K)^(1/3)"] {
            let e = parse_speed(src, 3).unwrap();
            let again = parse_speed(&e.to_string(), 3).unwrap();
            let z = [0.7f64, 1.9, 2.3];
            match (e.eval(&z), again.eval(&z)) {
                (Ok(a), Ok(b)) => assert!((a - b).abs() < 1e-14 * a.abs()),
                (Err(_), Err(_)) => {}
                other => panic!("mismatch {other:?}"),
            }
        }
    }
}
