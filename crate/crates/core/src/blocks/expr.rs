//! Block parameter expressions.
//!
//! Grammar (whitespace insensitive):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := ('+' | '-') unary | power
//! power  := atom ('^' integer)?
//! atom   := number | 's' | '(' expr ')'
//! signs  := '[' expr ((';' | ',') expr)* ']' | expr
//! ```
//!
//! Scalar expressions fold in plain `f64` arithmetic. Once `s` appears the
//! value becomes a ratio of polynomials with ascending coefficients. The
//! placeholder `%s` and the empty string mean "unset".

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lti::{poly_degree, trim_poly};

pub const UNSET_PLACEHOLDER: &str = "%s";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamShape {
    Scalar,
    SignVector,
    RationalInS,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at column {column}: {message}")]
    ExprSyntax { column: usize, message: String },
    #[error("expected {expected:?}, found {found}")]
    WrongShape { expected: ParamShape, found: String },
    #[error("division by zero at column {column}")]
    DivisionByZero { column: usize },
    #[error("expression does not evaluate to a finite number")]
    NonFinite,
}

/// Ratio of polynomials in `s`, ascending coefficients, exact trailing zeros trimmed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rational {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

impl Rational {
    fn constant(c: f64) -> Self {
        Rational {
            num: vec![c],
            den: vec![1.0],
        }
    }

    fn s() -> Self {
        Rational {
            num: vec![0.0, 1.0],
            den: vec![1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Parsed {
    Scalar(f64),
    Signs(Vec<i8>),
    Rational(Rational),
    Unset,
}

pub fn is_unset(raw: &str) -> bool {
    let t = raw.trim();
    t.is_empty() || t == UNSET_PLACEHOLDER
}

pub fn parse_param_expr(raw: &str, expect: ParamShape) -> Result<Parsed, ExprError> {
    if is_unset(raw) {
        return Ok(Parsed::Unset);
    }
    let mut p = Parser::new(raw);
    let out = match expect {
        ParamShape::Scalar => match p.expr()? {
            Value::Scalar(v) => Parsed::Scalar(v),
            Value::Rational(_) => {
                return Err(ExprError::WrongShape {
                    expected: expect,
                    found: "expression in s".into(),
                })
            }
        },
        ParamShape::RationalInS => Parsed::Rational(match p.expr()? {
            Value::Scalar(v) => Rational::constant(v),
            Value::Rational(r) => r,
        }),
        ParamShape::SignVector => Parsed::Signs(p.signs()?),
    };
    p.skip_ws();
    if let Some(c) = p.peek() {
        return Err(p.syntax(format!("unexpected '{c}'")));
    }
    match &out {
        Parsed::Scalar(v) if !v.is_finite() => Err(ExprError::NonFinite),
        Parsed::Rational(r) if r.num.iter().chain(&r.den).any(|c| !c.is_finite()) => {
            Err(ExprError::NonFinite)
        }
        _ => Ok(out),
    }
}

/// Print a parsed value in a form `parse_param_expr` maps back to the same value.
pub fn format_param(value: &Parsed) -> String {
    match value {
        Parsed::Unset => UNSET_PLACEHOLDER.to_string(),
        Parsed::Scalar(v) => format_number(*v),
        Parsed::Signs(signs) => {
            let items: Vec<&str> = signs
                .iter()
                .map(|s| if *s < 0 { "-1" } else { "+1" })
                .collect();
            format!("[{}]", items.join(";"))
        }
        Parsed::Rational(r) => {
            if r.den.len() == 1 && r.den[0] == 1.0 {
                format_poly(&r.num)
            } else {
                format!("({})/({})", format_poly(&r.num), format_poly(&r.den))
            }
        }
    }
}

fn format_number(v: f64) -> String {
    // `{:?}` is the shortest representation that round-trips.
    let s = format!("{v:?}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

fn format_poly(p: &[f64]) -> String {
    let mut out = String::new();
    for (k, &c) in p.iter().enumerate() {
        if c == 0.0 && p.len() != 1 {
            continue;
        }
        let neg = c.is_sign_negative() && c != 0.0;
        let mag = format_number(c.abs());
        if out.is_empty() {
            if neg {
                out.push('-');
            }
        } else {
            out.push_str(if neg { "-" } else { "+" });
        }
        match k {
            0 => out.push_str(&mag),
            _ => {
                if mag != "1" {
                    let _ = write!(out, "{mag}*");
                }
                out.push('s');
                if k > 1 {
                    let _ = write!(out, "^{k}");
                }
            }
        }
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}

#[derive(Debug, Clone)]
enum Value {
    Scalar(f64),
    Rational(Rational),
}

impl Value {
    fn into_rational(self) -> Rational {
        match self {
            Value::Scalar(v) => Rational::constant(v),
            Value::Rational(r) => r,
        }
    }
}

fn poly_add(a: &[f64], b: &[f64], sign: f64) -> Vec<f64> {
    let n = a.len().max(b.len());
    let out = (0..n)
        .map(|i| a.get(i).copied().unwrap_or(0.0) + sign * b.get(i).copied().unwrap_or(0.0))
        .collect();
    trim_poly(out)
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    trim_poly(out)
}

fn rat_add(a: Rational, b: Rational, sign: f64) -> Rational {
    if a.den == b.den {
        return Rational {
            num: poly_add(&a.num, &b.num, sign),
            den: a.den,
        };
    }
    Rational {
        num: poly_add(&poly_mul(&a.num, &b.den), &poly_mul(&b.num, &a.den), sign),
        den: poly_mul(&a.den, &b.den),
    }
}

fn rat_mul(a: Rational, b: Rational) -> Rational {
    Rational {
        num: poly_mul(&a.num, &b.num),
        den: poly_mul(&a.den, &b.den),
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser { src, pos: 0 }
    }

    fn column(&self) -> usize {
        self.src[..self.pos].chars().count() + 1
    }

    fn syntax(&self, message: impl Into<String>) -> ExprError {
        ExprError::ExprSyntax {
            column: self.column(),
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn signs(&mut self) -> Result<Vec<i8>, ExprError> {
        self.skip_ws();
        let bracketed = self.eat('[');
        let mut out = Vec::new();
        loop {
            let at = self.column();
            let sign = match self.expr()? {
                Value::Scalar(1.0) => 1,
                Value::Scalar(-1.0) => -1,
                Value::Scalar(v) => {
                    return Err(ExprError::WrongShape {
                        expected: ParamShape::SignVector,
                        found: format!("element {v} at column {at}"),
                    })
                }
                Value::Rational(_) => {
                    return Err(ExprError::WrongShape {
                        expected: ParamShape::SignVector,
                        found: "expression in s".into(),
                    })
                }
            };
            out.push(sign);
            if !bracketed || !(self.eat(';') || self.eat(',')) {
                break;
            }
        }
        if bracketed && !self.eat(']') {
            return Err(self.syntax("expected ']'"));
        }
        Ok(out)
    }

    fn expr(&mut self) -> Result<Value, ExprError> {
        let mut acc = self.term()?;
        loop {
            let sign = if self.eat('+') {
                1.0
            } else if self.eat('-') {
                -1.0
            } else {
                return Ok(acc);
            };
            let rhs = self.term()?;
            acc = match (acc, rhs) {
                (Value::Scalar(a), Value::Scalar(b)) => Value::Scalar(a + sign * b),
                (a, b) => Value::Rational(rat_add(a.into_rational(), b.into_rational(), sign)),
            };
        }
    }

    fn term(&mut self) -> Result<Value, ExprError> {
        let mut acc = self.unary()?;
        loop {
            if self.eat('*') {
                let rhs = self.unary()?;
                acc = match (acc, rhs) {
                    (Value::Scalar(a), Value::Scalar(b)) => Value::Scalar(a * b),
                    (a, b) => Value::Rational(rat_mul(a.into_rational(), b.into_rational())),
                };
            } else if self.eat('/') {
                let column = self.column();
                let rhs = self.unary()?;
                acc = match (acc, rhs) {
                    (Value::Scalar(_), Value::Scalar(0.0)) => {
                        return Err(ExprError::DivisionByZero { column })
                    }
                    (Value::Scalar(a), Value::Scalar(b)) => Value::Scalar(a / b),
                    (a, b) => {
                        let b = b.into_rational();
                        if poly_degree(&b.num).is_none() {
                            return Err(ExprError::DivisionByZero { column });
                        }
                        let a = a.into_rational();
                        Value::Rational(Rational {
                            num: poly_mul(&a.num, &b.den),
                            den: poly_mul(&a.den, &b.num),
                        })
                    }
                };
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Value, ExprError> {
        if self.eat('-') {
            return Ok(match self.unary()? {
                Value::Scalar(v) => Value::Scalar(-v),
                Value::Rational(r) => Value::Rational(Rational {
                    num: r.num.iter().map(|c| -c).collect(),
                    den: r.den,
                }),
            });
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Value, ExprError> {
        let base = self.atom()?;
        if !self.eat('^') {
            return Ok(base);
        }
        self.skip_ws();
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        let exp: u32 = self.src[start..self.pos]
            .parse()
            .ok()
            .filter(|e| *e <= 64)
            .ok_or_else(|| self.syntax("expected a small non-negative integer exponent"))?;
        Ok(match base {
            Value::Scalar(v) => Value::Scalar(v.powi(exp as i32)),
            Value::Rational(r) => {
                let mut acc = Rational::constant(1.0);
                for _ in 0..exp {
                    acc = rat_mul(acc, r.clone());
                }
                Value::Rational(acc)
            }
        })
    }

    fn atom(&mut self) -> Result<Value, ExprError> {
        self.skip_ws();
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let v = self.expr()?;
                if !self.eat(')') {
                    return Err(self.syntax("expected ')'"));
                }
                Ok(v)
            }
            Some('s') => {
                self.pos += 1;
                if matches!(self.peek(), Some(c) if c.is_alphanumeric() || c == '_') {
                    return Err(self.syntax("unknown identifier"));
                }
                Ok(Value::Rational(Rational::s()))
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) => Err(self.syntax(format!("unexpected '{c}'"))),
            None => Err(self.syntax("unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<Value, ExprError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let digits = |p: &mut usize| {
            let s = *p;
            while *p < bytes.len() && bytes[*p].is_ascii_digit() {
                *p += 1;
            }
            *p - s
        };
        let mut p = self.pos;
        let mut n = digits(&mut p);
        if p < bytes.len() && bytes[p] == b'.' {
            p += 1;
            n += digits(&mut p);
        }
        if n == 0 {
            return Err(self.syntax("malformed number"));
        }
        if p < bytes.len() && (bytes[p] == b'e' || bytes[p] == b'E') {
            let mut q = p + 1;
            if q < bytes.len() && (bytes[q] == b'+' || bytes[q] == b'-') {
                q += 1;
            }
            if digits(&mut q) > 0 {
                p = q;
            }
        }
        self.pos = p;
        self.src[start..p]
            .parse::<f64>()
            .map(Value::Scalar)
            .map_err(|_| ExprError::ExprSyntax {
                column: self.src[..start].chars().count() + 1,
                message: "malformed number".into(),
            })
    }
}
