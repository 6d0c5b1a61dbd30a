//! One-variable expression grammar for kernel descriptions.
//!
//! Supports constants, the variable (`t` for `p` terms, `s` for `q` terms),
//! `+`, `-`, `*`, integer powers `^k` and parentheses. Expressions are
//! differentiated symbolically so separable kernels described in JSON get
//! exact `p_i'` terms.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Neg(Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Num(c) => *c,
            Expr::Var => x,
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Pow(a, k) => a.eval(x).powi(*k as i32),
            Expr::Neg(a) => -a.eval(x),
        }
    }

    pub fn deriv(&self) -> Expr {
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var => Expr::Num(1.0),
            Expr::Add(a, b) => Expr::Add(Box::new(a.deriv()), Box::new(b.deriv())),
            Expr::Sub(a, b) => Expr::Sub(Box::new(a.deriv()), Box::new(b.deriv())),
            Expr::Mul(a, b) => Expr::Add(
                Box::new(Expr::Mul(Box::new(a.deriv()), b.clone())),
                Box::new(Expr::Mul(a.clone(), Box::new(b.deriv()))),
            ),
            Expr::Pow(a, k) => {
                if *k == 0 {
                    Expr::Num(0.0)
                } else {
                    // k * a^{k-1} * a'
                    Expr::Mul(
                        Box::new(Expr::Mul(
                            Box::new(Expr::Num(*k as f64)),
                            Box::new(Expr::Pow(a.clone(), k - 1)),
                        )),
                        Box::new(a.deriv()),
                    )
                }
            }
            Expr::Neg(a) => Expr::Neg(Box::new(a.deriv())),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    var: char,
}

impl<'a> Parser<'a> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::ExprParse {
            expr: self.src.to_string(),
            reason: reason.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        while let Some(op) = self.peek() {
            match op {
                b'+' => {
                    self.pos += 1;
                    acc = Expr::Add(Box::new(acc), Box::new(self.term()?));
                }
                b'-' => {
                    self.pos += 1;
                    acc = Expr::Sub(Box::new(acc), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.factor()?;
        while let Some(b'*') = self.peek() {
            self.pos += 1;
            acc = Expr::Mul(Box::new(acc), Box::new(self.factor()?));
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(b'^') = self.peek() {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.err("expected an integer exponent after '^'"));
            }
            let k: u32 = self.src[start..self.pos]
                .parse()
                .map_err(|_| self.err("exponent out of range"))?;
            return Ok(Expr::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("missing closing parenthesis"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(b'-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.atom()?)))
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.bytes.len()
                    && (self.bytes[self.pos].is_ascii_digit()
                        || self.bytes[self.pos] == b'.'
                        || self.bytes[self.pos] == b'e'
                        || self.bytes[self.pos] == b'E')
                {
                    self.pos += 1;
                }
                let v: f64 = self.src[start..self.pos]
                    .parse()
                    .map_err(|_| self.err("malformed number"))?;
                Ok(Expr::Num(v))
            }
            Some(c) if (c as char) == self.var => {
                self.pos += 1;
                Ok(Expr::Var)
            }
            Some(c) if c.is_ascii_alphabetic() => {
                Err(self.err(format!(
                    "unknown variable '{}' (this term uses '{}')",
                    c as char, self.var
                )))
            }
            _ => Err(self.err("unexpected end of expression")),
        }
    }
}

/// Parse an expression in the single variable `var` (`'t'` or `'s'`).
pub fn parse(src: &str, var: char) -> Result<Expr> {
    let mut p = Parser {
        src,
        bytes: src.as_bytes(),
        pos: 0,
        var,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return Err(p.err(format!("trailing input at byte {}", p.pos)));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_eval() {
        let e = parse("2*t^2 + (1 - t)*3", 't').unwrap();
        assert_eq!(e.eval(2.0), 8.0 - 3.0);
        assert_eq!(e.eval(0.0), 3.0);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let e = parse("t^3 - 2*t + 0.5", 't').unwrap();
        let d = e.deriv();
        for &x in &[0.0, 0.7, -1.3] {
            let fd = (e.eval(x + 1e-6) - e.eval(x - 1e-6)) / 2e-6;
            assert!((d.eval(x) - fd).abs() < 1e-6, "x = {x}");
        }
    }

    #[test]
    fn negation_and_constants() {
        let e = parse("-(s + 1)", 's').unwrap();
        assert_eq!(e.eval(0.5), -1.5);
        assert_eq!(e.deriv().eval(0.5), -1.0);
    }

    #[test]
    fn rejects_wrong_variable_and_garbage() {
        assert!(parse("s + 1", 't').is_err());
        assert!(parse("t +", 't').is_err());
        assert!(parse("(t", 't').is_err());
        assert!(parse("t^x", 't').is_err());
    }
}
