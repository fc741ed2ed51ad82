//! A small expression grammar for declaring piecewise rate functions and
//! scalar system maps in configuration files.
//!
//! Grammar: literals, named variables, `+ - * /`, `^` / `pow(a,b)`, `tanh(a)`,
//! `abs(a)`, `min(a,b)`, `max(a,b)`, and `piecewise(b, lo, hi)` which selects
//! `lo` when the piecewise variable is `<= b` and `hi` otherwise. Piecewise
//! breakpoints are collected so quadrature can split at them.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::ratefns::{ClassTag, RateFunction};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Tanh(Box<Expr>),
    Abs(Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    /// piecewise(break, lo, hi) on the distinguished variable
    Piecewise(f64, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, vars: &HashMap<&str, f64>) -> f64 {
        self.eval_with(&|name| vars.get(name).copied())
            .unwrap_or(f64::NAN)
    }

    fn eval_with(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Option<f64> {
        Some(match self {
            Expr::Num(v) => *v,
            Expr::Var(name) => lookup(name)?,
            Expr::Add(a, b) => a.eval_with(lookup)? + b.eval_with(lookup)?,
            Expr::Sub(a, b) => a.eval_with(lookup)? - b.eval_with(lookup)?,
            Expr::Mul(a, b) => a.eval_with(lookup)? * b.eval_with(lookup)?,
            Expr::Div(a, b) => a.eval_with(lookup)? / b.eval_with(lookup)?,
            Expr::Pow(a, b) => a.eval_with(lookup)?.powf(b.eval_with(lookup)?),
            Expr::Neg(a) => -a.eval_with(lookup)?,
            Expr::Tanh(a) => a.eval_with(lookup)?.tanh(),
            Expr::Abs(a) => a.eval_with(lookup)?.abs(),
            Expr::Min(a, b) => a.eval_with(lookup)?.min(b.eval_with(lookup)?),
            Expr::Max(a, b) => a.eval_with(lookup)?.max(b.eval_with(lookup)?),
            Expr::Piecewise(br, lo, hi) => {
                // the piecewise variable is "s" by convention
                if lookup("s")? <= *br {
                    lo.eval_with(lookup)?
                } else {
                    hi.eval_with(lookup)?
                }
            }
        })
    }

    /// Collect piecewise breakpoints.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_bps(&mut out);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn collect_bps(&self, out: &mut Vec<f64>) {
        match self {
            Expr::Num(_) | Expr::Var(_) => {}
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b) => {
                a.collect_bps(out);
                b.collect_bps(out);
            }
            Expr::Neg(a) | Expr::Tanh(a) | Expr::Abs(a) => a.collect_bps(out),
            Expr::Piecewise(br, lo, hi) => {
                out.push(*br);
                lo.collect_bps(out);
                hi.collect_bps(out);
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::Other(format!("parse error at byte {}: {}", self.pos, msg))
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

    fn eat(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.factor()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.eat(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let name = self.ident();
                if self.peek() == Some(b'(') {
                    self.call(&name)
                } else {
                    Ok(Expr::Var(name))
                }
            }
            _ => Err(self.err("expected expression")),
        }
    }

    fn ident(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn number(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit()
                || self.src[self.pos] == b'.'
                || self.src[self.pos] == b'e'
                || self.src[self.pos] == b'E'
                || ((self.src[self.pos] == b'+' || self.src[self.pos] == b'-')
                    && self.pos > start
                    && (self.src[self.pos - 1] == b'e' || self.src[self.pos - 1] == b'E')))
        {
            self.pos += 1;
        }
        let txt = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        txt.parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| self.err(&format!("bad number '{txt}'")))
    }

    fn call(&mut self, name: &str) -> Result<Expr> {
        self.eat(b'(')?;
        let mut args = vec![self.expr()?];
        while self.peek() == Some(b',') {
            self.pos += 1;
            args.push(self.expr()?);
        }
        self.eat(b')')?;
        let arity = |n: usize| -> Result<()> {
            if args.len() == n {
                Ok(())
            } else {
                Err(Error::Other(format!(
                    "{name} takes {n} argument(s), got {}",
                    args.len()
                )))
            }
        };
        match name {
            "tanh" => {
                arity(1)?;
                Ok(Expr::Tanh(Box::new(args.remove(0))))
            }
            "abs" => {
                arity(1)?;
                Ok(Expr::Abs(Box::new(args.remove(0))))
            }
            "pow" => {
                arity(2)?;
                let b = args.pop().unwrap();
                let a = args.pop().unwrap();
                Ok(Expr::Pow(Box::new(a), Box::new(b)))
            }
            "min" => {
                arity(2)?;
                let b = args.pop().unwrap();
                let a = args.pop().unwrap();
                Ok(Expr::Min(Box::new(a), Box::new(b)))
            }
            "max" => {
                arity(2)?;
                let b = args.pop().unwrap();
                let a = args.pop().unwrap();
                Ok(Expr::Max(Box::new(a), Box::new(b)))
            }
            "piecewise" => {
                arity(3)?;
                let hi = args.pop().unwrap();
                let lo = args.pop().unwrap();
                let br = match args.pop().unwrap() {
                    Expr::Num(v) => v,
                    _ => {
                        return Err(Error::Other(
                            "piecewise breakpoint must be a literal".into(),
                        ))
                    }
                };
                Ok(Expr::Piecewise(br, Box::new(lo), Box::new(hi)))
            }
            other => Err(Error::Other(format!("unknown function '{other}'"))),
        }
    }
}

/// Parse an expression.
pub fn parse(src: &str) -> Result<Expr> {
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

/// Parse an expression in the single variable `s` into a [`RateFunction`].
pub fn parse_rate(src: &str, name: &str, tag: ClassTag) -> Result<RateFunction> {
    let ast = parse(src)?;
    let bps = ast.breakpoints();
    let f = move |s: f64| {
        let mut vars = HashMap::new();
        vars.insert("s", s);
        ast.eval(&vars)
    };
    // reject expressions referencing unknown variables
    let probe = f(0.5);
    if probe.is_nan() && !f(1.5).is_finite() {
        return Err(Error::Other(format!(
            "rate expression '{src}' does not evaluate to a finite value"
        )));
    }
    Ok(RateFunction::new(name, tag, f).with_breakpoints(&bps))
}
