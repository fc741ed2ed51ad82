//! Small scalar expression grammar used by the run configuration to define
//! rates and maps: literals, named variables, `+ - * /`, unary minus,
//! parentheses, and the calls `pow(a, b)`, `tanh(a)`, `min(a, b)`,
//! `max(a, b)`, `abs(a)`, `sqrt(a)`. Piecewise definitions are assembled at
//! the config layer from breakpoint lists, not inside the grammar.

use anyhow::{anyhow, bail, Result};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let mut toks = Vec::new();
    let bytes: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                toks.push(Tok::Plus);
                i += 1;
            }
            '-' | '−' => {
                toks.push(Tok::Minus);
                i += 1;
            }
            '*' | '×' => {
                toks.push(Tok::Star);
                i += 1;
            }
            '/' | '÷' => {
                toks.push(Tok::Slash);
                i += 1;
            }
            '(' => {
                toks.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                toks.push(Tok::RParen);
                i += 1;
            }
            ',' => {
                toks.push(Tok::Comma);
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_digit()
                        || bytes[i] == '.'
                        || bytes[i] == 'e'
                        || bytes[i] == 'E'
                        || ((bytes[i] == '+' || bytes[i] == '-')
                            && i > start
                            && (bytes[i - 1] == 'e' || bytes[i - 1] == 'E')))
                {
                    i += 1;
                }
                let s: String = bytes[start..i].iter().collect();
                let v: f64 = s.parse().map_err(|_| anyhow!("bad number literal '{s}'"))?;
                toks.push(Tok::Num(v));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_') {
                    i += 1;
                }
                toks.push(Tok::Ident(bytes[start..i].iter().collect()));
            }
            other => bail!("unexpected character '{other}' in expression"),
        }
    }
    Ok(toks)
}

#[derive(Clone, Debug)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Pow,
    Tanh,
    Min,
    Max,
    Abs,
    Sqrt,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        match name {
            "pow" => Some((Func::Pow, 2)),
            "tanh" => Some((Func::Tanh, 1)),
            "min" => Some((Func::Min, 2)),
            "max" => Some((Func::Max, 2)),
            "abs" => Some((Func::Abs, 1)),
            "sqrt" => Some((Func::Sqrt, 1)),
            _ => None,
        }
    }
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<()> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            other => bail!("expected {want:?}, found {other:?}"),
        }
    }

    // sum := term (('+' | '-') term)*
    fn sum(&mut self) -> Result<Expr> {
        let mut e = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    e = Expr::Add(Box::new(e), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    e = Expr::Sub(Box::new(e), Box::new(self.term()?));
                }
                _ => return Ok(e),
            }
        }
    }

    // term := unary (('*' | '/') unary)*
    fn term(&mut self) -> Result<Expr> {
        let mut e = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    e = Expr::Mul(Box::new(e), Box::new(self.unary()?));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    e = Expr::Div(Box::new(e), Box::new(self.unary()?));
                }
                _ => return Ok(e),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::LParen) => {
                let e = self.sum()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if matches!(self.peek(), Some(Tok::LParen)) {
                    let (func, arity) = Func::lookup(&name)
                        .ok_or_else(|| anyhow!("unknown function '{name}'"))?;
                    self.pos += 1;
                    let mut args = vec![self.sum()?];
                    while matches!(self.peek(), Some(Tok::Comma)) {
                        self.pos += 1;
                        args.push(self.sum()?);
                    }
                    self.expect(Tok::RParen)?;
                    if args.len() != arity {
                        bail!("function '{name}' takes {arity} argument(s), got {}", args.len());
                    }
                    Ok(Expr::Call(func, args))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            other => bail!("unexpected token {other:?} in expression"),
        }
    }
}

pub fn parse(src: &str) -> Result<Expr> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
    };
    let e = p.sum()?;
    if p.pos != p.toks.len() {
        bail!("trailing input after expression: {:?}", &p.toks[p.pos..]);
    }
    Ok(e)
}

impl Expr {
    pub fn eval(&self, env: &dyn Fn(&str) -> Option<f64>) -> Result<f64> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Var(name) => env(name)
                .ok_or_else(|| anyhow!("unknown variable '{name}' in this context"))?,
            Expr::Neg(a) => -a.eval(env)?,
            Expr::Add(a, b) => a.eval(env)? + b.eval(env)?,
            Expr::Sub(a, b) => a.eval(env)? - b.eval(env)?,
            Expr::Mul(a, b) => a.eval(env)? * b.eval(env)?,
            Expr::Div(a, b) => a.eval(env)? / b.eval(env)?,
            Expr::Call(func, args) => {
                let a = args[0].eval(env)?;
                match func {
                    Func::Pow => a.powf(args[1].eval(env)?),
                    Func::Tanh => a.tanh(),
                    Func::Min => a.min(args[1].eval(env)?),
                    Func::Max => a.max(args[1].eval(env)?),
                    Func::Abs => a.abs(),
                    Func::Sqrt => a.sqrt(),
                }
            }
        })
    }

    /// Collect variable names so configs can be rejected early when an
    /// expression references a variable its context does not provide.
    pub fn variables(&self, out: &mut Vec<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(name) => {
                if !out.contains(name) {
                    out.push(name.clone());
                }
            }
            Expr::Neg(a) => a.variables(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.variables(out);
                b.variables(out);
            }
            Expr::Call(_, args) => {
                for a in args {
                    a.variables(out);
                }
            }
        }
    }

    /// Compile into a single-variable closure; every other name errors at
    /// build time via `variables`, so eval cannot fail afterwards.
    pub fn compile1(self, var: &'static str) -> Result<impl Fn(f64) -> f64 + Send + Sync> {
        let mut vars = Vec::new();
        self.variables(&mut vars);
        for v in &vars {
            if v != var {
                bail!("expression may reference only '{var}', found '{v}'");
            }
        }
        Ok(move |s: f64| {
            self.eval(&|name| if name == var { Some(s) } else { None })
                .expect("validated single-variable expression")
        })
    }
}
