//! Candidate Lyapunov functions on coarse states.
//!
//! Built-in functions are available by name. Other functions are written in a
//! small expression language over the functionals `C` (number of
//! compartments) and one total per species, referred to by the species name:
//!
//! ```text
//! B == 0 ? A + B + 5C + 7 : A + B + 5C - 1
//! S / (1 + S)
//! ```
//!
//! Supported: numbers, `+ - * /`, parentheses, comparisons
//! (`== = != < <= > >=`, yielding 1 or 0), the conditional `c ? a : b`, and
//! `X(n)` as a synonym of `X`. A number directly followed by a name or a
//! parenthesis multiplies, so `5C` is `5 * C`.

use serde::Serialize;
use thiserror::Error;

use crate::coarse::CoarseState;
use crate::model::SpeciesTable;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LyapunovError {
    #[error("unknown Lyapunov function '{0}' (built-ins: ex4_11, ex4_13, ex4_16, ex4_17_chem)")]
    UnknownName(String),
    #[error("function '{name}' needs species {species}")]
    MissingSpecies { name: String, species: String },
    #[error("expression error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
}

pub const BUILTIN_NAMES: [&str; 4] = ["ex4_11", "ex4_13", "ex4_16", "ex4_17_chem"];

#[derive(Debug, Clone, PartialEq, Serialize)]
enum Kind {
    /// `A+B+5C+7` when `B = 0`, else `A+B+5C-1`.
    TwoSpeciesPiecewise {
        a: usize,
        b: usize,
    },
    /// `2C`.
    TwiceCompartments,
    /// `S/(1+S)`.
    Saturating {
        s: usize,
    },
    /// Sum over compartments of `3a+3` when `b = 0`, else `3a+3b-2`.
    PerCompartmentPiecewise {
        a: usize,
        b: usize,
    },
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lyapunov {
    pub name: String,
    kind: Kind,
}

impl Lyapunov {
    pub fn eval(&self, n: &CoarseState) -> f64 {
        match &self.kind {
            Kind::TwoSpeciesPiecewise { a, b } => {
                let (av, bv, c) = (n.species_total(*a) as f64, n.species_total(*b) as f64, n.num_compartments() as f64);
                if bv == 0.0 {
                    av + bv + 5.0 * c + 7.0
                } else {
                    av + bv + 5.0 * c - 1.0
                }
            }
            Kind::TwiceCompartments => 2.0 * n.num_compartments() as f64,
            Kind::Saturating { s } => {
                let s = n.species_total(*s) as f64;
                s / (1.0 + s)
            }
            Kind::PerCompartmentPiecewise { a, b } => n
                .iter()
                .map(|(x, k)| {
                    let (av, bv) = (f64::from(x[*a]), f64::from(x[*b]));
                    let v = if x[*b] == 0 { 3.0 * av + 3.0 } else { 3.0 * av + 3.0 * bv - 2.0 };
                    f64::from(k) * v
                })
                .sum(),
            Kind::Expr(e) => e.eval(n),
        }
    }

    /// Constant function, handy as a baseline.
    pub fn constant(v: f64) -> Self {
        Lyapunov { name: v.to_string(), kind: Kind::Expr(Expr::Num(v)) }
    }
}

fn species_index(species: &SpeciesTable, name: &str, fname: &str) -> Result<usize, LyapunovError> {
    species.index_of(name).ok_or_else(|| LyapunovError::MissingSpecies { name: fname.to_string(), species: name.to_string() })
}

/// Looks up a built-in function and binds its species by name.
pub fn builtin_lyapunov(name: &str, species: &SpeciesTable) -> Result<Lyapunov, LyapunovError> {
    let kind = match name {
        "ex4_11" => Kind::TwoSpeciesPiecewise { a: species_index(species, "A", name)?, b: species_index(species, "B", name)? },
        "ex4_13" => Kind::TwiceCompartments,
        "ex4_16" => Kind::Saturating { s: species_index(species, "S", name)? },
        "ex4_17_chem" => {
            Kind::PerCompartmentPiecewise { a: species_index(species, "A", name)?, b: species_index(species, "B", name)? }
        }
        _ => return Err(LyapunovError::UnknownName(name.to_string())),
    };
    Ok(Lyapunov { name: name.to_string(), kind })
}

/// A built-in name, or else an expression.
pub fn resolve_lyapunov(spec: &str, species: &SpeciesTable) -> Result<Lyapunov, LyapunovError> {
    match builtin_lyapunov(spec.trim(), species) {
        Err(LyapunovError::UnknownName(_)) => {
            let looks_like_name = spec.trim().chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                && species.index_of(spec.trim()).is_none()
                && spec.trim() != "C"
                && !spec.trim().starts_with(|c: char| c.is_ascii_digit());
            if looks_like_name {
                return Err(LyapunovError::UnknownName(spec.trim().to_string()));
            }
            parse_lyapunov(spec, species)
        }
        other => other,
    }
}

pub fn parse_lyapunov(text: &str, species: &SpeciesTable) -> Result<Lyapunov, LyapunovError> {
    let toks = lex(text)?;
    let mut p = Parser { toks: &toks, i: 0, species, end: text.len() };
    let e = p.ternary()?;
    if p.i < toks.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(Lyapunov { name: text.trim().to_string(), kind: Kind::Expr(e) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
enum Expr {
    Num(f64),
    Compartments,
    Species(usize),
    Neg(Box<Expr>),
    Bin(Op, Box<Expr>, Box<Expr>),
    Cond(Box<Expr>, Box<Expr>, Box<Expr>),
}

impl Expr {
    fn eval(&self, n: &CoarseState) -> f64 {
        let truth = |b: bool| if b { 1.0 } else { 0.0 };
        match self {
            Expr::Num(v) => *v,
            Expr::Compartments => n.num_compartments() as f64,
            Expr::Species(k) => n.species_total(*k) as f64,
            Expr::Neg(e) => -e.eval(n),
            Expr::Bin(op, a, b) => {
                let (x, y) = (a.eval(n), b.eval(n));
                match op {
                    Op::Add => x + y,
                    Op::Sub => x - y,
                    Op::Mul => x * y,
                    Op::Div => x / y,
                    Op::Eq => truth(x == y),
                    Op::Ne => truth(x != y),
                    Op::Lt => truth(x < y),
                    Op::Le => truth(x <= y),
                    Op::Gt => truth(x > y),
                    Op::Ge => truth(x >= y),
                }
            }
            Expr::Cond(c, a, b) => {
                if c.eval(n) != 0.0 {
                    a.eval(n)
                } else {
                    b.eval(n)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(&'static str),
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, LyapunovError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            let v = text[start..i]
                .parse()
                .map_err(|_| LyapunovError::Parse { offset: start, message: format!("invalid number '{}'", &text[start..i]) })?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_string()), start));
        } else {
            let two = text.get(i..i + 2).unwrap_or("");
            let sym = match two {
                "==" | "!=" | "<=" | ">=" => {
                    i += 2;
                    ["==", "!=", "<=", ">="].into_iter().find(|s| *s == two).unwrap()
                }
                _ => {
                    i += 1;
                    match c {
                        '+' => "+",
                        '-' => "-",
                        '*' => "*",
                        '/' => "/",
                        '(' => "(",
                        ')' => ")",
                        '?' => "?",
                        ':' => ":",
                        '<' => "<",
                        '>' => ">",
                        '=' => "==",
                        _ => return Err(LyapunovError::Parse { offset: start, message: format!("unexpected character '{c}'") }),
                    }
                }
            };
            out.push((Tok::Sym(sym), start));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [(Tok, usize)],
    i: usize,
    species: &'a SpeciesTable,
    end: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> LyapunovError {
        let offset = self.toks.get(self.i).map_or(self.end, |(_, o)| *o);
        LyapunovError::Parse { offset, message: message.to_string() }
    }

    fn peek_sym(&self) -> Option<&'static str> {
        match self.toks.get(self.i) {
            Some((Tok::Sym(s), _)) => Some(s),
            _ => None,
        }
    }

    fn eat(&mut self, sym: &str) -> bool {
        if self.peek_sym() == Some(sym) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn ternary(&mut self) -> Result<Expr, LyapunovError> {
        let c = self.comparison()?;
        if self.eat("?") {
            let a = self.ternary()?;
            if !self.eat(":") {
                return Err(self.error("expected ':'"));
            }
            let b = self.ternary()?;
            return Ok(Expr::Cond(Box::new(c), Box::new(a), Box::new(b)));
        }
        Ok(c)
    }

    fn comparison(&mut self) -> Result<Expr, LyapunovError> {
        let a = self.sum()?;
        let op = match self.peek_sym() {
            Some("==") => Op::Eq,
            Some("!=") => Op::Ne,
            Some("<") => Op::Lt,
            Some("<=") => Op::Le,
            Some(">") => Op::Gt,
            Some(">=") => Op::Ge,
            _ => return Ok(a),
        };
        self.i += 1;
        let b = self.sum()?;
        Ok(Expr::Bin(op, Box::new(a), Box::new(b)))
    }

    fn sum(&mut self) -> Result<Expr, LyapunovError> {
        let mut e = self.product()?;
        loop {
            let op = if self.eat("+") {
                Op::Add
            } else if self.eat("-") {
                Op::Sub
            } else {
                return Ok(e);
            };
            e = Expr::Bin(op, Box::new(e), Box::new(self.product()?));
        }
    }

    fn product(&mut self) -> Result<Expr, LyapunovError> {
        let mut e = self.unary()?;
        loop {
            let op = if self.eat("*") {
                Op::Mul
            } else if self.eat("/") {
                Op::Div
            } else {
                return Ok(e);
            };
            e = Expr::Bin(op, Box::new(e), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr, LyapunovError> {
        if self.eat("-") {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, LyapunovError> {
        match self.toks.get(self.i).cloned() {
            Some((Tok::Num(v), _)) => {
                self.i += 1;
                // "5C" and "2(C - 1)" multiply.
                if matches!(self.toks.get(self.i), Some((Tok::Ident(_), _)) | Some((Tok::Sym("("), _))) {
                    let rhs = self.atom()?;
                    return Ok(Expr::Bin(Op::Mul, Box::new(Expr::Num(v)), Box::new(rhs)));
                }
                Ok(Expr::Num(v))
            }
            Some((Tok::Ident(name), offset)) => {
                self.i += 1;
                // optional "(n)" suffix
                if self.peek_sym() == Some("(")
                    && matches!(self.toks.get(self.i + 1), Some((Tok::Ident(n), _)) if n == "n")
                    && matches!(self.toks.get(self.i + 2), Some((Tok::Sym(")"), _)))
                {
                    self.i += 3;
                }
                if name == "C" {
                    Ok(Expr::Compartments)
                } else if let Some(k) = self.species.index_of(&name) {
                    Ok(Expr::Species(k))
                } else {
                    Err(LyapunovError::Parse { offset, message: format!("unknown functional '{name}'") })
                }
            }
            Some((Tok::Sym("("), _)) => {
                self.i += 1;
                let e = self.ternary()?;
                if !self.eat(")") {
                    return Err(self.error("expected ')'"));
                }
                Ok(e)
            }
            _ => Err(self.error("expected a number, functional or '('")),
        }
    }
}
