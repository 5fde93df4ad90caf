use std::fmt;

use thiserror::Error;

use super::{CompartmentParams, InflowDistribution, Reaction, ReactionNetwork, RnicModel, SpeciesTable, CATEGORICAL_SUM_TOL};
use crate::state::StateVec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseErrors(pub Vec<ParseError>);

impl fmt::Display for ParseErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Pos {
    line: usize,
    column: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    /// Raw text is kept so integer-only positions can reject `1.5`.
    Number(String),
    Arrow,
    Plus,
    At,
    Semi,
    Eq,
    Colon,
    Comma,
    LBrace,
    RBrace,
    LParen,
    RParen,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) | Tok::Number(s) => write!(f, "'{s}'"),
            Tok::Arrow => f.write_str("'->'"),
            Tok::Plus => f.write_str("'+'"),
            Tok::At => f.write_str("'@'"),
            Tok::Semi => f.write_str("';'"),
            Tok::Eq => f.write_str("'='"),
            Tok::Colon => f.write_str("':'"),
            Tok::Comma => f.write_str("','"),
            Tok::LBrace => f.write_str("'{'"),
            Tok::RBrace => f.write_str("'}'"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
        }
    }
}

fn err(pos: Pos, message: impl Into<String>) -> ParseError {
    ParseError { line: pos.line, column: pos.column, message: message.into() }
}

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, Vec<ParseError>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut errors = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, column: col };
        let start = i;
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            i += 1;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            Tok::Number(chars[start..i].iter().collect())
        } else {
            i += 1;
            match c {
                '-' if chars.get(i) == Some(&'>') => {
                    i += 1;
                    Tok::Arrow
                }
                '+' => Tok::Plus,
                '@' => Tok::At,
                ';' => Tok::Semi,
                '=' => Tok::Eq,
                ':' => Tok::Colon,
                ',' => Tok::Comma,
                '{' => Tok::LBrace,
                '}' => Tok::RBrace,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                other => {
                    errors.push(err(pos, format!("unexpected character '{other}'")));
                    col += i - start;
                    continue;
                }
            }
        };
        col += i - start;
        out.push((tok, pos));
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(errors)
    }
}

type Term = (u32, String, Pos);

enum MuSpec {
    Point(Vec<(String, u32, Pos)>),
    Cat(Vec<(Vec<u32>, f64, Pos)>),
    Poisson(Vec<(f64, Pos)>),
}

enum Stmt {
    Species(Vec<(String, Pos)>),
    Rxn { lhs: Vec<Term>, rhs: Vec<Term>, rate: (f64, Pos) },
    Compartments(Vec<(String, f64, Pos)>),
    Mu(MuSpec),
}

struct Cursor<'a> {
    toks: &'a [(Tok, Pos)],
    i: usize,
    end: Pos,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.i).map(|(t, _)| t)
    }

    fn pos(&self) -> Pos {
        self.toks.get(self.i).map_or(self.end, |(_, p)| *p)
    }

    fn next(&mut self) -> Option<(&'a Tok, Pos)> {
        let t = self.toks.get(self.i).map(|(t, p)| (t, *p));
        if t.is_some() {
            self.i += 1;
        }
        t
    }

    fn found(&self) -> String {
        match self.peek() {
            Some(t) => t.to_string(),
            None => "end of statement".to_string(),
        }
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<Pos, ParseError> {
        match self.peek() {
            Some(t) if t == want => Ok(self.next().unwrap().1),
            _ => Err(err(self.pos(), format!("expected {what}, found {}", self.found()))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Pos), ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let p = self.next().unwrap().1;
                Ok((s.clone(), p))
            }
            _ => Err(err(self.pos(), format!("expected {what}, found {}", self.found()))),
        }
    }

    fn number(&mut self, what: &str) -> Result<(f64, Pos), ParseError> {
        match self.peek() {
            Some(Tok::Number(s)) => {
                let p = self.next().unwrap().1;
                s.parse::<f64>().map(|v| (v, p)).map_err(|_| err(p, format!("invalid number '{s}'")))
            }
            _ => Err(err(self.pos(), format!("expected {what}, found {}", self.found()))),
        }
    }

    fn integer(&mut self, what: &str) -> Result<(u32, Pos), ParseError> {
        match self.peek() {
            Some(Tok::Number(s)) => {
                let p = self.next().unwrap().1;
                s.parse::<u32>().map(|v| (v, p)).map_err(|_| err(p, format!("expected non-negative integer, found '{s}'")))
            }
            _ => Err(err(self.pos(), format!("expected {what}, found {}", self.found()))),
        }
    }

    fn done(&self) -> bool {
        self.i >= self.toks.len()
    }

    fn finish(&self) -> Result<(), ParseError> {
        if self.done() {
            Ok(())
        } else {
            Err(err(self.pos(), format!("unexpected {} before ';'", self.found())))
        }
    }
}

fn parse_complex(c: &mut Cursor<'_>) -> Result<Vec<Term>, ParseError> {
    if let Some(Tok::Number(s)) = c.peek() {
        if s == "0" && !matches!(c.toks.get(c.i + 1), Some((Tok::Ident(_), _))) {
            c.next();
            return Ok(Vec::new());
        }
    }
    let mut terms = Vec::new();
    loop {
        let coef = match c.peek() {
            Some(Tok::Number(_)) => c.integer("stoichiometric coefficient")?.0,
            _ => 1,
        };
        let (name, pos) = c.ident("species name or '0'")?;
        terms.push((coef, name, pos));
        if c.peek() == Some(&Tok::Plus) {
            c.next();
        } else {
            return Ok(terms);
        }
    }
}

fn parse_vec(c: &mut Cursor<'_>) -> Result<Vec<u32>, ParseError> {
    c.expect(&Tok::LParen, "'('")?;
    let mut v = vec![c.integer("count")?.0];
    while c.peek() == Some(&Tok::Comma) {
        c.next();
        v.push(c.integer("count")?.0);
    }
    c.expect(&Tok::RParen, "')'")?;
    Ok(v)
}

fn parse_stmt(c: &mut Cursor<'_>) -> Result<Stmt, ParseError> {
    let (kw, kw_pos) = c.ident("statement keyword")?;
    let stmt = match kw.as_str() {
        "species" => {
            let mut names = Vec::new();
            while let Some(Tok::Ident(_)) = c.peek() {
                names.push(c.ident("species name")?);
            }
            if names.is_empty() {
                return Err(err(c.pos(), format!("expected species name, found {}", c.found())));
            }
            Stmt::Species(names)
        }
        "rxn" => {
            let lhs = parse_complex(c)?;
            c.expect(&Tok::Arrow, "'->'")?;
            let rhs = parse_complex(c)?;
            c.expect(&Tok::At, "'@' before rate constant")?;
            let rate = c.number("rate constant")?;
            Stmt::Rxn { lhs, rhs, rate }
        }
        "compartments" => {
            let mut items = Vec::new();
            while !c.done() {
                let (key, pos) = c.ident("compartment rate name (I, E, F or C)")?;
                c.expect(&Tok::Eq, "'='")?;
                let (v, _) = c.number("rate constant")?;
                items.push((key, v, pos));
            }
            Stmt::Compartments(items)
        }
        "mu" => {
            let (kind, kind_pos) = c.ident("'point', 'cat' or 'poisson'")?;
            match kind.as_str() {
                "point" => {
                    let mut items = Vec::new();
                    while !c.done() {
                        let (name, pos) = c.ident("species name")?;
                        c.expect(&Tok::Eq, "'='")?;
                        let (v, _) = c.integer("count")?;
                        items.push((name, v, pos));
                    }
                    Stmt::Mu(MuSpec::Point(items))
                }
                "cat" => {
                    c.expect(&Tok::LBrace, "'{'")?;
                    let mut items = Vec::new();
                    loop {
                        let pos = c.pos();
                        let v = parse_vec(c)?;
                        c.expect(&Tok::Colon, "':'")?;
                        let (p, _) = c.number("probability")?;
                        items.push((v, p, pos));
                        if c.peek() == Some(&Tok::Comma) {
                            c.next();
                        } else {
                            break;
                        }
                    }
                    c.expect(&Tok::RBrace, "'}'")?;
                    Stmt::Mu(MuSpec::Cat(items))
                }
                "poisson" => {
                    let mut means = Vec::new();
                    while let Some(Tok::Number(_)) = c.peek() {
                        means.push(c.number("mean")?);
                    }
                    if means.is_empty() {
                        return Err(err(c.pos(), format!("expected Poisson mean, found {}", c.found())));
                    }
                    Stmt::Mu(MuSpec::Poisson(means))
                }
                other => return Err(err(kind_pos, format!("unknown inflow law '{other}'"))),
            }
        }
        other => return Err(err(kw_pos, format!("unknown statement '{other}'"))),
    };
    c.finish()?;
    Ok(stmt)
}

/// Parses and validates a model written in the model DSL.
///
/// All errors found are reported, each with its line and column.
pub fn parse_model(text: &str) -> Result<RnicModel, ParseErrors> {
    let toks = lex(text).map_err(ParseErrors)?;
    let mut errors = Vec::new();
    let mut stmts: Vec<(Stmt, Pos)> = Vec::new();

    let mut start = 0;
    while start < toks.len() {
        let end = toks[start..].iter().position(|(t, _)| *t == Tok::Semi).map_or(toks.len(), |k| start + k);
        if end > start {
            let stmt_pos = toks[start].1;
            let end_pos = toks.get(end).map_or_else(
                || {
                    let (_, p) = &toks[end - 1];
                    Pos { line: p.line, column: p.column + 1 }
                },
                |(_, p)| *p,
            );
            let mut c = Cursor { toks: &toks[start..end], i: 0, end: end_pos };
            match parse_stmt(&mut c) {
                Ok(s) => stmts.push((s, stmt_pos)),
                Err(e) => errors.push(e),
            }
        }
        start = end + 1;
    }
    let eof = toks.last().map_or(Pos { line: 1, column: 1 }, |(_, p)| *p);

    let resolved = resolve(&stmts, eof, &mut errors);
    errors.sort_by_key(|e| (e.line, e.column));
    match resolved {
        Some(m) if errors.is_empty() => Ok(m),
        _ => Err(ParseErrors(errors)),
    }
}

fn resolve(stmts: &[(Stmt, Pos)], eof: Pos, errors: &mut Vec<ParseError>) -> Option<RnicModel> {
    let mut species: Option<SpeciesTable> = None;
    for (s, pos) in stmts {
        if let Stmt::Species(names) = s {
            if species.is_some() {
                errors.push(err(*pos, "species declared more than once"));
                continue;
            }
            let mut uniq: Vec<String> = Vec::new();
            for (n, p) in names {
                if uniq.contains(n) {
                    errors.push(err(*p, format!("duplicate species '{n}'")));
                } else {
                    uniq.push(n.clone());
                }
            }
            species = Some(SpeciesTable::new(uniq));
        }
    }
    let Some(species) = species else {
        errors.push(err(eof, "missing 'species' statement"));
        return None;
    };
    let d = species.dim();

    let complex = |terms: &[Term], errors: &mut Vec<ParseError>| -> Option<StateVec> {
        let mut v = vec![0u32; d];
        let mut ok = true;
        for (coef, name, p) in terms {
            match species.index_of(name) {
                Some(k) => v[k] += coef,
                None => {
                    errors.push(err(*p, format!("unknown species '{name}'")));
                    ok = false;
                }
            }
        }
        ok.then(|| StateVec::from(v))
    };

    let mut reactions: Vec<Reaction> = Vec::new();
    let mut compartments: Option<CompartmentParams> = None;
    let mut compartments_pos = eof;
    let mut mu: Option<InflowDistribution> = None;
    let mut mu_seen = false;

    for (s, pos) in stmts {
        match s {
            Stmt::Species(_) => {}
            Stmt::Rxn { lhs, rhs, rate } => {
                let r = complex(lhs, errors);
                let p = complex(rhs, errors);
                let (k, kpos) = *rate;
                if k < 0.0 {
                    errors.push(err(kpos, format!("negative rate constant {k}")));
                    continue;
                }
                if !k.is_finite() {
                    errors.push(err(kpos, "rate constant must be finite"));
                    continue;
                }
                let (Some(r), Some(p)) = (r, p) else { continue };
                if r == p {
                    errors.push(err(*pos, "reactant and product complexes are identical"));
                    continue;
                }
                if reactions.iter().any(|q| q.reactant == r && q.product == p) {
                    let net = ReactionNetwork::new(species.clone(), vec![]);
                    errors
                        .push(err(*pos, format!("duplicate reaction {} -> {}", net.format_complex(&r), net.format_complex(&p))));
                    continue;
                }
                reactions.push(Reaction::new(r, p, k));
            }
            Stmt::Compartments(items) => {
                if compartments.is_some() {
                    errors.push(err(*pos, "compartments declared more than once"));
                    continue;
                }
                compartments_pos = *pos;
                let mut vals: [Option<f64>; 4] = [None; 4];
                let mut ok = true;
                for (key, v, p) in items {
                    let slot = match key.as_str() {
                        "I" => 0,
                        "E" => 1,
                        "F" => 2,
                        "C" => 3,
                        other => {
                            errors.push(err(*p, format!("unknown compartment rate '{other}' (expected I, E, F or C)")));
                            ok = false;
                            continue;
                        }
                    };
                    if *v < 0.0 {
                        errors.push(err(*p, format!("negative rate constant {v}")));
                        ok = false;
                    } else if !v.is_finite() {
                        errors.push(err(*p, "rate constant must be finite"));
                        ok = false;
                    }
                    if vals[slot].replace(*v).is_some() {
                        errors.push(err(*p, format!("compartment rate '{key}' given twice")));
                        ok = false;
                    }
                }
                for (slot, name) in ["I", "E", "F", "C"].iter().enumerate() {
                    if vals[slot].is_none() && ok {
                        errors.push(err(*pos, format!("missing compartment rate '{name}'")));
                        ok = false;
                    }
                }
                if ok {
                    compartments =
                        Some(CompartmentParams::new(vals[0].unwrap(), vals[1].unwrap(), vals[2].unwrap(), vals[3].unwrap()));
                }
            }
            Stmt::Mu(spec) => {
                if mu_seen {
                    errors.push(err(*pos, "mu declared more than once"));
                    continue;
                }
                mu_seen = true;
                mu = resolve_mu(spec, &species, *pos, errors);
            }
        }
    }

    if compartments.is_none() && !stmts.iter().any(|(s, _)| matches!(s, Stmt::Compartments(_))) {
        errors.push(err(eof, "missing 'compartments' statement"));
    }
    let compartments = compartments?;
    if !mu_seen && compartments.kappa_i > 0.0 {
        errors.push(err(compartments_pos, "mu is required when kappa_I > 0"));
        return None;
    }
    if mu_seen && mu.is_none() {
        return None;
    }
    let chemistry = ReactionNetwork::new(species, reactions);
    RnicModel::new(chemistry, compartments, mu).map_err(|e| errors.push(err(eof, e.to_string()))).ok()
}

fn resolve_mu(spec: &MuSpec, species: &SpeciesTable, pos: Pos, errors: &mut Vec<ParseError>) -> Option<InflowDistribution> {
    let d = species.dim();
    match spec {
        MuSpec::Point(items) => {
            let mut v = vec![0u32; d];
            let mut ok = true;
            for (name, count, p) in items {
                match species.index_of(name) {
                    Some(k) => v[k] = *count,
                    None => {
                        errors.push(err(*p, format!("unknown species '{name}'")));
                        ok = false;
                    }
                }
            }
            ok.then(|| InflowDistribution::PointMass(StateVec::from(v)))
        }
        MuSpec::Cat(items) => {
            let mut ok = true;
            let mut out = Vec::new();
            for (v, prob, p) in items {
                if v.len() != d {
                    errors.push(err(*p, format!("state has {} entries, expected {d}", v.len())));
                    ok = false;
                }
                if *prob <= 0.0 {
                    errors.push(err(*p, format!("categorical probability {prob} must be positive")));
                    ok = false;
                }
                out.push((StateVec::from(v.clone()), *prob));
            }
            let sum: f64 = items.iter().map(|(_, p, _)| p).sum();
            if ok && (sum - 1.0).abs() > CATEGORICAL_SUM_TOL {
                errors.push(err(pos, format!("categorical probabilities sum to {sum}")));
                ok = false;
            }
            ok.then_some(InflowDistribution::Categorical(out))
        }
        MuSpec::Poisson(means) => {
            let mut ok = true;
            if means.len() != d {
                errors.push(err(pos, format!("poisson law has {} means, expected {d}", means.len())));
                ok = false;
            }
            for (m, p) in means {
                if *m < 0.0 || !m.is_finite() {
                    errors.push(err(*p, format!("invalid Poisson mean {m}")));
                    ok = false;
                }
            }
            ok.then(|| InflowDistribution::ProductPoisson(means.iter().map(|(m, _)| *m).collect()))
        }
    }
}
