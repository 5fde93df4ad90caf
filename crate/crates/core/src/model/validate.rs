use std::fmt;

use num_rational::Ratio;
use serde::Serialize;

use super::{ReactionNetwork, RnicModel};

/// Largest entry a reported conservation law may have.
pub const CONSERVATION_MAX_ENTRY: i64 = 32;

/// Cap on the number of free-variable assignments visited by the search.
const SEARCH_BUDGET: u64 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Note,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Warning => "warning",
            Severity::Note => "note",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

fn warn(message: String) -> Diagnostic {
    Diagnostic { severity: Severity::Warning, message }
}

pub fn validate(model: &RnicModel) -> Vec<Diagnostic> {
    let chem = &model.chemistry;
    let mut out = Vec::new();
    for r in &chem.reactions {
        if r.rate_constant == 0.0 {
            out.push(warn(format!("reaction {} has rate constant 0 and never fires", chem.format_reaction(r))));
        }
    }
    let (laws, exhaustive) = conservation_laws(chem);
    for w in &laws {
        let terms: Vec<String> = w
            .iter()
            .zip(chem.species.names())
            .filter(|(&c, _)| c > 0)
            .map(|(&c, n)| if c == 1 { n.clone() } else { format!("{c}{n}") })
            .collect();
        out.push(warn(format!("conservation law: total {} preserved by chemistry", terms.join("+"))));
    }
    if !exhaustive {
        out.push(Diagnostic {
            severity: Severity::Note,
            message: "conservation-law search hit its budget; the list above may be incomplete".into(),
        });
    }
    if model.compartments.all_zero() {
        out.push(warn("all compartment states absorbing (kappa_I = kappa_E = kappa_F = kappa_C = 0)".into()));
    }
    out
}

type Q = Ratio<i128>;

/// Non-negative integer vectors `w != 0` with `w . (nu' - nu) = 0` for every
/// reaction and entries at most [`CONSERVATION_MAX_ENTRY`]. Only primitive
/// vectors of minimal support are returned, sorted. The flag is false when
/// the search budget cut the enumeration short.
pub fn conservation_laws(chem: &ReactionNetwork) -> (Vec<Vec<u32>>, bool) {
    let d = chem.dim();
    let mut rows: Vec<Vec<Q>> =
        chem.reactions.iter().map(|r| r.net_change().into_iter().map(|v| Q::from_integer(i128::from(v))).collect()).collect();
    let pivots = rref(&mut rows, d);
    let free: Vec<usize> = (0..d).filter(|c| !pivots.contains(c)).collect();
    if free.is_empty() {
        return (Vec::new(), true);
    }

    let span = CONSERVATION_MAX_ENTRY as u64 + 1;
    let mut exhaustive = true;
    let mut limit = vec![span; free.len()];
    // Shrink the ranges of trailing free variables until the budget fits.
    while limit.iter().try_fold(1u64, |acc, &l| acc.checked_mul(l)).is_none_or(|t| t > SEARCH_BUDGET) {
        exhaustive = false;
        let k = limit.iter().rposition(|&l| l > 2).unwrap_or(0);
        limit[k] = (limit[k] / 2).max(2);
        if limit.iter().all(|&l| l == 2) {
            break;
        }
    }

    let mut found: Vec<Vec<u32>> = Vec::new();
    let mut assign = vec![0u64; free.len()];
    loop {
        if assign.iter().any(|&a| a > 0) {
            if let Some(w) = complete(&rows, &pivots, &free, &assign, d) {
                found.push(w);
            }
        }
        let mut k = 0;
        loop {
            if k == assign.len() {
                return (minimal(found), exhaustive);
            }
            assign[k] += 1;
            if assign[k] < limit[k] {
                break;
            }
            assign[k] = 0;
            k += 1;
        }
    }
}

/// Row-reduces in place and returns the pivot column of each nonzero row.
#[allow(clippy::needless_range_loop)]
fn rref(rows: &mut Vec<Vec<Q>>, ncols: usize) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        let Some(p) = (r..rows.len()).find(|&i| rows[i][c] != Q::from_integer(0)) else {
            continue;
        };
        rows.swap(r, p);
        let lead = rows[r][c];
        for v in rows[r].iter_mut() {
            *v /= lead;
        }
        for i in 0..rows.len() {
            if i != r && rows[i][c] != Q::from_integer(0) {
                let f = rows[i][c];
                for j in 0..ncols {
                    let sub = f * rows[r][j];
                    rows[i][j] -= sub;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    rows.truncate(r);
    pivots
}

/// Kernel vector with the given free entries, if integral, non-negative and in range.
fn complete(rows: &[Vec<Q>], pivots: &[usize], free: &[usize], assign: &[u64], d: usize) -> Option<Vec<u32>> {
    let mut w = vec![0u32; d];
    for (&c, &a) in free.iter().zip(assign) {
        w[c] = a as u32;
    }
    for (row, &pc) in rows.iter().zip(pivots) {
        let mut v = Q::from_integer(0);
        for (&c, &a) in free.iter().zip(assign) {
            v -= row[c] * Q::from_integer(a as i128);
        }
        if !v.is_integer() {
            return None;
        }
        let v = v.to_integer();
        if !(0..=i128::from(CONSERVATION_MAX_ENTRY)).contains(&v) {
            return None;
        }
        w[pc] = v as u32;
    }
    Some(w)
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn minimal(found: Vec<Vec<u32>>) -> Vec<Vec<u32>> {
    let support = |w: &[u32]| -> Vec<bool> { w.iter().map(|&v| v > 0).collect() };
    let strict_subset = |a: &[bool], b: &[bool]| a != b && a.iter().zip(b).all(|(&x, &y)| !x || y);
    let mut out: Vec<Vec<u32>> = Vec::new();
    for w in &found {
        let g = w.iter().fold(0, |acc, &v| gcd(acc, v));
        if g != 1 {
            continue;
        }
        let s = support(w);
        if found.iter().any(|o| strict_subset(&support(o), &s)) {
            continue;
        }
        if !out.contains(w) {
            out.push(w.clone());
        }
    }
    out.sort();
    out
}
