//! Species-count vectors and the small integer helpers built on them.

use std::fmt;
use std::ops::{Add, Index};

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

/// Copy counts for one compartment, one entry per species.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVec(SmallVec<[u32; 4]>);

impl StateVec {
    pub fn new(counts: impl IntoIterator<Item = u32>) -> Self {
        StateVec(counts.into_iter().collect())
    }

    pub fn zeros(dim: usize) -> Self {
        StateVec(SmallVec::from_elem(0, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn counts_mut(&mut self) -> &mut [u32] {
        &mut self.0
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// Entrywise `self <= other`.
    pub fn le(&self, other: &StateVec) -> bool {
        self.dim() == other.dim() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// Entrywise difference, `None` if any entry would go negative.
    pub fn checked_sub(&self, other: &StateVec) -> Option<StateVec> {
        if self.dim() != other.dim() {
            return None;
        }
        self.0.iter().zip(&other.0).map(|(&a, &b)| a.checked_sub(b)).collect::<Option<SmallVec<_>>>().map(StateVec)
    }

    /// `self + delta`, `None` if an entry leaves `[0, u32::MAX]`.
    pub fn offset(&self, delta: &[i64]) -> Option<StateVec> {
        if delta.len() != self.dim() {
            return None;
        }
        self.0
            .iter()
            .zip(delta)
            .map(|(&c, &d)| u32::try_from(i64::from(c) + d).ok())
            .collect::<Option<SmallVec<_>>>()
            .map(StateVec)
    }

    pub fn add_assign(&mut self, other: &StateVec) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += *b;
        }
    }
}

impl Add for &StateVec {
    type Output = StateVec;

    fn add(self, rhs: &StateVec) -> StateVec {
        let mut out = self.clone();
        out.add_assign(rhs);
        out
    }
}

impl Index<usize> for StateVec {
    type Output = u32;

    fn index(&self, i: usize) -> &u32 {
        &self.0[i]
    }
}

impl From<Vec<u32>> for StateVec {
    fn from(v: Vec<u32>) -> Self {
        StateVec(SmallVec::from_vec(v))
    }
}

impl From<&[u32]> for StateVec {
    fn from(v: &[u32]) -> Self {
        StateVec(SmallVec::from_slice(v))
    }
}

impl<const N: usize> From<[u32; N]> for StateVec {
    fn from(v: [u32; N]) -> Self {
        StateVec(v.iter().copied().collect())
    }
}

/// Tuple notation, e.g. `(2,3)`.
impl fmt::Display for StateVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Debug for StateVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// `n choose k` as an exact integer, `None` on u64 overflow.
pub fn binom_u64(n: u64, k: u64) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step.
        let wide = u128::from(acc) * u128::from(n - i) / u128::from(i + 1);
        acc = u64::try_from(wide).ok()?;
    }
    Some(acc)
}

/// `n choose k` as a float. Exact whenever the integer value fits in u64.
pub fn binom_f64(n: u64, k: u64) -> f64 {
    match binom_u64(n, k) {
        Some(v) => v as f64,
        None => statrs::function::factorial::binomial(n, k),
    }
}

/// Product of per-species binomials `prod_j C(x_j, nu_j)`.
pub fn multi_binom(x: &[u32], nu: &[u32]) -> f64 {
    let mut acc = 1.0;
    for (&xj, &nj) in x.iter().zip(nu) {
        if xj < nj {
            return 0.0;
        }
        if nj > 0 {
            acc *= binom_f64(u64::from(xj), u64::from(nj));
        }
    }
    acc
}

/// FNV-1a, used for platform-stable state digests.
#[derive(Clone, Copy)]
pub(crate) struct Fnv64(u64);

impl Fnv64 {
    pub(crate) fn new() -> Self {
        Fnv64(0xcbf2_9ce4_8422_2325)
    }

    pub(crate) fn write_u32(&mut self, v: u32) {
        for b in v.to_le_bytes() {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub(crate) fn finish(self) -> u64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binom_u64(5, 2), Some(10));
        assert_eq!(binom_u64(2, 3), Some(0));
        assert_eq!(binom_u64(0, 0), Some(1));
        assert_eq!(binom_u64(62, 31), Some(465_428_353_255_261_088));
        assert_eq!(binom_u64(200, 100), None);
        let big = binom_f64(200, 100);
        assert!((big / 9.054_851_465_610_328e58 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn multi_binom_zero_below_reactant() {
        assert_eq!(multi_binom(&[3, 2], &[1, 1]), 6.0);
        assert_eq!(multi_binom(&[0, 2], &[1, 0]), 0.0);
    }

    #[test]
    fn offsets() {
        let x = StateVec::from([3, 2]);
        assert_eq!(x.offset(&[-1, -1]), Some(StateVec::from([2, 1])));
        assert_eq!(x.offset(&[-4, 0]), None);
        assert_eq!(x.checked_sub(&StateVec::from([1, 2])), Some(StateVec::from([2, 0])));
        assert_eq!(x.to_string(), "(3,2)");
    }
}
