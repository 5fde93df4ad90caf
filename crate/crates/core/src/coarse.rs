//! Occupancy representation: how many compartments hold each content vector.
//!
//! A [`CoarseState`] forgets compartment order. Its transitions and rates
//! are listed by [`CoarseModel::transitions`]:
//!
//! | kind | rate | change |
//! |---|---|---|
//! | `Inflow(x)` | `kI mu(x)` | `+e_x` |
//! | `Exit(x)` | `kE n_x` | `-e_x` |
//! | `CoagDistinct(x, y)` | `kC n_x n_y` | `+e_{x+y} - e_x - e_y` |
//! | `CoagSame(x)` | `kC C(n_x, 2)` | `+e_{2x} - 2e_x` |
//! | `Frag(z -> x, z-x)` | `kF n_z phi(z, x)`, both orders summed | `-e_z + e_x + e_{z-x}` |
//! | `Internal(x, r)` | `n_x lambda_r(x)` | `-e_x + e_{x + nu'_r - nu_r}` |
//!
//! Fragmentation daughters are unordered: each split is listed once with
//! `x <= z - x` in lexicographic order.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::crn::propensity;
use crate::model::{ModelError, RnicModel};
use crate::state::{binom_f64, binom_u64, Fnv64, StateVec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoarseError {
    #[error("transition {0} cannot be applied: it would make an occupancy negative")]
    InvalidTransition(String),
    #[error("cannot parse coarse state: {0}")]
    Parse(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Finitely supported map from content vector to a positive compartment count.
/// Serializes as its canonical text.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct CoarseState {
    occ: BTreeMap<StateVec, u32>,
}

impl CoarseState {
    pub fn empty() -> Self {
        CoarseState::default()
    }

    /// Builds the occupancy of an ordered list of compartments.
    pub fn from_compartments<'a>(compartments: impl IntoIterator<Item = &'a StateVec>) -> Self {
        let mut n = CoarseState::empty();
        for x in compartments {
            n.add(x, 1);
        }
        n
    }

    pub fn from_sim(s: &crate::sim::SimState) -> Self {
        CoarseState::from_compartments(s.compartments())
    }

    pub fn from_counts(items: impl IntoIterator<Item = (StateVec, u32)>) -> Self {
        let mut n = CoarseState::empty();
        for (x, k) in items {
            n.add(&x, k);
        }
        n
    }

    pub fn get(&self, x: &StateVec) -> u32 {
        self.occ.get(x).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateVec, u32)> {
        self.occ.iter().map(|(x, &k)| (x, k))
    }

    pub fn support_len(&self) -> usize {
        self.occ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occ.is_empty()
    }

    pub fn add(&mut self, x: &StateVec, k: u32) {
        if k > 0 {
            *self.occ.entry(x.clone()).or_insert(0) += k;
        }
    }

    /// Removes `k` compartments with content `x`; `false` if there are fewer.
    pub fn remove(&mut self, x: &StateVec, k: u32) -> bool {
        match self.occ.get_mut(x) {
            Some(c) if *c > k => {
                *c -= k;
                true
            }
            Some(c) if *c == k => {
                self.occ.remove(x);
                true
            }
            _ => k == 0,
        }
    }

    /// Number of compartments, `C(n) = ||n||_1`.
    pub fn num_compartments(&self) -> u64 {
        self.occ.values().map(|&k| u64::from(k)).sum()
    }

    /// Total count of species `k` over all compartments.
    pub fn species_total(&self, k: usize) -> u64 {
        self.occ.iter().map(|(x, &c)| u64::from(c) * u64::from(x[k])).sum()
    }

    pub fn species_totals(&self, dim: usize) -> Vec<u64> {
        (0..dim).map(|k| self.species_total(k)).collect()
    }

    /// Platform-stable FNV-1a hash of the canonical content.
    pub fn digest(&self) -> u64 {
        let mut h = Fnv64::new();
        for (x, &k) in &self.occ {
            h.write_u32(x.dim() as u32);
            for &c in x.counts() {
                h.write_u32(c);
            }
            h.write_u32(k);
        }
        h.finish()
    }
}

/// Canonical encoding, e.g. `{(0,1):1,(2,2):2}`.
impl fmt::Display for CoarseState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (x, k)) in self.occ.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{x}:{k}")?;
        }
        f.write_str("}")
    }
}

impl fmt::Debug for CoarseState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for CoarseState {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CoarseState {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for CoarseState {
    type Err = CoarseError;

    fn from_str(s: &str) -> Result<Self, CoarseError> {
        let bad = |m: &str| CoarseError::Parse(format!("{m} in '{s}'"));
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let body = compact.strip_prefix('{').and_then(|b| b.strip_suffix('}')).ok_or_else(|| bad("expected braces"))?;
        let mut n = CoarseState::empty();
        let mut dim = None;
        let mut rest = body;
        while !rest.is_empty() {
            let inner_end = rest.find(')').ok_or_else(|| bad("unclosed vector"))?;
            let vec_text = rest[..inner_end].strip_prefix('(').ok_or_else(|| bad("expected '('"))?;
            let counts =
                vec_text.split(',').map(|c| c.parse::<u32>()).collect::<Result<Vec<_>, _>>().map_err(|_| bad("invalid count"))?;
            if *dim.get_or_insert(counts.len()) != counts.len() {
                return Err(bad("vectors of different lengths"));
            }
            rest = rest[inner_end + 1..].strip_prefix(':').ok_or_else(|| bad("expected ':'"))?;
            let end = rest.find(',').unwrap_or(rest.len());
            let k: u32 = rest[..end].parse().map_err(|_| bad("invalid occupancy"))?;
            if k == 0 {
                return Err(bad("zero occupancy"));
            }
            n.add(&StateVec::from(counts), k);
            rest = rest.get(end + 1..).unwrap_or("");
        }
        Ok(n)
    }
}

/// `phi(z, x) = prod_k C(z_k, x_k) 2^{-z_k}`, zero unless `0 <= x <= z`.
pub fn split_prob(z: &StateVec, x: &StateVec) -> f64 {
    if !x.le(z) {
        return 0.0;
    }
    z.counts().iter().zip(x.counts()).map(|(&zk, &xk)| binom_f64(u64::from(zk), u64::from(xk)) * 0.5f64.powi(zk as i32)).product()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TransitionKind {
    Inflow(StateVec),
    Exit(StateVec),
    CoagDistinct(StateVec, StateVec),
    CoagSame(StateVec),
    Frag { parent: StateVec, a: StateVec, b: StateVec },
    Internal(StateVec, usize),
}

impl fmt::Display for TransitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransitionKind::Inflow(x) => write!(f, "Inflow{x}"),
            TransitionKind::Exit(x) => write!(f, "Exit{x}"),
            TransitionKind::CoagDistinct(x, y) => write!(f, "CoagDistinct({x},{y})"),
            TransitionKind::CoagSame(x) => write!(f, "CoagSame{x}"),
            TransitionKind::Frag { parent, a, b } => write!(f, "Frag({parent}->{a}+{b})"),
            TransitionKind::Internal(x, r) => write!(f, "Internal({x},r{r})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoarseTransition {
    pub kind: TransitionKind,
    pub rate: f64,
    /// Occupancy changes, sorted by content and merged.
    pub delta: Vec<(StateVec, i64)>,
}

fn make_delta(items: &[(&StateVec, i64)]) -> Vec<(StateVec, i64)> {
    let mut map: BTreeMap<StateVec, i64> = BTreeMap::new();
    for (x, d) in items {
        *map.entry((*x).clone()).or_insert(0) += d;
    }
    map.into_iter().filter(|(_, d)| *d != 0).collect()
}

/// A model prepared for repeated transition enumeration, with the inflow
/// support materialized once.
#[derive(Debug, Clone)]
pub struct CoarseModel<'a> {
    pub model: &'a RnicModel,
    inflow: Vec<(StateVec, f64)>,
}

impl<'a> CoarseModel<'a> {
    pub fn new(model: &'a RnicModel) -> Result<Self, ModelError> {
        let inflow = if model.compartments.kappa_i > 0.0 { model.inflow_support()? } else { Vec::new() };
        Ok(CoarseModel { model, inflow })
    }

    pub fn inflow_support(&self) -> &[(StateVec, f64)] {
        &self.inflow
    }

    pub fn transitions(&self, n: &CoarseState) -> Vec<CoarseTransition> {
        let p = &self.model.compartments;
        let mut out = Vec::new();
        let mut push = |kind, rate: f64, delta: Vec<(StateVec, i64)>| {
            if rate > 0.0 {
                out.push(CoarseTransition { kind, rate, delta });
            }
        };
        for (x, q) in &self.inflow {
            push(TransitionKind::Inflow(x.clone()), p.kappa_i * q, make_delta(&[(x, 1)]));
        }
        let occ: Vec<(&StateVec, u32)> = n.iter().collect();
        for &(x, k) in &occ {
            push(TransitionKind::Exit(x.clone()), p.kappa_e * f64::from(k), make_delta(&[(x, -1)]));
        }
        if p.kappa_c > 0.0 {
            for (i, &(x, kx)) in occ.iter().enumerate() {
                if kx >= 2 {
                    let pairs = binom_u64(u64::from(kx), 2).unwrap() as f64;
                    let sum = x + x;
                    push(TransitionKind::CoagSame(x.clone()), p.kappa_c * pairs, make_delta(&[(x, -2), (&sum, 1)]));
                }
                for &(y, ky) in &occ[i + 1..] {
                    let sum = x + y;
                    push(
                        TransitionKind::CoagDistinct(x.clone(), y.clone()),
                        p.kappa_c * f64::from(kx) * f64::from(ky),
                        make_delta(&[(x, -1), (y, -1), (&sum, 1)]),
                    );
                }
            }
        }
        if p.kappa_f > 0.0 {
            for &(z, kz) in &occ {
                for_each_sub_vector(z, |a| {
                    let b = z.checked_sub(a).unwrap();
                    if *a > b {
                        return;
                    }
                    let phi = if *a == b { split_prob(z, a) } else { split_prob(z, a) + split_prob(z, &b) };
                    let delta = make_delta(&[(z, -1), (a, 1), (&b, 1)]);
                    push(TransitionKind::Frag { parent: z.clone(), a: a.clone(), b }, p.kappa_f * f64::from(kz) * phi, delta);
                });
            }
        }
        for &(x, k) in &occ {
            for (ri, r) in self.model.chemistry.reactions.iter().enumerate() {
                let a = propensity(r, x);
                if a > 0.0 {
                    let mut y = x.checked_sub(&r.reactant).unwrap();
                    y.add_assign(&r.product);
                    push(TransitionKind::Internal(x.clone(), ri), f64::from(k) * a, make_delta(&[(x, -1), (&y, 1)]));
                }
            }
        }
        out
    }

    /// Total jump rate out of `n`.
    pub fn exit_rate(&self, n: &CoarseState) -> f64 {
        self.transitions(n).iter().map(|t| t.rate).sum()
    }

    /// `sum_t rate_t (V(n') - V(n))`.
    pub fn generator_apply(&self, v: impl Fn(&CoarseState) -> f64, n: &CoarseState) -> f64 {
        let vn = v(n);
        self.transitions(n)
            .iter()
            .map(|t| t.rate * (v(&apply_transition(n, t).expect("enumerated transition applies")) - vn))
            .sum()
    }
}

/// Calls `f` on every `0 <= a <= z`, last species fastest.
pub fn for_each_sub_vector(z: &StateVec, mut f: impl FnMut(&StateVec)) {
    let mut a = StateVec::zeros(z.dim());
    loop {
        f(&a);
        let mut k = z.dim();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            let c = &mut a.counts_mut()[k];
            if *c < z[k] {
                *c += 1;
                break;
            }
            *c = 0;
        }
    }
}

pub fn enumerate_transitions(n: &CoarseState, model: &RnicModel) -> Result<Vec<CoarseTransition>, ModelError> {
    Ok(CoarseModel::new(model)?.transitions(n))
}

pub fn apply_transition(n: &CoarseState, t: &CoarseTransition) -> Result<CoarseState, CoarseError> {
    let mut out = n.clone();
    for (x, d) in &t.delta {
        if *d < 0 && !out.remove(x, (-d) as u32) {
            return Err(CoarseError::InvalidTransition(t.kind.to_string()));
        }
    }
    for (x, d) in &t.delta {
        if *d > 0 {
            out.add(x, *d as u32);
        }
    }
    Ok(out)
}

pub fn generator_apply(v: impl Fn(&CoarseState) -> f64, n: &CoarseState, model: &RnicModel) -> Result<f64, ModelError> {
    Ok(CoarseModel::new(model)?.generator_apply(v, n))
}

/// Every coarse state with at most `max_compartments` compartments whose
/// contents lie in the box `0 <= x <= upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub min_compartments: usize,
    pub max_compartments: usize,
    pub upper: Vec<u32>,
    /// Optional cap on the summed species count over all compartments.
    pub max_total: Option<u64>,
}

impl Region {
    pub fn new(max_compartments: usize, upper: Vec<u32>) -> Self {
        Region { min_compartments: 0, max_compartments, upper, max_total: None }
    }

    pub fn with_max_total(mut self, cap: u64) -> Self {
        self.max_total = Some(cap);
        self
    }

    pub fn with_min_compartments(mut self, min: usize) -> Self {
        self.min_compartments = min;
        self
    }

    /// All states of the region in a deterministic order.
    pub fn states(&self) -> Vec<CoarseState> {
        let boxes: Vec<StateVec> = {
            let mut v = Vec::new();
            for_each_sub_vector(&StateVec::from(self.upper.clone()), |x| v.push(x.clone()));
            v
        };
        let mut out = Vec::new();
        let mut picks: Vec<usize> = Vec::new();
        self.recurse(&boxes, 0, 0, &mut picks, &mut out);
        out
    }

    fn recurse(&self, boxes: &[StateVec], start: usize, total: u64, picks: &mut Vec<usize>, out: &mut Vec<CoarseState>) {
        if picks.len() >= self.min_compartments {
            out.push(CoarseState::from_compartments(picks.iter().map(|&i| &boxes[i])));
        }
        if picks.len() == self.max_compartments {
            return;
        }
        for (i, x) in boxes.iter().enumerate().skip(start) {
            let t = total + x.total();
            if self.max_total.is_some_and(|cap| t > cap) {
                continue;
            }
            picks.push(i);
            self.recurse(boxes, i, t, picks, out);
            picks.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;
    use proptest::prelude::*;

    fn sv<const N: usize>(v: [u32; N]) -> StateVec {
        StateVec::from(v)
    }

    #[test]
    fn occupancy_from_tuple() {
        let n = CoarseState::from_compartments(&[sv([2, 2]), sv([0, 1]), sv([2, 2]), sv([1, 12])]);
        assert_eq!(n.get(&sv([2, 2])), 2);
        assert_eq!(n.get(&sv([0, 1])), 1);
        assert_eq!(n.get(&sv([1, 12])), 1);
        assert_eq!(n.num_compartments(), 4);
        assert_eq!(n.to_string(), "{(0,1):1,(1,12):1,(2,2):2}");
        assert!(CoarseState::from_compartments(&[]).is_empty());
        assert_eq!(CoarseState::from_compartments(&[sv([5]), sv([5]), sv([5])]).to_string(), "{(5):3}");
    }

    #[test]
    fn text_round_trip() {
        let n: CoarseState = "{(0,1):1, (2,2):2}".parse().unwrap();
        assert_eq!(n.to_string(), "{(0,1):1,(2,2):2}");
        assert_eq!("{}".parse::<CoarseState>().unwrap(), CoarseState::empty());
        assert!("{(1):0}".parse::<CoarseState>().is_err());
        assert!("{(1):1,(1,2):1}".parse::<CoarseState>().is_err());
    }

    #[test]
    fn split_probabilities() {
        assert_eq!(split_prob(&sv([2, 0]), &sv([1, 0])), 0.5);
        assert_eq!(split_prob(&sv([0, 0, 0]), &sv([0, 0, 0])), 1.0);
        assert_eq!(split_prob(&sv([1, 0]), &sv([2, 0])), 0.0);
        let mut total = 0.0;
        let mut count = 0;
        for_each_sub_vector(&sv([4, 2]), |x| {
            total += split_prob(&sv([4, 2]), x);
            count += 1;
        });
        assert_eq!(count, 15);
        assert!((total - 1.0).abs() < 1e-15);
    }

    fn model(text: &str) -> RnicModel {
        parse_model(text).unwrap()
    }

    #[test]
    fn coagulation_rates() {
        let m = model("species S; compartments I=0 E=0 F=0 C=2;");
        let ts = enumerate_transitions(&CoarseState::from_counts([(sv([5]), 3)]), &m).unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(ts[0].kind, TransitionKind::CoagSame(sv([5])));
        assert_eq!(ts[0].rate, 6.0);

        let m = model("species A B; compartments I=0 E=0 F=0 C=1;");
        let n = CoarseState::from_counts([(sv([2, 2]), 1), (sv([0, 1]), 1)]);
        let ts = enumerate_transitions(&n, &m).unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(ts[0].rate, 1.0);
        assert_eq!(apply_transition(&n, &ts[0]).unwrap().to_string(), "{(2,3):1}");
    }

    #[test]
    fn inflow_from_empty() {
        let m = model("species A B; compartments I=2 E=1 F=1 C=1; mu point A=3 B=4;");
        let ts = enumerate_transitions(&CoarseState::empty(), &m).unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(ts[0].kind, TransitionKind::Inflow(sv([3, 4])));
        assert_eq!(ts[0].rate, 2.0);
    }

    #[test]
    fn applying_table_rows() {
        let m = model("species A B; rxn A + 2B -> A @ 1; compartments I=0 E=0 F=1 C=1;");
        let n = CoarseState::from_counts([(sv([2, 2]), 2)]);
        let t = CoarseTransition {
            kind: TransitionKind::CoagSame(sv([2, 2])),
            rate: 1.0,
            delta: make_delta(&[(&sv([2, 2]), -2), (&sv([4, 4]), 1)]),
        };
        assert_eq!(apply_transition(&n, &t).unwrap().to_string(), "{(4,4):1}");

        let n = CoarseState::from_counts([(sv([2, 2]), 1)]);
        let ts = enumerate_transitions(&n, &m).unwrap();
        let frag = ts.iter().find(|t| matches!(&t.kind, TransitionKind::Frag { a, .. } if *a == sv([1, 0]))).unwrap();
        assert_eq!(apply_transition(&n, frag).unwrap().to_string(), "{(1,0):1,(1,2):1}");
        // phi((2,2),(1,0)) + phi((2,2),(1,2)) = 2 * 2/4 * 1/4
        assert!((frag.rate - 0.25).abs() < 1e-15);

        let n = CoarseState::from_counts([(sv([1, 12]), 1)]);
        let ts = enumerate_transitions(&n, &m).unwrap();
        let int = ts.iter().find(|t| matches!(t.kind, TransitionKind::Internal(_, 0))).unwrap();
        assert_eq!(apply_transition(&n, int).unwrap().to_string(), "{(1,10):1}");

        let bogus = CoarseTransition { kind: TransitionKind::Exit(sv([9, 9])), rate: 1.0, delta: vec![(sv([9, 9]), -1)] };
        assert!(matches!(apply_transition(&n, &bogus), Err(CoarseError::InvalidTransition(_))));
    }

    #[test]
    fn fragmentation_rates_sum_to_kappa_f_per_compartment() {
        let m = model("species A B; compartments I=0 E=0 F=1.5 C=0;");
        let n = CoarseState::from_counts([(sv([3, 2]), 2), (sv([0, 0]), 1)]);
        let total: f64 = enumerate_transitions(&n, &m).unwrap().iter().map(|t| t.rate).sum();
        assert!((total - 1.5 * 3.0).abs() < 1e-12);
    }

    #[test]
    fn generator_of_constant_is_zero() {
        let m = model("species S; rxn 0 -> S @ 1; rxn S -> 2S @ 1; compartments I=1 E=1 F=1 C=1; mu point S=1;");
        let n = CoarseState::from_counts([(sv([3]), 2), (sv([0]), 1)]);
        assert_eq!(generator_apply(|_| 4.0, &n, &m).unwrap(), 0.0);
    }

    #[test]
    fn region_counts() {
        // multisets of size <= 2 from 3 contents: 1 + 3 + 6
        assert_eq!(Region::new(2, vec![2]).states().len(), 10);
        let capped = Region::new(3, vec![5]).with_max_total(2).states();
        assert!(capped.iter().all(|n| n.species_total(0) <= 2));
        assert_eq!(Region::new(3, vec![1]).with_min_compartments(3).states().len(), 4);
    }

    fn arb_coarse() -> impl Strategy<Value = CoarseState> {
        prop::collection::vec((prop::collection::vec(0u32..6, 2), 1u32..4), 0..4)
            .prop_map(|items| CoarseState::from_counts(items.into_iter().map(|(x, k)| (StateVec::from(x), k))))
    }

    proptest! {
        #[test]
        fn phi_normalizes(z in prop::collection::vec(0u32..=12, 1..3)) {
            let z = StateVec::from(z);
            let mut total = 0.0;
            for_each_sub_vector(&z, |x| total += split_prob(&z, x));
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn compartment_events_conserve_species(n in arb_coarse()) {
            let m = model("species A B; rxn A -> B @ 1; compartments I=1 E=1 F=1 C=1; mu point A=1;");
            for t in enumerate_transitions(&n, &m).unwrap() {
                let after = apply_transition(&n, &t).unwrap();
                let dc = after.num_compartments() as i64 - n.num_compartments() as i64;
                let expected = match t.kind {
                    TransitionKind::Inflow(_) | TransitionKind::Frag { .. } => 1,
                    TransitionKind::Exit(_) | TransitionKind::CoagSame(_) | TransitionKind::CoagDistinct(..) => -1,
                    TransitionKind::Internal(..) => 0,
                };
                prop_assert_eq!(dc, expected);
                if matches!(t.kind, TransitionKind::Frag { .. } | TransitionKind::CoagSame(_) | TransitionKind::CoagDistinct(..)) {
                    prop_assert_eq!(after.species_totals(2), n.species_totals(2));
                }
                prop_assert!(t.rate > 0.0);
            }
        }

        #[test]
        fn text_encoding_round_trips(n in arb_coarse()) {
            prop_assert_eq!(n.to_string().parse::<CoarseState>().unwrap(), n);
        }
    }
}
