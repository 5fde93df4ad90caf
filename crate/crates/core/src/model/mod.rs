//! Model definitions: the internal chemistry, the compartment rate constants
//! and the law of newly arriving compartments.
//!
//! Models are usually read from the line-oriented DSL handled by
//! [`parse_model`] and written back with [`serialize_model`]:
//!
//! ```text
//! species A B;
//! rxn A + B -> 0 @ 10;
//! rxn 0 -> B @ 2;
//! compartments I=1 E=0 F=0 C=2;
//! mu point A=3 B=4;
//! ```

mod parse;
mod serialize;
mod validate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{parse_model, ParseError, ParseErrors};
pub use serialize::serialize_model;
pub use validate::{conservation_laws, validate, Diagnostic, Severity};

use crate::state::StateVec;

/// Probability mass beyond which a Poisson inflow law is truncated when a
/// finite support is needed.
pub const POISSON_TAIL_MASS: f64 = 1e-12;

/// Upper bound on the number of states a materialized inflow support may have.
pub const MAX_SUPPORT_STATES: usize = 1_000_000;

/// Tolerance on the total mass of a categorical inflow law.
pub const CATEGORICAL_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("inflow law has dimension {got}, chemistry has {expected} species")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("inflow law is required when kappa_I > 0")]
    MissingInflow,
    #[error("inflow support is not finite after truncation ({0} states)")]
    UnboundedMu(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeciesTable {
    names: Vec<String>,
}

impl SpeciesTable {
    /// Panics on duplicate names; the parser reports those as errors first.
    pub fn new(names: Vec<String>) -> Self {
        for (i, n) in names.iter().enumerate() {
            assert!(!names[..i].contains(n), "duplicate species {n}");
        }
        SpeciesTable { names }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// A reaction complex, stored as its stoichiometric vector.
pub type Complex = StateVec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reaction {
    pub reactant: Complex,
    pub product: Complex,
    pub rate_constant: f64,
}

impl Reaction {
    pub fn new(reactant: impl Into<Complex>, product: impl Into<Complex>, rate_constant: f64) -> Self {
        Reaction { reactant: reactant.into(), product: product.into(), rate_constant }
    }

    /// Net change `product - reactant`.
    pub fn net_change(&self) -> Vec<i64> {
        self.reactant.counts().iter().zip(self.product.counts()).map(|(&r, &p)| i64::from(p) - i64::from(r)).collect()
    }

    pub fn order(&self) -> u64 {
        self.reactant.total()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionNetwork {
    pub species: SpeciesTable,
    pub reactions: Vec<Reaction>,
}

impl ReactionNetwork {
    pub fn new(species: SpeciesTable, reactions: Vec<Reaction>) -> Self {
        ReactionNetwork { species, reactions }
    }

    pub fn dim(&self) -> usize {
        self.species.dim()
    }

    /// Human-readable complex, e.g. `A + 2B` or `0`.
    pub fn format_complex(&self, c: &Complex) -> String {
        let terms: Vec<String> = c
            .counts()
            .iter()
            .zip(self.species.names())
            .filter(|(&k, _)| k > 0)
            .map(|(&k, name)| if k == 1 { name.clone() } else { format!("{k}{name}") })
            .collect();
        if terms.is_empty() {
            "0".to_string()
        } else {
            terms.join(" + ")
        }
    }

    pub fn format_reaction(&self, r: &Reaction) -> String {
        format!("{} -> {}", self.format_complex(&r.reactant), self.format_complex(&r.product))
    }
}

/// Rate constants of the compartment network `0 <-> C <-> 2C`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CompartmentParams {
    pub kappa_i: f64,
    pub kappa_e: f64,
    pub kappa_f: f64,
    pub kappa_c: f64,
}

impl CompartmentParams {
    pub fn new(kappa_i: f64, kappa_e: f64, kappa_f: f64, kappa_c: f64) -> Self {
        CompartmentParams { kappa_i, kappa_e, kappa_f, kappa_c }
    }

    pub fn all_zero(&self) -> bool {
        self.kappa_i == 0.0 && self.kappa_e == 0.0 && self.kappa_f == 0.0 && self.kappa_c == 0.0
    }
}

/// Law of the contents of an arriving compartment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InflowDistribution {
    PointMass(StateVec),
    Categorical(Vec<(StateVec, f64)>),
    /// Independent Poisson counts with the given means.
    ProductPoisson(Vec<f64>),
}

impl InflowDistribution {
    pub fn dim(&self) -> usize {
        match self {
            InflowDistribution::PointMass(x) => x.dim(),
            InflowDistribution::Categorical(items) => items.first().map_or(0, |(x, _)| x.dim()),
            InflowDistribution::ProductPoisson(means) => means.len(),
        }
    }

    pub fn pmf(&self, x: &StateVec) -> f64 {
        match self {
            InflowDistribution::PointMass(y) => {
                if x == y {
                    1.0
                } else {
                    0.0
                }
            }
            InflowDistribution::Categorical(items) => items.iter().filter(|(y, _)| y == x).map(|(_, p)| p).sum(),
            InflowDistribution::ProductPoisson(means) => {
                if x.dim() != means.len() {
                    return 0.0;
                }
                means.iter().zip(x.counts()).map(|(&m, &k)| poisson_pmf(m, u64::from(k))).product()
            }
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let d = self.dim();
        match self {
            InflowDistribution::PointMass(x) => x.counts().iter().map(|&c| f64::from(c)).collect(),
            InflowDistribution::Categorical(items) => {
                let mut m = vec![0.0; d];
                for (x, p) in items {
                    for (acc, &c) in m.iter_mut().zip(x.counts()) {
                        *acc += p * f64::from(c);
                    }
                }
                m
            }
            InflowDistribution::ProductPoisson(means) => means.clone(),
        }
    }

    /// Finite support with its masses, in lexicographic order. Poisson laws
    /// are truncated per species once the upper tail drops below
    /// [`POISSON_TAIL_MASS`]; the retained masses are not renormalized.
    pub fn support(&self) -> Result<Vec<(StateVec, f64)>, ModelError> {
        match self {
            InflowDistribution::PointMass(x) => Ok(vec![(x.clone(), 1.0)]),
            InflowDistribution::Categorical(items) => {
                let mut out: Vec<(StateVec, f64)> = Vec::with_capacity(items.len());
                let mut sorted = items.clone();
                sorted.sort_by(|a, b| a.0.cmp(&b.0));
                for (x, p) in sorted {
                    match out.last_mut() {
                        Some((y, q)) if *y == x => *q += p,
                        _ => out.push((x, p)),
                    }
                }
                Ok(out)
            }
            InflowDistribution::ProductPoisson(means) => {
                let mut marginals = Vec::with_capacity(means.len());
                let mut size: usize = 1;
                for &m in means {
                    let upper = poisson_truncation(m).ok_or(ModelError::UnboundedMu(usize::MAX))?;
                    size = size.saturating_mul(upper as usize + 1);
                    if size > MAX_SUPPORT_STATES {
                        return Err(ModelError::UnboundedMu(size));
                    }
                    marginals.push((0..=upper).map(|k| poisson_pmf(m, k)).collect::<Vec<_>>());
                }
                let mut out = Vec::with_capacity(size);
                let mut idx = vec![0usize; means.len()];
                loop {
                    let p: f64 = idx.iter().zip(&marginals).map(|(&k, pm)| pm[k]).product();
                    out.push((StateVec::new(idx.iter().map(|&k| k as u32)), p));
                    // odometer, last species fastest
                    let mut pos = means.len();
                    loop {
                        if pos == 0 {
                            return Ok(out);
                        }
                        pos -= 1;
                        idx[pos] += 1;
                        if idx[pos] < marginals[pos].len() {
                            break;
                        }
                        idx[pos] = 0;
                    }
                }
            }
        }
    }
}

/// Smallest `k` with `P(Poisson(mean) > k) < POISSON_TAIL_MASS`.
pub(crate) fn poisson_truncation(mean: f64) -> Option<u64> {
    if !mean.is_finite() || mean < 0.0 {
        return None;
    }
    let mut cdf = 0.0;
    let mut k = 0u64;
    loop {
        cdf += poisson_pmf(mean, k);
        if 1.0 - cdf < POISSON_TAIL_MASS {
            return Some(k);
        }
        // past the mode the remaining tail is below pmf(k) * mean / (k + 1 - mean)
        if (k as f64) > mean + 1.0 {
            let p = poisson_pmf(mean, k);
            let bound = p * mean / (k as f64 + 1.0 - mean);
            if bound < POISSON_TAIL_MASS * 0.5 {
                return Some(k);
            }
        }
        k += 1;
        if k > MAX_SUPPORT_STATES as u64 {
            return None;
        }
    }
}

pub fn poisson_pmf(mean: f64, k: u64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let kf = k as f64;
    (kf * mean.ln() - mean - statrs::function::factorial::ln_factorial(k)).exp()
}

/// A full model: chemistry, compartment network and inflow law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnicModel {
    pub chemistry: ReactionNetwork,
    pub compartments: CompartmentParams,
    pub mu: Option<InflowDistribution>,
}

impl RnicModel {
    pub fn new(
        chemistry: ReactionNetwork,
        compartments: CompartmentParams,
        mu: Option<InflowDistribution>,
    ) -> Result<Self, ModelError> {
        if let Some(m) = &mu {
            if m.dim() != chemistry.dim() {
                return Err(ModelError::DimensionMismatch { expected: chemistry.dim(), got: m.dim() });
            }
        } else if compartments.kappa_i > 0.0 {
            return Err(ModelError::MissingInflow);
        }
        Ok(RnicModel { chemistry, compartments, mu })
    }

    pub fn dim(&self) -> usize {
        self.chemistry.dim()
    }

    /// Materialized inflow support, empty when `kappa_I = 0` and no law is given.
    pub fn inflow_support(&self) -> Result<Vec<(StateVec, f64)>, ModelError> {
        match &self.mu {
            Some(mu) => mu.support(),
            None => Ok(Vec::new()),
        }
    }
}
