//! Single-compartment mass-action chemistry.

mod closed_form;
pub(crate) mod cme;

use thiserror::Error;

pub use closed_form::{closed_form_pmf, ClosedFormFamily, UnsupportedFamily};
pub use cme::{solve_cme, solve_cme_visit, solve_cme_with_retry, CmeError, CmeOptions, TruncatedDistribution};

use crate::model::{Reaction, ReactionNetwork};
use crate::state::{multi_binom, StateVec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrnError {
    #[error("reaction {reaction} fired in state {state} where its propensity is zero")]
    FiredAtZeroPropensity { reaction: String, state: String },
}

/// Mass-action rate `kappa_r * prod_j C(x_j, nu_j)`.
pub fn propensity(r: &Reaction, x: &StateVec) -> f64 {
    if r.rate_constant == 0.0 {
        return 0.0;
    }
    r.rate_constant * multi_binom(x.counts(), r.reactant.counts())
}

/// Fills `out[i]` with the propensity of reaction `i` and returns their sum.
pub fn propensities_into(chem: &ReactionNetwork, x: &StateVec, out: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for (slot, r) in out.iter_mut().zip(&chem.reactions) {
        *slot = propensity(r, x);
        total += *slot;
    }
    total
}

pub fn apply_reaction(x: &StateVec, r: &Reaction) -> Result<StateVec, CrnError> {
    let zero =
        || CrnError::FiredAtZeroPropensity { reaction: format!("{:?} -> {:?}", r.reactant, r.product), state: x.to_string() };
    if propensity(r, x) <= 0.0 {
        return Err(zero());
    }
    let mut y = x.checked_sub(&r.reactant).ok_or_else(zero)?;
    y.add_assign(&r.product);
    Ok(y)
}

/// `sum_r lambda_r(x) (V(x + nu'_r - nu_r) - V(x))`.
pub fn generator_apply_chem(chem: &ReactionNetwork, v: impl Fn(&StateVec) -> f64, x: &StateVec) -> f64 {
    let vx = v(x);
    chem.reactions
        .iter()
        .filter_map(|r| {
            let a = propensity(r, x);
            (a > 0.0).then(|| a * (v(&apply_reaction(x, r).expect("positive propensity")) - vx))
        })
        .sum()
}
