use thiserror::Error;

use crate::model::{poisson_pmf, InflowDistribution, ReactionNetwork, RnicModel};
use crate::state::StateVec;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("no closed form for this chemistry and inflow law: {0}")]
pub struct UnsupportedFamily(pub String);

/// One-species chemistries whose transient law is known exactly.
#[derive(Debug, Clone, PartialEq)]
pub enum ClosedFormFamily {
    /// `0 -> S @ kappa_b`, `S -> 0 @ kappa_d` started from Poisson(`lambda`).
    /// The law stays Poisson with mean
    /// `m(t) = (lambda - kappa_b/kappa_d) e^{-kappa_d t} + kappa_b/kappa_d`.
    BirthDeathPoissonInit { kappa_b: f64, kappa_d: f64, lambda: f64 },
    /// `0 -> S @ kappa_b` from an arbitrary finitely supported law; the
    /// content is the initial count plus an independent Poisson(`kappa_b t`).
    PureBirthAnyInit { kappa_b: f64, init: Vec<(u32, f64)> },
}

impl ClosedFormFamily {
    /// Recognizes the chemistry and inflow law of `model`.
    pub fn detect(model: &RnicModel) -> Result<Self, UnsupportedFamily> {
        let mu = model.mu.as_ref().ok_or_else(|| UnsupportedFamily("no inflow law".into()))?;
        Self::detect_parts(&model.chemistry, mu)
    }

    pub fn detect_parts(chem: &ReactionNetwork, mu: &InflowDistribution) -> Result<Self, UnsupportedFamily> {
        if chem.dim() != 1 {
            return Err(UnsupportedFamily(format!("{} species, expected 1", chem.dim())));
        }
        let mut birth = 0.0;
        let mut death = 0.0;
        for r in &chem.reactions {
            match (r.reactant[0], r.product[0]) {
                (0, 1) => birth += r.rate_constant,
                (1, 0) => death += r.rate_constant,
                _ => return Err(UnsupportedFamily(format!("reaction {}", chem.format_reaction(r)))),
            }
        }
        if death > 0.0 {
            let lambda = match mu {
                InflowDistribution::ProductPoisson(m) => m[0],
                InflowDistribution::PointMass(x) if x[0] == 0 => 0.0,
                _ => return Err(UnsupportedFamily("birth-death family needs a Poisson inflow law".into())),
            };
            return Ok(ClosedFormFamily::BirthDeathPoissonInit { kappa_b: birth, kappa_d: death, lambda });
        }
        let init = mu.support().map_err(|e| UnsupportedFamily(e.to_string()))?.into_iter().map(|(x, p)| (x[0], p)).collect();
        Ok(ClosedFormFamily::PureBirthAnyInit { kappa_b: birth, init })
    }

    /// `P(x, t)` for a one-species count `x`.
    pub fn pmf(&self, x: u32, t: f64) -> f64 {
        match self {
            ClosedFormFamily::BirthDeathPoissonInit { kappa_b, kappa_d, lambda } => {
                let eq = kappa_b / kappa_d;
                let m = (lambda - eq) * (-kappa_d * t).exp() + eq;
                poisson_pmf(m, u64::from(x))
            }
            ClosedFormFamily::PureBirthAnyInit { kappa_b, init } => {
                let mean = kappa_b * t;
                init.iter().filter(|(x0, _)| *x0 <= x).map(|&(x0, p)| p * poisson_pmf(mean, u64::from(x - x0))).sum()
            }
        }
    }
}

pub fn closed_form_pmf(family: &ClosedFormFamily, x: &StateVec, t: f64) -> Result<f64, UnsupportedFamily> {
    if x.dim() != 1 {
        return Err(UnsupportedFamily(format!("state {x} is not one-dimensional")));
    }
    Ok(family.pmf(x[0], t))
}
