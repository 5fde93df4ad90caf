//! Product-form stationary law for models without fragmentation or
//! coagulation.
//!
//! When `kappa_F = kappa_C = 0` and `kappa_E > 0` compartments never interact:
//! each one is born with content drawn from `mu`, runs the chemistry on its
//! own and leaves after an Exponential(`kappa_E`) lifetime. The stationary
//! law is
//!
//! ```text
//! pi(n) = prod_x alpha(x)^{n_x} / n_x!  *  e^{-kI/kE} (kI/kE)^{|n|}
//! alpha(x) = int_0^inf P_mu(x, t) kE e^{-kE t} dt
//! ```
//!
//! so the compartment count is Poisson(`kI/kE`) and, given the count, the
//! contents are i.i.d. with law `alpha`.

mod compare;
mod quadrature;

use std::fmt::Write;

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::factorial::ln_factorial;
use thiserror::Error;

use crate::coarse::CoarseState;
use crate::crn::cme::{box_index, box_size, box_state, MAX_BOX_STATES};
use crate::crn::{solve_cme_visit, ClosedFormFamily, CmeError, CmeOptions};
use crate::model::{poisson_pmf, CompartmentParams, RnicModel};
use crate::state::StateVec;

pub use compare::{compare_empirical, compare_stats, ComparisonReport, EmpiricalStats, INSUFFICIENT_DATA, PRECONDITION_MISMATCH};
pub use quadrature::{ExpQuadrature, QuadOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StationaryError {
    #[error("precondition violated: {0}")]
    PreconditionViolation(String),
    #[error("box too small: alpha mass {outside:.3e} lies outside the box (tolerance {tol:.1e})")]
    BoxTooSmall { outside: f64, tol: f64 },
    #[error("box has {got} bounds for {expected} species")]
    BoxDimension { expected: usize, got: usize },
    #[error("box has too many states")]
    BoxTooLarge,
    #[error("state {0} lies outside the alpha table")]
    AlphaNotCovering(StateVec),
    #[error(transparent)]
    Cme(#[from] CmeError),
}

/// How `P_mu(x, t)` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AlphaRoute {
    /// Closed form when the chemistry is a recognized family, CME otherwise.
    Auto,
    ClosedForm,
    Cme,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaOptions {
    pub quad: QuadOptions,
    pub route: AlphaRoute,
    pub cme: CmeOptions,
    /// Largest alpha mass allowed outside the box.
    pub max_outside: f64,
}

impl Default for AlphaOptions {
    fn default() -> Self {
        AlphaOptions {
            quad: QuadOptions::default(),
            route: AlphaRoute::Auto,
            cme: CmeOptions { atol: 1e-12, rtol: 1e-10, leak_tol: f64::INFINITY },
            max_outside: 1e-8,
        }
    }
}

/// `alpha` on the box `0 <= x <= upper`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaTable {
    pub species: Vec<String>,
    pub upper: Vec<u32>,
    /// Values in box order, last species fastest.
    pub values: Vec<f64>,
    /// Mass outside the box plus the mass beyond the quadrature horizon.
    pub tail_mass: f64,
    pub kappa_e: f64,
    /// Route actually used.
    pub route: AlphaRoute,
}

impl AlphaTable {
    /// `alpha(x)`, or `None` when `x` is outside the box.
    pub fn get(&self, x: &StateVec) -> Option<f64> {
        box_index(&self.upper, x).map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateVec, f64)> + '_ {
        self.values.iter().enumerate().map(|(i, &v)| (box_state(&self.upper, i), v))
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Per-species mean over the box.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.upper.len()];
        for (x, v) in self.iter() {
            for (k, mk) in m.iter_mut().enumerate() {
                *mk += v * f64::from(x[k]);
            }
        }
        m
    }

    /// Per-species variance over the box.
    pub fn variance(&self) -> Vec<f64> {
        let mean = self.mean();
        let mut var = vec![0.0; self.upper.len()];
        for (x, v) in self.iter() {
            for (k, vk) in var.iter_mut().enumerate() {
                *vk += v * (f64::from(x[k]) - mean[k]).powi(2);
            }
        }
        var
    }

    /// Species columns followed by an `alpha` column.
    pub fn to_csv(&self) -> String {
        let mut out = self.species.join(",");
        out.push_str(",alpha\n");
        for (x, v) in self.iter() {
            for c in x.counts() {
                write!(out, "{c},").unwrap();
            }
            writeln!(out, "{v:e}").unwrap();
        }
        out
    }
}

fn check_preconditions(p: &CompartmentParams) -> Result<(), StationaryError> {
    if p.kappa_f != 0.0 || p.kappa_c != 0.0 {
        return Err(StationaryError::PreconditionViolation(format!(
            "the product form needs kappa_F = kappa_C = 0 (got kappa_F = {}, kappa_C = {})",
            p.kappa_f, p.kappa_c
        )));
    }
    if p.kappa_e <= 0.0 {
        return Err(StationaryError::PreconditionViolation("the product form needs kappa_E > 0".into()));
    }
    Ok(())
}

/// Computes `alpha` on the box `0 <= x <= upper` by quadrature of
/// `P_mu(x, t)` against the Exponential(`kappa_E`) density.
pub fn alpha(model: &RnicModel, upper: &[u32], opts: &AlphaOptions) -> Result<AlphaTable, StationaryError> {
    let p = &model.compartments;
    check_preconditions(p)?;
    let mu = model.mu.as_ref().ok_or_else(|| StationaryError::PreconditionViolation("an inflow law mu is required".into()))?;
    if upper.len() != model.dim() {
        return Err(StationaryError::BoxDimension { expected: model.dim(), got: upper.len() });
    }
    let n = box_size(upper).filter(|&s| s <= MAX_BOX_STATES).ok_or(StationaryError::BoxTooLarge)?;
    let quad = ExpQuadrature::new(p.kappa_e, &opts.quad);
    let family = match opts.route {
        AlphaRoute::Cme => None,
        AlphaRoute::Auto => ClosedFormFamily::detect_parts(&model.chemistry, mu).ok(),
        AlphaRoute::ClosedForm => Some(
            ClosedFormFamily::detect_parts(&model.chemistry, mu)
                .map_err(|e| StationaryError::PreconditionViolation(e.to_string()))?,
        ),
    };
    let (values, route) = match family {
        Some(f) => {
            let values: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let x = box_state(upper, i)[0];
                    quad.integrate(|t| f.pmf(x, t))
                })
                .collect();
            (values, AlphaRoute::ClosedForm)
        }
        None => {
            let mut grid = Vec::with_capacity(quad.nodes.len() + 1);
            grid.push(0.0);
            grid.extend_from_slice(&quad.nodes);
            let mut values = vec![0.0; n];
            let mut j = 0;
            solve_cme_visit(&model.chemistry, mu, &grid, upper, opts.cme, |t, probs, _| {
                if t > 0.0 {
                    let w = quad.weights[j];
                    j += 1;
                    for (v, &pr) in values.iter_mut().zip(probs) {
                        *v += w * pr.max(0.0);
                    }
                }
            })?;
            (values, AlphaRoute::Cme)
        }
    };
    let inside: f64 = values.iter().sum();
    let weight_total: f64 = quad.weights.iter().sum();
    let outside = (weight_total - inside).max(0.0);
    if outside > opts.max_outside {
        return Err(StationaryError::BoxTooSmall { outside, tol: opts.max_outside });
    }
    Ok(AlphaTable {
        species: model.chemistry.species.names().to_vec(),
        upper: upper.to_vec(),
        values,
        tail_mass: outside + quad.tail,
        kappa_e: p.kappa_e,
        route,
    })
}

/// `log pi(n)`; `-inf` when some occupied content has `alpha(x) = 0`.
pub fn log_pi(n: &CoarseState, alpha: &AlphaTable, p: &CompartmentParams) -> Result<f64, StationaryError> {
    if p.kappa_e <= 0.0 {
        return Err(StationaryError::PreconditionViolation("the product form needs kappa_E > 0".into()));
    }
    let ratio = p.kappa_i / p.kappa_e;
    let size = n.num_compartments();
    let mut acc = -ratio;
    if size > 0 {
        if ratio == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        acc += size as f64 * ratio.ln();
    }
    for (x, k) in n.iter() {
        let a = alpha.get(x).ok_or_else(|| StationaryError::AlphaNotCovering(x.clone()))?;
        if a == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        acc += f64::from(k) * a.ln() - ln_factorial(u64::from(k));
    }
    Ok(acc)
}

/// Poisson law of the stationary compartment count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoissonLaw {
    pub mean: f64,
}

impl PoissonLaw {
    pub fn pmf(&self, k: u64) -> f64 {
        poisson_pmf(self.mean, k)
    }

    /// Smallest `k` with `P(K > k) < eps`.
    pub fn quantile_upper(&self, eps: f64) -> u64 {
        let mut cdf = 0.0;
        let mut k = 0;
        loop {
            cdf += self.pmf(k);
            if 1.0 - cdf < eps || self.pmf(k) == 0.0 && k as f64 > self.mean {
                return k;
            }
            k += 1;
        }
    }
}

pub fn compartment_count_marginal(p: &CompartmentParams) -> Result<PoissonLaw, StationaryError> {
    if p.kappa_e <= 0.0 {
        return Err(StationaryError::PreconditionViolation("the compartment count is stationary only for kappa_E > 0".into()));
    }
    Ok(PoissonLaw { mean: p.kappa_i / p.kappa_e })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;
    use proptest::prelude::*;

    const EX5_2: &str = "species S; rxn 0 -> S @ 2; rxn S -> 0 @ 1; compartments I=2 E=1 F=0 C=0; mu poisson 3;";

    #[test]
    fn stationary_birth_death_start_gives_poisson() {
        let m = parse_model("species S; rxn 0 -> S @ 3; rxn S -> 0 @ 1; compartments I=2 E=1 F=0 C=0; mu poisson 3;").unwrap();
        let a = alpha(&m, &[40], &AlphaOptions::default()).unwrap();
        assert_eq!(a.route, AlphaRoute::ClosedForm);
        for (x, v) in a.iter() {
            assert!((v - poisson_pmf(3.0, u64::from(x[0]))).abs() < 1e-7);
        }
    }

    #[test]
    fn birth_death_mean() {
        let m = parse_model(EX5_2).unwrap();
        let a = alpha(&m, &[40], &AlphaOptions::default()).unwrap();
        // (lambda kE + kb) / (kd + kE)
        assert!((a.mean()[0] - 2.5).abs() < 1e-6);
        assert!((a.mass() + a.tail_mass - 1.0).abs() < 1e-8);
        let c = alpha(&m, &[40], &AlphaOptions { route: AlphaRoute::Cme, ..Default::default() }).unwrap();
        assert_eq!(c.route, AlphaRoute::Cme);
        assert!(a.values.iter().zip(&c.values).all(|(x, y)| (x - y).abs() < 1e-7));
    }

    #[test]
    fn no_reactions_keep_the_inflow_law() {
        let m = parse_model("species A B; compartments I=1 E=2 F=0 C=0; mu point A=2 B=1;").unwrap();
        let a = alpha(&m, &[3, 3], &AlphaOptions::default()).unwrap();
        assert_eq!(a.route, AlphaRoute::Cme);
        for (x, v) in a.iter() {
            let want = if x == StateVec::from([2, 1]) { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-9, "{x}: {v}");
        }
        assert!(a.to_csv().starts_with("A,B,alpha\n0,0,"));
    }

    #[test]
    fn preconditions() {
        let m = parse_model("species S; compartments I=1 E=1 F=0 C=1; mu point;").unwrap();
        assert!(matches!(alpha(&m, &[3], &AlphaOptions::default()), Err(StationaryError::PreconditionViolation(_))));
        let m = parse_model("species S; compartments I=1 E=0 F=0 C=0; mu point;").unwrap();
        assert!(matches!(alpha(&m, &[3], &AlphaOptions::default()), Err(StationaryError::PreconditionViolation(_))));
        let m = parse_model(EX5_2).unwrap();
        assert!(matches!(alpha(&m, &[4], &AlphaOptions::default()), Err(StationaryError::BoxTooSmall { .. })));
        assert!(matches!(alpha(&m, &[4, 4], &AlphaOptions::default()), Err(StationaryError::BoxDimension { .. })));
        assert!(compartment_count_marginal(&CompartmentParams::new(1.0, 0.0, 0.0, 0.0)).is_err());
    }

    fn point_alpha(x0: [u32; 1]) -> AlphaTable {
        let m = parse_model(&format!("species S; compartments I=2 E=1 F=0 C=0; mu point S={};", x0[0])).unwrap();
        alpha(&m, &[3], &AlphaOptions::default()).unwrap()
    }

    #[test]
    fn log_pi_values() {
        let p = CompartmentParams::new(2.0, 1.0, 0.0, 0.0);
        let a = point_alpha([1]);
        assert_eq!(log_pi(&CoarseState::empty(), &a, &p).unwrap(), -2.0);
        let n = CoarseState::from_counts([(StateVec::from([1]), 2)]);
        assert!((log_pi(&n, &a, &p).unwrap() - (2f64.ln() - 2.0)).abs() < 1e-9);
        let n = CoarseState::from_counts([(StateVec::from([0]), 1)]);
        assert_eq!(log_pi(&n, &a, &p).unwrap(), f64::NEG_INFINITY);
        let n = CoarseState::from_counts([(StateVec::from([9]), 1)]);
        assert!(matches!(log_pi(&n, &a, &p), Err(StationaryError::AlphaNotCovering(_))));
        let p0 = CompartmentParams::new(0.0, 1.0, 0.0, 0.0);
        assert_eq!(log_pi(&CoarseState::empty(), &a, &p0).unwrap(), 0.0);
    }

    #[test]
    fn marginal() {
        let law = compartment_count_marginal(&CompartmentParams::new(2.0, 1.0, 0.0, 0.0)).unwrap();
        assert_eq!(law.mean, 2.0);
        assert!((law.pmf(2) - 2.0 * (-2f64).exp()).abs() < 1e-15);
        let law = compartment_count_marginal(&CompartmentParams::new(0.0, 1.0, 0.0, 0.0)).unwrap();
        assert_eq!(law.pmf(0), 1.0);
        assert_eq!(law.pmf(1), 0.0);
    }

    proptest! {
        #[test]
        fn marginal_mean_increases_with_inflow(ki in 0.0f64..10.0, dk in 0.01f64..5.0, ke in 0.1f64..5.0) {
            let a = compartment_count_marginal(&CompartmentParams::new(ki, ke, 0.0, 0.0)).unwrap();
            let b = compartment_count_marginal(&CompartmentParams::new(ki + dk, ke, 0.0, 0.0)).unwrap();
            prop_assert!(b.mean > a.mean);
            let k_max = b.quantile_upper(1e-14);
            let mean: f64 = (0..=k_max).map(|k| k as f64 * b.pmf(k)).sum();
            prop_assert!((mean - b.mean).abs() < 1e-9 * (1.0 + b.mean));
        }

        #[test]
        fn summing_pi_over_a_size_gives_the_poisson_weight(k in 0u32..5, x0 in 0u32..3) {
            // Every compartment has content x0, so the only state of size k is {x0: k}.
            let a = point_alpha([x0]);
            let p = CompartmentParams::new(2.0, 1.0, 0.0, 0.0);
            let n = CoarseState::from_counts([(StateVec::from([x0]), k)]);
            let got = log_pi(&n, &a, &p).unwrap().exp();
            prop_assert!((got - poisson_pmf(2.0, u64::from(k))).abs() < 1e-9);
        }
    }
}
