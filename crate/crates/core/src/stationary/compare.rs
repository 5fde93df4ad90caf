use std::collections::BTreeMap;

use serde::Serialize;

use super::{AlphaTable, PoissonLaw};
use crate::coarse::CoarseState;
use crate::model::CompartmentParams;
use crate::state::StateVec;

/// Running histograms of sampled coarse states.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmpiricalStats {
    pub samples: u64,
    /// Histogram of the compartment count.
    pub count_hist: BTreeMap<u64, u64>,
    /// Histogram of compartment contents, pooled over compartments and samples.
    pub content_hist: BTreeMap<StateVec, u64>,
}

impl EmpiricalStats {
    pub fn add(&mut self, n: &CoarseState) {
        self.samples += 1;
        *self.count_hist.entry(n.num_compartments()).or_default() += 1;
        for (x, k) in n.iter() {
            *self.content_hist.entry(x.clone()).or_default() += u64::from(k);
        }
    }

    pub fn compartments_observed(&self) -> u64 {
        self.content_hist.values().sum()
    }

    pub fn merge(&mut self, other: &EmpiricalStats) {
        self.samples += other.samples;
        for (k, c) in &other.count_hist {
            *self.count_hist.entry(*k).or_default() += c;
        }
        for (x, c) in &other.content_hist {
            *self.content_hist.entry(x.clone()).or_default() += c;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub samples: u64,
    pub compartments_observed: u64,
    pub m_c_mean_empirical: Option<f64>,
    pub m_c_mean_expected: Option<f64>,
    /// Total variation between the empirical compartment count law and
    /// Poisson(`kappa_I/kappa_E`).
    pub tv_compartment_count: Option<f64>,
    pub content_mean_empirical: Option<Vec<f64>>,
    pub content_mean_alpha: Vec<f64>,
    /// Total variation between the pooled content law and `alpha`; the mass
    /// outside the table is compared as one lumped outcome.
    pub tv_content: Option<f64>,
    pub flags: Vec<String>,
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub const INSUFFICIENT_DATA: &str = "insufficient data";
pub const PRECONDITION_MISMATCH: &str = "precondition mismatch";

/// Compares sampled states, assumed to be taken after burn-in from a model
/// with compartment rates `p`, against the product-form stationary law.
pub fn compare_empirical(samples: &[CoarseState], alpha: &AlphaTable, p: &CompartmentParams) -> ComparisonReport {
    let mut stats = EmpiricalStats::default();
    for n in samples {
        stats.add(n);
    }
    compare_stats(&stats, alpha, p)
}

pub fn compare_stats(stats: &EmpiricalStats, alpha: &AlphaTable, p: &CompartmentParams) -> ComparisonReport {
    let mut flags = Vec::new();
    if p.kappa_f != 0.0 || p.kappa_c != 0.0 || p.kappa_e <= 0.0 || p.kappa_e != alpha.kappa_e {
        flags.push(PRECONDITION_MISMATCH.to_string());
    }
    let law = (p.kappa_e > 0.0).then(|| PoissonLaw { mean: p.kappa_i / p.kappa_e });
    let observed = stats.compartments_observed();
    let mut report = ComparisonReport {
        samples: stats.samples,
        compartments_observed: observed,
        m_c_mean_empirical: None,
        m_c_mean_expected: law.map(|l| l.mean),
        tv_compartment_count: None,
        content_mean_empirical: None,
        content_mean_alpha: alpha.mean(),
        tv_content: None,
        flags,
    };
    if stats.samples == 0 {
        report.flags.push(INSUFFICIENT_DATA.to_string());
        return report;
    }
    let total = stats.samples as f64;
    report.m_c_mean_empirical = Some(stats.count_hist.iter().map(|(k, c)| *k as f64 * *c as f64).sum::<f64>() / total);
    if let Some(law) = law {
        let k_max = law.quantile_upper(1e-15).max(stats.count_hist.keys().last().copied().unwrap_or(0));
        let mut tv = 0.0;
        let mut covered = 0.0;
        for k in 0..=k_max {
            let q = law.pmf(k);
            covered += q;
            let e = stats.count_hist.get(&k).copied().unwrap_or(0) as f64 / total;
            tv += (e - q).abs();
        }
        tv += (1.0 - covered).max(0.0);
        report.tv_compartment_count = Some(0.5 * tv);
    }
    if observed == 0 {
        report.flags.push(format!("{INSUFFICIENT_DATA}: no compartments observed"));
        return report;
    }
    let obs = observed as f64;
    let d = alpha.upper.len();
    let mut mean = vec![0.0; d];
    let mut outside_emp = 0.0;
    let mut tv = 0.0;
    for (x, c) in &stats.content_hist {
        let e = *c as f64 / obs;
        for (k, m) in mean.iter_mut().enumerate().take(x.dim().min(d)) {
            *m += e * f64::from(x[k]);
        }
        if alpha.get(x).is_none() {
            outside_emp += e;
        }
    }
    for (x, a) in alpha.iter() {
        let e = stats.content_hist.get(&x).copied().unwrap_or(0) as f64 / obs;
        tv += (e - a).abs();
    }
    tv += (outside_emp - alpha.tail_mass).abs();
    report.content_mean_empirical = Some(mean);
    report.tv_content = Some(0.5 * tv);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;
    use crate::stationary::{alpha, AlphaOptions};

    fn table() -> AlphaTable {
        let m = parse_model("species S; compartments I=2 E=1 F=0 C=0; mu point S=1;").unwrap();
        alpha(&m, &[3], &AlphaOptions::default()).unwrap()
    }

    #[test]
    fn zero_samples_is_flagged_not_an_error() {
        let r = compare_empirical(&[], &table(), &CompartmentParams::new(2.0, 1.0, 0.0, 0.0));
        assert_eq!(r.flags, vec![INSUFFICIENT_DATA.to_string()]);
        assert_eq!(r.tv_content, None);
        assert!(r.to_json().contains("insufficient data"));
    }

    #[test]
    fn mismatched_model_is_flagged() {
        let s = CoarseState::from_counts([(StateVec::from([1]), 2)]);
        let r = compare_empirical(&[s], &table(), &CompartmentParams::new(2.0, 1.0, 0.0, 1.0));
        assert!(r.flags.contains(&PRECONDITION_MISMATCH.to_string()));
    }

    #[test]
    fn exact_samples_give_small_distances() {
        let s1 = CoarseState::from_counts([(StateVec::from([1]), 1)]);
        let s2 = CoarseState::from_counts([(StateVec::from([1]), 2)]);
        let r = compare_empirical(&[s1, s2], &table(), &CompartmentParams::new(2.0, 1.0, 0.0, 0.0));
        assert!(r.flags.is_empty());
        assert!(r.tv_content.unwrap() < 1e-9);
        assert_eq!(r.m_c_mean_empirical, Some(1.5));
        // empirical {1: 1/2, 2: 1/2} against Poisson(2)
        let pois = |k: u64| crate::model::poisson_pmf(2.0, k);
        let want = 0.5 * ((0.5 - pois(1)).abs() + (0.5 - pois(2)).abs() + (1.0 - pois(1) - pois(2)));
        assert!((r.tv_compartment_count.unwrap() - want).abs() < 1e-12);
    }
}
