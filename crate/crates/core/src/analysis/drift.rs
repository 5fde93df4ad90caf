use std::fmt;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::coarse::{apply_transition, CoarseModel, CoarseState};
use crate::model::{ModelError, RnicModel};

/// Which drift inequality to check. The thresholds are fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DriftMode {
    /// `LV(n) <= -1`, the positive recurrence criterion for a norm-like `V`.
    RecurrenceLe,
    /// `LV(n) >= 0`, the transience criterion for a bounded `V`.
    TransienceGe,
}

impl DriftMode {
    pub fn threshold(self) -> f64 {
        match self {
            DriftMode::RecurrenceLe => -1.0,
            DriftMode::TransienceGe => 0.0,
        }
    }

    /// Whether `value` meets the threshold. `scale` is the sum of the
    /// absolute terms making up `value`; a relative slack of
    /// [`DRIFT_REL_TOL`] of it absorbs rounding when the exact drift sits on
    /// the threshold.
    pub fn satisfied(self, value: f64, scale: f64) -> bool {
        let slack = DRIFT_REL_TOL * scale;
        match self {
            DriftMode::RecurrenceLe => value <= -1.0 + slack,
            DriftMode::TransienceGe => value >= -slack,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DriftVerdict {
    HypothesisHolds,
    HypothesisFailsAtListedStates,
    Inconclusive(String),
}

impl fmt::Display for DriftVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriftVerdict::HypothesisHolds => f.write_str("HypothesisHolds"),
            DriftVerdict::HypothesisFailsAtListedStates => f.write_str("HypothesisFailsAtListedStates"),
            DriftVerdict::Inconclusive(why) => write!(f, "Inconclusive({why})"),
        }
    }
}

impl Serialize for DriftVerdict {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftEntry {
    pub state: CoarseState,
    pub value: f64,
}

/// Result of a drift check over a finite region. `exceptional_set` holds
/// every checked state where the inequality fails; `violations` is the part
/// of it not covered by the caller's declared exceptional set. The verdict
/// speaks about the checked region only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub mode: DriftMode,
    pub checked: usize,
    pub violations: Vec<DriftEntry>,
    pub exceptional_set: Vec<CoarseState>,
    pub verdict: DriftVerdict,
}

impl DriftReport {
    pub fn empty(mode: DriftMode) -> Self {
        let mut r = DriftReport {
            mode,
            checked: 0,
            violations: Vec::new(),
            exceptional_set: Vec::new(),
            verdict: DriftVerdict::HypothesisHolds,
        };
        r.refresh_verdict();
        r
    }

    /// Concatenates two reports over disjoint regions (in order).
    pub fn merge(mut self, mut other: DriftReport) -> DriftReport {
        assert_eq!(self.mode, other.mode, "merging reports of different modes");
        self.checked += other.checked;
        self.violations.append(&mut other.violations);
        self.exceptional_set.append(&mut other.exceptional_set);
        self.refresh_verdict();
        self
    }

    fn refresh_verdict(&mut self) {
        self.verdict = if !self.violations.is_empty() {
            DriftVerdict::HypothesisFailsAtListedStates
        } else if self.checked == 0 {
            DriftVerdict::Inconclusive("empty region".into())
        } else {
            DriftVerdict::HypothesisHolds
        };
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

const CHUNK: usize = 256;

pub const DRIFT_REL_TOL: f64 = 1e-12;

/// `LV(n)` together with the sum of absolute values of its terms.
pub fn drift_value(cm: &CoarseModel, v: impl Fn(&CoarseState) -> f64, n: &CoarseState) -> (f64, f64) {
    let vn = v(n);
    let mut value = 0.0;
    let mut scale = 0.0;
    for t in cm.transitions(n) {
        let term = t.rate * (v(&apply_transition(n, &t).expect("enumerated transition applies")) - vn);
        value += term;
        scale += term.abs();
    }
    (value, scale)
}

/// Evaluates `LV` at every state of `region` and compares it with the mode's
/// threshold. States for which `exceptional` returns true may fail the
/// inequality without counting as violations.
pub fn drift_check<V, E>(
    model: &RnicModel,
    v: V,
    region: &[CoarseState],
    mode: DriftMode,
    exceptional: Option<E>,
) -> Result<DriftReport, ModelError>
where
    V: Fn(&CoarseState) -> f64 + Sync,
    E: Fn(&CoarseState) -> bool + Sync,
{
    let cm = CoarseModel::new(model)?;
    let report = region
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut r = DriftReport::empty(mode);
            r.checked = chunk.len();
            for n in chunk {
                let (value, scale) = drift_value(&cm, &v, n);
                if !mode.satisfied(value, scale) {
                    r.exceptional_set.push(n.clone());
                    if !exceptional.as_ref().is_some_and(|e| e(n)) {
                        r.violations.push(DriftEntry { state: n.clone(), value });
                    }
                }
            }
            r.refresh_verdict();
            r
        })
        .reduce(|| DriftReport::empty(mode), DriftReport::merge);
    Ok(report)
}

/// [`drift_check`] without a declared exceptional set.
pub fn drift_check_plain<V>(model: &RnicModel, v: V, region: &[CoarseState], mode: DriftMode) -> Result<DriftReport, ModelError>
where
    V: Fn(&CoarseState) -> f64 + Sync,
{
    drift_check(model, v, region, mode, None::<fn(&CoarseState) -> bool>)
}
