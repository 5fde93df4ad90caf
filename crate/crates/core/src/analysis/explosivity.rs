use std::fmt;

use serde::Serialize;

use crate::model::RnicModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExplosivityVerdict {
    NonExplosive,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplosivityReport {
    pub verdict: ExplosivityVerdict,
    /// Count-increasing reactions of order two or more, formatted.
    pub superlinear: Vec<String>,
    pub lines: Vec<String>,
}

impl fmt::Display for ExplosivityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(f, "{l}")?;
        }
        write!(f, "verdict: {:?}", self.verdict)
    }
}

/// Syntactic sufficient conditions for non-explosivity.
///
/// The compartment count chain has at most linear jump rates and never
/// explodes, so the full model explodes exactly when its chemistry does. If
/// every reaction that increases the molecule count has order at most one,
/// the total count grows at most linearly and is dominated by a
/// non-explosive branching process. Anything else is left undecided.
pub fn explosivity_report(model: &RnicModel) -> ExplosivityReport {
    let chem = &model.chemistry;
    let mut lines = vec![
        "compartment chain: never explosive (jump rates at most linear in the compartment count)".to_string(),
        "full model: explosive if and only if the chemistry is".to_string(),
    ];
    let superlinear: Vec<String> = chem
        .reactions
        .iter()
        .filter(|r| r.rate_constant > 0.0 && r.product.total() > r.reactant.total() && r.order() >= 2)
        .map(|r| chem.format_reaction(r))
        .collect();
    let verdict = if chem.reactions.is_empty() {
        lines.push("chemistry: no reactions".into());
        ExplosivityVerdict::NonExplosive
    } else if superlinear.is_empty() {
        let growing = chem.reactions.iter().any(|r| r.rate_constant > 0.0 && r.product.total() > r.reactant.total());
        lines.push(if growing {
            "chemistry: every count-increasing reaction has order <= 1, so total propensity of growth is at most linear in the total count".into()
        } else {
            "chemistry: no reaction increases the total molecule count".into()
        });
        ExplosivityVerdict::NonExplosive
    } else {
        lines.push(format!(
            "chemistry: count-increasing reactions of order >= 2 ({}); no syntactic certificate applies",
            superlinear.join(", ")
        ));
        ExplosivityVerdict::Undecided
    };
    ExplosivityReport { verdict, superlinear, lines }
}
