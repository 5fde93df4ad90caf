use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::Serialize;

use crate::coarse::{apply_transition, CoarseModel, CoarseState, TransitionKind};
use crate::model::{CompartmentParams, ModelError, RnicModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CompartmentVerdict {
    AllAbsorbing,
    ZeroAbsorbingOthersTransient,
    PositiveRecurrent,
    NullRecurrent,
    Transient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IrreducibleSet {
    /// `{0, 1, 2, ...}`
    NonNegative,
    /// `{1, 2, ...}`; the state 0 is transient.
    Positive,
    NotApplicable,
}

impl fmt::Display for IrreducibleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IrreducibleSet::NonNegative => "{0,1,2,...}",
            IrreducibleSet::Positive => "{1,2,...}",
            IrreducibleSet::NotApplicable => "n/a",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CompartmentClass {
    pub verdict: CompartmentVerdict,
    pub irreducible_set: IrreducibleSet,
}

/// Recurrence class of the compartment count chain `0 <-> C <-> 2C`.
pub fn classify_compartments(p: &CompartmentParams) -> CompartmentClass {
    if p.kappa_i == 0.0 {
        let verdict =
            if p.all_zero() { CompartmentVerdict::AllAbsorbing } else { CompartmentVerdict::ZeroAbsorbingOthersTransient };
        return CompartmentClass { verdict, irreducible_set: IrreducibleSet::NotApplicable };
    }
    let irreducible_set = if p.kappa_e > 0.0 { IrreducibleSet::NonNegative } else { IrreducibleSet::Positive };
    let verdict = if p.kappa_c > 0.0 || p.kappa_f < p.kappa_e {
        CompartmentVerdict::PositiveRecurrent
    } else if p.kappa_f > p.kappa_e {
        CompartmentVerdict::Transient
    } else if p.kappa_i <= p.kappa_e {
        CompartmentVerdict::NullRecurrent
    } else {
        CompartmentVerdict::Transient
    };
    CompartmentClass { verdict, irreducible_set }
}

/// Outcome of the bounded search from the empty state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Reachability {
    /// Transitions leading from the empty state to the target.
    Reachable(Vec<TransitionKind>),
    /// Not found; this is a statement about the explored ball only.
    NotReachableWithinDepth { depth: usize, states_visited: usize, budget_exhausted: bool },
}

/// Largest number of states the search keeps.
pub const REACH_STATE_BUDGET: usize = 2_000_000;

/// Breadth-first search over positive-rate coarse transitions starting at the
/// empty state, up to `depth_limit` transitions.
pub fn reachable_from_empty(n: &CoarseState, model: &RnicModel, depth_limit: usize) -> Result<Reachability, ModelError> {
    reachable_with_budget(n, model, depth_limit, REACH_STATE_BUDGET)
}

pub fn reachable_with_budget(
    target: &CoarseState,
    model: &RnicModel,
    depth_limit: usize,
    budget: usize,
) -> Result<Reachability, ModelError> {
    let cm = CoarseModel::new(model)?;
    let start = CoarseState::empty();
    if *target == start {
        return Ok(Reachability::Reachable(Vec::new()));
    }
    // state -> (parent, transition into it)
    let mut parent: HashMap<CoarseState, Option<(CoarseState, TransitionKind)>> = HashMap::new();
    parent.insert(start.clone(), None);
    let mut frontier = VecDeque::from([(start, 0usize)]);
    let mut exhausted = false;
    while let Some((s, depth)) = frontier.pop_front() {
        if depth == depth_limit {
            continue;
        }
        for t in cm.transitions(&s) {
            let next = apply_transition(&s, &t).expect("enumerated transition applies");
            if parent.contains_key(&next) {
                continue;
            }
            if next == *target {
                let mut path = vec![t.kind];
                let mut cur = s.clone();
                while let Some(Some((p, k))) = parent.get(&cur) {
                    path.push(k.clone());
                    cur = p.clone();
                }
                path.reverse();
                return Ok(Reachability::Reachable(path));
            }
            if parent.len() >= budget {
                exhausted = true;
                continue;
            }
            parent.insert(next.clone(), Some((s.clone(), t.kind)));
            frontier.push_back((next, depth + 1));
        }
    }
    Ok(Reachability::NotReachableWithinDepth { depth: depth_limit, states_visited: parent.len(), budget_exhausted: exhausted })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FullVerdict {
    PositiveRecurrent,
    NullRecurrent,
    Transient,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FullClassification {
    pub verdict: FullVerdict,
    pub compartments: CompartmentClass,
    pub reachability: Option<Reachability>,
    pub note: String,
}

/// Recurrence class of the coarse state `n` of the full model, or `Unknown`
/// when it cannot be settled from the compartment class and a bounded
/// reachability search. The reasoning assumes a non-explosive model.
pub fn classify_full(model: &RnicModel, n: &CoarseState, depth_limit: usize) -> Result<FullClassification, ModelError> {
    let p = &model.compartments;
    let compartments = classify_compartments(p);
    let done = |verdict, reachability, note: &str| {
        Ok(FullClassification { verdict, compartments, reachability, note: note.to_string() })
    };
    if compartments.verdict == CompartmentVerdict::Transient {
        return done(
            FullVerdict::Transient,
            None,
            "compartment count chain is transient, so every state of the full model is transient",
        );
    }
    if p.kappa_e == 0.0 {
        return done(
            FullVerdict::Unknown,
            None,
            "kappa_E = 0: the compartment class does not decide the full model; use the drift checker",
        );
    }
    if p.kappa_i == 0.0 {
        return if n.is_empty() {
            done(FullVerdict::PositiveRecurrent, None, "kappa_I = 0: the empty state is absorbing")
        } else {
            done(FullVerdict::Transient, None, "kappa_I = 0: every nonempty state is transient")
        };
    }
    let reach = reachable_from_empty(n, model, depth_limit)?;
    match (&reach, compartments.verdict) {
        (Reachability::Reachable(_), CompartmentVerdict::PositiveRecurrent) => done(
            FullVerdict::PositiveRecurrent,
            Some(reach),
            "reachable from the empty state and the compartment chain is positive recurrent",
        ),
        (Reachability::Reachable(_), CompartmentVerdict::NullRecurrent) => done(
            FullVerdict::NullRecurrent,
            Some(reach),
            "reachable from the empty state and the compartment chain is null recurrent",
        ),
        (Reachability::Reachable(_), _) => unreachable!("kappa_I, kappa_E > 0 leaves only recurrent or transient classes"),
        (Reachability::NotReachableWithinDepth { .. }, _) => done(
            FullVerdict::Unknown,
            Some(reach),
            "not reached from the empty state within the search depth; a deeper search may still find it",
        ),
    }
}
