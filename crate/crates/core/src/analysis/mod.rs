//! Recurrence and transience of the full model: the compartment count chain,
//! reachability from the empty state, Lyapunov drift checks and a syntactic
//! explosivity report.

pub mod classify;
pub mod drift;
pub mod explosivity;
pub mod lyapunov;

pub use classify::{
    classify_compartments, classify_full, reachable_from_empty, reachable_with_budget, CompartmentClass, CompartmentVerdict,
    FullClassification, FullVerdict, IrreducibleSet, Reachability,
};
pub use drift::{drift_check, drift_check_plain, DriftEntry, DriftMode, DriftReport, DriftVerdict};
pub use explosivity::{explosivity_report, ExplosivityReport, ExplosivityVerdict};
pub use lyapunov::{builtin_lyapunov, parse_lyapunov, resolve_lyapunov, Lyapunov, LyapunovError, BUILTIN_NAMES};
