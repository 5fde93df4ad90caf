//! Fixture models shared by the benchmarks.

use rnic_core::model::{parse_model, RnicModel};

/// Birth-death chemistry in compartments that enter with Poisson content and
/// leave at unit rate.
pub const BIRTH_DEATH: &str = "species S; rxn 0 -> S @ 2; rxn S -> 0 @ 1; compartments I=2 E=1 F=0 C=0; mu poisson 3;";

/// Two species with bimolecular reactions and all four compartment events.
pub const MIXED: &str = "species A B; rxn A + B -> 0 @ 10; rxn 0 -> B @ 2; rxn B -> 0 @ 1; rxn 2B -> 0 @ 5; \
                         rxn A + 2B -> A @ 3; compartments I=1 E=0.5 F=0.5 C=0.2; mu point A=3 B=4;";

/// Coagulating compartments whose chemistry drives B to zero.
pub const COAGULATING: &str = "species A B; rxn A + B -> 0 @ 10; rxn 0 -> B @ 2; rxn 2B -> 0 @ 10; rxn 0 -> A @ 1; \
                               compartments I=1 E=0 F=0 C=2; mu point A=3;";

/// Pure birth with uniform inflow, solved through the master equation.
pub const UNIFORM_BIRTH: &str = "species S; rxn 0 -> S @ 1; compartments I=1 E=1 F=0 C=0; \
                                 mu cat {(0):0.3333333333333333, (1):0.3333333333333334, (2):0.3333333333333333};";

pub fn model(text: &str) -> RnicModel {
    parse_model(text).expect("fixture parses")
}
