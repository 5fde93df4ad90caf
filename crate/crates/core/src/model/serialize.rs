use std::fmt::Write;

use super::{InflowDistribution, RnicModel};

/// Canonical DSL text for a model. `parse_model` on the output yields an
/// equal model; floats are printed in shortest round-trip form.
pub fn serialize_model(model: &RnicModel) -> String {
    let chem = &model.chemistry;
    let names = chem.species.names();
    let mut out = String::new();
    writeln!(out, "species {};", names.join(" ")).unwrap();
    for r in &chem.reactions {
        writeln!(out, "rxn {} @ {};", chem.format_reaction(r), r.rate_constant).unwrap();
    }
    let p = &model.compartments;
    writeln!(out, "compartments I={} E={} F={} C={};", p.kappa_i, p.kappa_e, p.kappa_f, p.kappa_c).unwrap();
    match &model.mu {
        None => {}
        Some(InflowDistribution::PointMass(x)) => {
            out.push_str("mu point");
            for (name, &c) in names.iter().zip(x.counts()) {
                if c > 0 {
                    write!(out, " {name}={c}").unwrap();
                }
            }
            out.push_str(";\n");
        }
        Some(InflowDistribution::Categorical(items)) => {
            let body: Vec<String> = items.iter().map(|(x, p)| format!("{x}:{p}")).collect();
            writeln!(out, "mu cat {{{}}};", body.join(", ")).unwrap();
        }
        Some(InflowDistribution::ProductPoisson(means)) => {
            let body: Vec<String> = means.iter().map(|m| m.to_string()).collect();
            writeln!(out, "mu poisson {};", body.join(" ")).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::parse_model;
    use super::*;

    fn round_trip(text: &str) {
        let m = parse_model(text).unwrap();
        let s = serialize_model(&m);
        assert_eq!(parse_model(&s).unwrap(), m, "{s}");
    }

    #[test]
    fn point_mass_model() {
        round_trip("species A B; rxn A+B -> 0 @ 10; rxn 0 -> B @ 2; rxn A + 2B -> A @ 0.3; compartments I=1 E=0 F=0 C=2; mu point A=3 B=4;");
    }

    #[test]
    fn poisson_model_text() {
        let m = parse_model("species S; rxn 0 -> S @ 2; rxn S -> 0 @ 1; compartments I=2 E=1 F=0 C=0; mu poisson 3;").unwrap();
        let s = serialize_model(&m);
        assert!(s.contains("mu poisson 3;"), "{s}");
        assert_eq!(parse_model(&s).unwrap(), m);
    }

    #[test]
    fn empty_reaction_model() {
        round_trip("species S; compartments I=0 E=0 F=0 C=0;");
        round_trip("species X Y; compartments I=1 E=1 F=0 C=0; mu cat {(1,0):0.25, (0,0):0.75};");
    }
}
