use rnic_core::crn::{solve_cme, ClosedFormFamily, CmeOptions};
use rnic_core::model::{parse_model, InflowDistribution};
use rnic_core::StateVec;

fn sup_error(text: &str, upper: u32) -> f64 {
    let m = parse_model(text).unwrap();
    let fam = ClosedFormFamily::detect(&m).unwrap();
    let grid: Vec<f64> = (0..=50).map(|k| k as f64 * 0.1).collect();
    let out = solve_cme(&m.chemistry, m.mu.as_ref().unwrap(), &grid, &[upper], CmeOptions::default()).unwrap();
    let mut worst: f64 = 0.0;
    for d in &out {
        assert!((d.mass() + d.leaked_mass - 1.0).abs() < 1e-9);
        for x in 0..=upper {
            worst = worst.max((d.prob(&StateVec::from([x])) - fam.pmf(x, d.time)).abs());
        }
    }
    worst
}

#[test]
fn birth_death_from_poisson() {
    let e = sup_error("species S; rxn 0 -> S @ 2; rxn S -> 0 @ 1; compartments I=2 E=1 F=0 C=0; mu poisson 3;", 30);
    assert!(e < 1e-6, "{e}");
}

#[test]
fn birth_death_far_from_equilibrium() {
    let e = sup_error("species S; rxn 0 -> S @ 10; rxn S -> 0 @ 0.5; compartments I=1 E=1 F=0 C=0; mu poisson 0.5;", 60);
    assert!(e < 1e-6, "{e}");
}

#[test]
fn pure_birth_from_uniform() {
    let e = sup_error("species S; rxn 0 -> S @ 1; compartments I=1 E=1 F=0 C=0; mu cat {(0):0.25, (1):0.5, (2):0.25};", 40);
    assert!(e < 1e-6, "{e}");
}

#[test]
fn two_species_mass_is_conserved() {
    let m = parse_model("species A B; rxn A -> B @ 1; rxn B -> A @ 2; rxn 0 -> A @ 0.5; rxn A + B -> 0 @ 0.3; compartments I=1 E=1 F=0 C=0; mu point A=2 B=1;").unwrap();
    let grid = [0.0, 0.5, 1.0, 2.0, 5.0];
    let mu = m.mu.clone().unwrap();
    let out = solve_cme(&m.chemistry, &mu, &grid, &[25, 25], CmeOptions::default()).unwrap();
    for d in &out {
        assert!((d.mass() + d.leaked_mass - 1.0).abs() < 1e-9);
        assert!(d.probs.iter().all(|&p| p >= 0.0));
    }
    assert!(matches!(mu, InflowDistribution::PointMass(_)));
}
