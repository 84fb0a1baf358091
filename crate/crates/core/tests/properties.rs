use proptest::prelude::*;
use thermovisco::diagnostics::{energy_budget, energy_identity, temperature_report};
use thermovisco::evolution::integrate;
use thermovisco::scenario::Scenario;
use thermovisco::study::{self, CheckSet, RunPoint};

fn scenario(p: f64, amp: f64, force: f64, heat: f64) -> Scenario {
    format!(
        "name = \"prop\"\n[mesh]\nlx = 1.0\nly = 1.0\nnx = 5\nny = 5\n[orlicz]\nexponent = {p}\n\
         [loads]\nf = [\"{force}*y\", \"0\"]\ng = [\"0\", \"0\"]\ng_theta = \"{heat}*nx\"\n\
         [initial]\ntheta0 = \"1 + x\"\neps_p0 = [\"{amp}*cos(pi*x)\", \"-{amp}*cos(pi*x)\", \"0\", \"{amp}*y\"]\n\
         [discretization]\nk = 4\nl = 4\ndt = 0.02\nt_final = 0.3\n[study]\nsamples = 200\n"
    )
    .parse()
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn energy_checks_hold_for_random_data(
        p in prop::sample::select(vec![1.5, 2.0, 3.0]),
        amp in 0.0..1.0f64,
        force in -0.5..0.5f64,
        heat in -0.3..0.3f64,
    ) {
        let s = scenario(p, amp, force, heat);
        let out = study::run_point(&s, RunPoint::of(&s), CheckSet::Energy).unwrap();
        for c in &out.report.checks {
            prop_assert!(c.pass, "{} failed: {:?}", c.name, c.values);
        }
        let e = out.report.energy.unwrap();
        prop_assert!(e.margins.iter().all(|m| *m >= 0.0));
        prop_assert!(out.report.temperature.max_equilibrium_ratio <= 1e-10);
    }

    #[test]
    fn reports_are_pure_functions_of_the_trajectory(amp in 0.0..1.0f64) {
        let s = scenario(2.0, amp, 0.1, 0.1);
        let prep = study::prepare(&s, RunPoint::of(&s)).unwrap();
        let traj = integrate(&prep.system, prep.initial.clone(), &prep.times, 1);
        let a = energy_budget(&traj, &prep.system, 1.0, prep.initial_d_norm_sq).unwrap();
        let b = energy_budget(&traj, &prep.system, 1.0, prep.initial_d_norm_sq).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        prop_assert_eq!(energy_identity(&traj).global_residual.to_bits(), energy_identity(&traj).global_residual.to_bits());
        prop_assert_eq!(
            serde_json::to_string(&temperature_report(&traj)).unwrap(),
            serde_json::to_string(&temperature_report(&traj)).unwrap()
        );
    }
}

#[test]
fn budget_constant_does_not_depend_on_the_basis() {
    let s = scenario(3.0, 0.7, 0.2, 0.1);
    let constants: Vec<f64> = [(2, 2), (4, 4), (8, 8)]
        .iter()
        .map(|(k, l)| {
            let out = study::run_point(&s, RunPoint { k: *k, l: *l, ..RunPoint::of(&s) }, CheckSet::Energy).unwrap();
            out.report.energy.unwrap().budget_constant
        })
        .collect();
    assert!(constants.iter().all(|c| (c - constants[0]).abs() <= 1e-12 * constants[0]), "{constants:?}");
}

#[test]
fn fast_initial_layer_keeps_the_energy_identity() {
    // p = 1.5 under a small load relaxes on a time scale near 0.03, well
    // below dt; the integrator has to refine inside the layer.
    let s = scenario(1.5, 0.0, -0.11405775534152782, 0.0);
    let out = study::run_point(&s, RunPoint::of(&s), CheckSet::Energy).unwrap();
    for c in &out.report.checks {
        assert!(c.pass, "{} failed: {:?}", c.name, c.values);
    }
    assert!(out.trajectory.diagnostics.iter().any(|d| d.substeps > 1));
}
