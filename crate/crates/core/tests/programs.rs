mod common;

use std::f64::consts::PI;

use scendo::benchmark::{circle_problem, generate_dataset, GaussianMixture};
use scendo::programs::{extract_outliers, solve, Formulation, FormulationTag, SolveOptions};
use scendo::scenario_theory::{program_solver, support_scenarios};
use scendo::types::{AlphaConfig, Matrix, ScenarioData};

fn nominal_data(n_a: usize, seed: u64) -> ScenarioData {
    let mut data = generate_dataset(n_a, 1, seed, &GaussianMixture::default()).unwrap();
    data.epistemic = Matrix::from_rows(&[vec![0.0; 3]]).unwrap();
    data
}

fn points(data: &ScenarioData) -> Vec<[f64; 2]> {
    data.aleatory.iter_rows().map(|a| [a[0], a[1]]).collect()
}

/// With only the nominal epistemic point the program is the classical
/// smallest enclosing circle.
#[test]
fn nominal_set_reduces_to_smallest_enclosing_circle() {
    let spec = circle_problem();
    for seed in [10, 11, 12] {
        let data = nominal_data(25, seed);
        let r = solve(
            &Formulation::new(FormulationTag::RiskAverseLocal, None).unwrap(),
            &spec,
            &data,
            &AlphaConfig::zeros(1),
            &SolveOptions::default(),
        )
        .unwrap();
        let (cx, cy, radius) = common::min_enclosing_circle(&points(&data));
        let oracle = PI * radius * radius;
        assert!((r.objective - oracle).abs() <= 1e-3 * oracle, "seed {seed}: {} vs {oracle}", r.objective);
        let c = &r.theta_star;
        assert!((c[0] - cx).abs() < 1e-2 && (c[1] - cy).abs() < 1e-2, "seed {seed}: {c:?} vs ({cx}, {cy})");
    }
}

/// Support scenarios of the nominal program are the points on the circle.
#[test]
fn support_scenarios_are_the_boundary_points() {
    let spec = circle_problem();
    let data = nominal_data(15, 4);
    let formulation = Formulation::new(FormulationTag::RiskAverseLocal, None).unwrap();
    let cfg = AlphaConfig::zeros(1);
    let opts = SolveOptions::default();
    let solver = program_solver(&formulation, &spec, &cfg, &opts, None, data.n_a());
    let support = support_scenarios(&solver, &data).unwrap();
    assert_eq!(support, common::boundary_points(&points(&data)));
}

/// The outliers a result reports agree with those recomputed from its design,
/// and no scenario drops more epistemic points than its fraction allows.
#[test]
fn reported_outliers_match_recomputed_ones() {
    let spec = circle_problem();
    let data = generate_dataset(30, 20, 5, &GaussianMixture::default()).unwrap();
    let cfg = AlphaConfig::uniform(1, 2.0 / 29.0, 0.1);
    for tag in [FormulationTag::RiskAverseLocal, FormulationTag::RiskAgnosticLocal] {
        let r = solve(&Formulation::new(tag, None).unwrap(), &spec, &data, &cfg, &SolveOptions::default()).unwrap();
        let again = extract_outliers(&spec, &data, &cfg, &r.theta_star).unwrap();
        assert_eq!(again.aleatory, r.aleatory_outliers, "{tag}");
        assert!(r.epistemic_outliers.iter().all(|o| o.len() <= 2), "{tag}");
    }
}

#[test]
fn relaxing_the_fractions_never_grows_the_circle() {
    let spec = circle_problem();
    let data = generate_dataset(30, 20, 6, &GaussianMixture::default()).unwrap();
    let formulation = Formulation::new(FormulationTag::RiskAgnosticLocal, None).unwrap();
    let js: Vec<f64> = [0.0, 1.0 / 29.0, 3.0 / 29.0]
        .iter()
        .map(|a| {
            solve(&formulation, &spec, &data, &AlphaConfig::uniform(1, *a, 0.05), &SolveOptions::default())
                .unwrap()
                .objective
        })
        .collect();
    assert!(js.windows(2).all(|w| w[1] <= w[0] + 1e-3), "{js:?}");
}
