use scendo::benchmark::{circle_problem, generate_with_testing, GaussianMixture};
use scendo::programs::{solve_risk_averse_local, SolveOptions};
use scendo::seqdesign::{run_sd, SdConfig, SpecMetric};
use scendo::types::AlphaConfig;

/// A short run that cannot meet a strict specification: the trace records
/// every iteration, training grows after each violation, and the design is
/// never certified by the risk bound.
#[test]
fn unmet_specification_grows_the_training_set() {
    let spec = circle_problem();
    let data = generate_with_testing(30, 20, 2000, 30, 1, &GaussianMixture::default()).unwrap();
    let base = solve_risk_averse_local(&spec, &data, &AlphaConfig::zeros(1), &SolveOptions::default()).unwrap();
    let (a, e) = data.testing().unwrap();
    let mut cfg = SdConfig::new(1, SpecMetric::RangeA, 1e-9);
    cfg.max_iter = 3;
    cfg.n_a_initial = 30;
    cfg.n_e = 20;
    let out = run_sd(&spec, a, e, &base.theta_star, &cfg).unwrap();
    assert!(!out.converged && !out.bound_valid);
    assert!(out.trace.failure.is_none());
    let records = &out.trace.records;
    assert_eq!(records.len(), 3);
    assert_eq!(records[0].theta, base.theta_star);
    for w in records.windows(2) {
        if !w[0].violated.is_empty() {
            assert_eq!(w[1].n_a, ((w[0].n_a as f64) * 1.3).ceil().min(100.0) as usize);
        }
    }
    assert!(out.training_aleatory.len() <= 100);
    assert_eq!(out.training_epistemic.len(), 20);
}
