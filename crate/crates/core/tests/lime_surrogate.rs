mod common;

use common::*;
use traffic_xai::dataset::{FeatureStats, FeatureVector};
use traffic_xai::lime::{explain_lime, sample_design, solve_weighted_ridge, standardize, LimeConfig};

fn stats() -> [FeatureStats; 3] {
    [
        FeatureStats { mean: 43200.0, std: 24000.0, min: 0.0, max: 86100.0 },
        FeatureStats { mean: 0.12, std: 0.08, min: 0.0, max: 0.9 },
        FeatureStats { mean: 80.0, std: 20.0, min: 5.0, max: 130.0 },
    ]
}

fn probe() -> FeatureVector {
    FeatureVector::new(30000.0, 0.2, 65.0)
}

#[test]
fn solver_matches_gaussian_elimination() {
    let t = trained(500, 20, 5);
    let cfg = LimeConfig::default();
    for lambda in [0.0, 0.01, 1.0, 50.0] {
        let design = sample_design(&t.forest, &probe(), &t.forest.training_stats, &cfg).unwrap();
        let rows = design.design_rows();
        let got = solve_weighted_ridge(&rows, &design.targets, &design.weights, lambda).unwrap();
        let want = gaussian_ridge(&rows, &design.targets, &design.weights, lambda);
        for (g, w) in got.iter().zip(&want) {
            let scale = w.abs().max(1.0);
            assert!((g - w).abs() <= 1e-8 * scale, "λ={lambda}: {g} vs {w}");
        }
    }
}

#[test]
fn recovers_linear_speed_coefficient() {
    let s = stats();
    let p = move |x: &FeatureVector| 3.0 * standardize(x, &s)[2];
    let cfg = LimeConfig { ridge_lambda: 0.01, ..LimeConfig::default() };
    let e = explain_lime(&p, &probe(), &s, &cfg).unwrap();
    assert!((e.coefficients[2] - 3.0).abs() <= 0.05 * 3.0, "{:?}", e.coefficients);
    assert!(e.coefficients[0].abs() <= 0.05 && e.coefficients[1].abs() <= 0.05);
    assert!(e.fidelity_r2 >= 1.0 - 1e-6, "r2 {}", e.fidelity_r2);

    let design = sample_design(&p, &probe(), &s, &cfg).unwrap();
    let want = gaussian_ridge(&design.design_rows(), &design.targets, &design.weights, 0.01);
    assert!((e.intercept - want[0]).abs() <= 1e-8);
    for j in 0..3 {
        assert!((e.coefficients[j] - want[j + 1]).abs() <= 1e-8);
    }
}

#[test]
fn any_linear_predictor_fits_exactly() {
    let s = stats();
    let cfg = LimeConfig { ridge_lambda: 0.01, ..LimeConfig::default() };
    for (a, b, c, d) in [(1.0, -2.0, 0.5, 10.0), (-4.0, 0.0, 7.0, -3.0), (0.2, 9.0, -1.0, 1000.0)] {
        let p = move |x: &FeatureVector| {
            let z = standardize(x, &s);
            a * z[0] + b * z[1] + c * z[2] + d
        };
        let e = explain_lime(&p, &probe(), &s, &cfg).unwrap();
        assert!(e.fidelity_r2 >= 1.0 - 1e-6, "r2 {}", e.fidelity_r2);
    }
}

#[test]
fn default_lambda_keeps_attribution_signs() {
    let s = stats();
    let p = move |x: &FeatureVector| {
        let z = standardize(x, &s);
        200.0 * z[1] - 80.0 * z[2]
    };
    let e = explain_lime(&p, &probe(), &s, &LimeConfig::default()).unwrap();
    let z = standardize(&probe(), &s);
    assert_eq!(e.attributions[1].signum(), z[1].signum());
    assert_eq!(e.attributions[2].signum(), (-z[2]).signum());
    for j in 0..3 {
        assert_eq!(e.attributions[j], e.coefficients[j] * z[j]);
    }
}
