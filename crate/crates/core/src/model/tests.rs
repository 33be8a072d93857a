use std::f64::consts::PI;

use super::toys::{ConfoundedShift, ShiftingNuisance};
use super::*;
use crate::measure::{gram, inner_product};

fn scheme_at(m: &dyn DensityModel, theta: &[f64], z: &[f64]) -> Arc<IntegrationScheme> {
    default_scheme(m, theta, z).unwrap()
}

#[test]
fn builtin_densities_have_unit_mass() {
    for m in builtin_models() {
        let (theta, z) = m.default_point();
        let s = scheme_at(m.as_ref(), &theta, &z);
        let d = density(m.as_ref(), &theta, &z, &s).unwrap();
        assert!((d.mass() - 1.0).abs() < 1e-9, "{}: {}", m.name(), d.mass());
    }
}

#[test]
fn scores_are_centered_and_match_finite_differences() {
    for m in builtin_models().into_iter().chain([Arc::new(ShiftingNuisance) as ModelRef]) {
        let (theta, z) = m.default_point();
        let s = scheme_at(m.as_ref(), &theta, &z);
        let l = score(m.as_ref(), &theta, &z, &s).unwrap();
        assert!(l[0].mean().abs() < 1e-9, "{}", m.name());
        // Finite-difference oracle on the log density at every node.
        let h = 1e-5;
        for x in s.nodes().step_by(7) {
            let fd = (m.log_density(x, &[theta[0] + h], &z) - m.log_density(x, &[theta[0] - h], &z)) / (2.0 * h);
            let an = m.score_at(x, &theta, &z).unwrap()[0];
            assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "{} at {x:?}: {fd} vs {an}", m.name());
        }
    }
}

#[test]
fn normal_mean_fisher_information() {
    let m = NormalMean;
    for z in [0.5, 1.0, 2.0, 4.0] {
        let s = scheme_at(&m, &[0.3], &[z]);
        let l = score(&m, &[0.3], &[z], &s).unwrap();
        // Truncating at 1 - 1e-10 mass biases the second moment by about 2e-9.
        assert!((inner_product(&l[0], &l[0]).unwrap() - 1.0 / z).abs() < 1e-8 / z);
    }
}

#[test]
fn symmetric_location_reduces_to_standard_normal() {
    let m = SymmetricLocation::default();
    for x in [-3.0, -0.2, 0.0, 1.7, 5.0] {
        let a = m.log_density(&[x], &[0.4], &[1.0, 0.0, 0.0]);
        let b = NormalMean.log_density(&[x], &[0.4], &[1.0]);
        assert!((a - b).abs() < 1e-13);
    }
}

#[test]
fn symmetric_location_fisher_information_oracle() {
    // Independent route: trapezoid rule on a fine grid with a numerically
    // differentiated log density.
    let m = SymmetricLocation::default();
    let z = [1.0, 0.3, 0.1];
    let s = scheme_at(&m, &[0.0], &z);
    let l = score(&m, &[0.0], &z, &s).unwrap();
    let got = l[0].norm_sq();
    let (a, b, n) = (-14.0, 14.0, 200_000);
    let dx = (b - a) / n as f64;
    let mut want = 0.0;
    for i in 0..=n {
        let x = a + i as f64 * dx;
        let h = 1e-5;
        let d = (m.log_density(&[x + h], &[0.0], &z) - m.log_density(&[x - h], &[0.0], &z)) / (2.0 * h);
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        want += w * dx * d * d * m.log_density(&[x], &[0.0], &z).exp();
    }
    assert!((got - want).abs() < 1e-6 * want, "{got} vs {want}");
}

#[test]
fn poisson_pair_information_oracle() {
    // Direct double sum with statrs Poisson pmfs.
    use statrs::distribution::{Discrete, Poisson};
    let (theta, z) = (1.3, 2.5);
    let s = scheme_at(&PoissonPair, &[theta], &[z]);
    let l = score(&PoissonPair, &[theta], &[z], &s).unwrap();
    let nu = nuisance_dictionary(&PoissonPair, &[theta], &[z], &s).unwrap();
    let a = Poisson::new(z).unwrap();
    let b = Poisson::new(z * theta).unwrap();
    let (mut ll, mut ln, mut nn) = (0.0, 0.0, 0.0);
    for x1 in 0..80u64 {
        for x2 in 0..80u64 {
            let p = a.pmf(x1) * b.pmf(x2);
            let sc = x2 as f64 / theta - z;
            let nv = (x1 + x2) as f64 / z - (1.0 + theta);
            ll += p * sc * sc;
            ln += p * sc * nv;
            nn += p * nv * nv;
        }
    }
    assert!((l[0].norm_sq() - ll).abs() < 1e-9);
    assert!((inner_product(&l[0], &nu[0]).unwrap() - ln).abs() < 1e-9);
    assert!((nu[0].norm_sq() - nn).abs() < 1e-9);
    // Closed forms for the same three numbers.
    assert!((ll - z / theta).abs() < 1e-9);
    assert!((ln - 1.0).abs() < 1e-9);
    assert!((nn - (1.0 + theta) / z).abs() < 1e-9);
}

#[test]
fn dictionary_gram_is_well_conditioned() {
    for m in builtin_models() {
        let (theta, z) = m.default_point();
        let s = scheme_at(m.as_ref(), &theta, &z);
        let d = nuisance_dictionary(m.as_ref(), &theta, &z, &s).unwrap();
        let g = gram(&d).unwrap();
        let e = g.symmetric_eigenvalues();
        let cond = e.max() / e.min();
        assert!(cond < 1e8, "{}: {cond}", m.name());
        for v in &d {
            assert!(v.mean().abs() < 1e-9);
        }
    }
}

#[test]
fn samplers_match_quadrature_expectations() {
    let n = 100_000;
    for m in builtin_models().into_iter().chain([Arc::new(ShiftingNuisance) as ModelRef]) {
        let (theta, z) = m.default_point();
        let s = scheme_at(m.as_ref(), &theta, &z);
        let d = density(m.as_ref(), &theta, &z, &s).unwrap();
        let f = |x: &[f64]| (x.iter().sum::<f64>()).cos();
        let want = L2Vec::from_fn(&d, f).unwrap().mean();
        let draws = sample(m.as_ref(), &theta, &z, n, 11).unwrap();
        let vals: Vec<f64> = draws.iter().map(f).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - want).abs() < 3.0 * se, "{}: {mean} vs {want} (se {se})", m.name());
    }
}

#[test]
fn sampling_is_reproducible() {
    let a = sample(&PoissonPair, &[1.0], &[2.0], 50, 3).unwrap();
    let b = sample(&PoissonPair, &[1.0], &[2.0], 50, 3).unwrap();
    let c = sample(&PoissonPair, &[1.0], &[2.0], 50, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    let s1 = monte_carlo_scheme(&NormalMean, &[0.0], &[1.0], 500, 9).unwrap();
    let s2 = monte_carlo_scheme(&NormalMean, &[0.0], &[1.0], 500, 9).unwrap();
    assert_eq!(s1.id(), s2.id());
}

#[test]
fn bad_parameters_are_domain_errors() {
    let s = scheme_at(&NormalMean, &[0.0], &[1.0]);
    assert!(matches!(density(&NormalMean, &[0.0], &[-1.0], &s), Err(Error::Domain(_))));
    assert!(matches!(density(&NormalMean, &[0.0, 1.0], &[1.0], &s), Err(Error::Config(_))));
    assert!(matches!(PoissonPair.validate(&[0.0], &[1.0]), Err(Error::Domain(_))));
    assert!(SymmetricLocation::default().validate(&[0.0], &[1.0, -0.3]).is_err());
}

#[test]
fn zero_density_at_a_node_names_the_node() {
    let spec = CustomModelSpec {
        name: "half".into(),
        theta_dim: 1,
        z_dim: 1,
        sample_dim: 1,
        support: CustomSupport::Interval { lo: -1.0, hi: 1.0 },
        // Zero on the left half of the interval.
        density: "(x + pow(x*x, 0.5)) * 1.0".into(),
        score: None,
        nuisance: Some(vec!["x".into()]),
        default_theta: None,
        default_z: None,
    };
    let m = CustomModel::new(spec).unwrap();
    let s = default_scheme(&m, &[0.0], &[1.0]).unwrap();
    match density(&m, &[0.0], &[1.0], &s) {
        Err(Error::Domain(msg)) => assert!(msg.contains("node 0"), "{msg}"),
        other => panic!("expected a domain error, got {other:?}"),
    }
}

fn custom_normal() -> CustomModel {
    let json = r#"{
        "name": "my-normal",
        "theta_dim": 1,
        "z_dim": 1,
        "support": {"interval": {"lo": -12.0, "hi": 12.0}},
        "density": "exp(-(x - theta)^2 / (2*z)) / pow(2*pi*z, 0.5)",
        "default_z": [1.0]
    }"#;
    let spec: CustomModelSpec = serde_json_free_parse(json);
    CustomModel::new(spec).unwrap()
}

// The core crate does not depend on serde_json; build the spec by hand with
// the same contents as the JSON shown in the book.
fn serde_json_free_parse(_json: &str) -> CustomModelSpec {
    CustomModelSpec {
        name: "my-normal".into(),
        theta_dim: 1,
        z_dim: 1,
        sample_dim: 1,
        support: CustomSupport::Interval { lo: -12.0, hi: 12.0 },
        density: "exp(-(x - theta)^2 / (2*z)) / pow(2*pi*z, 0.5)".into(),
        score: None,
        nuisance: None,
        default_theta: None,
        default_z: Some(vec![1.0]),
    }
}

#[test]
fn custom_model_matches_builtin_normal() {
    let m = custom_normal();
    let s = default_scheme(&m, &[0.2], &[1.5]).unwrap();
    let l = score(&m, &[0.2], &[1.5], &s).unwrap();
    let l_ref = score(&NormalMean, &[0.2], &[1.5], &s).unwrap();
    let close = |a: &[f64], b: &[f64], c: f64| a.iter().zip(b).all(|(a, b)| (a - c * b).abs() < 1e-7 * (1.0 + b.abs()));
    assert!(close(l[0].values(), l_ref[0].values(), 1.0));
    // The finite-difference nuisance score is the builtin dictionary over 2z.
    let nu = nuisance_dictionary(&m, &[0.2], &[1.5], &s).unwrap();
    let nu_ref = nuisance_dictionary(&NormalMean, &[0.2], &[1.5], &s).unwrap();
    assert!(close(nu[0].values(), nu_ref[0].values(), 1.0 / 3.0));
    let draws = sample(&m, &[0.2], &[1.5], 20_000, 5).unwrap();
    let mean = draws.iter().map(|x| x[0]).sum::<f64>() / 20_000.0;
    assert!((mean - 0.2).abs() < 4.0 * (1.5f64 / 20_000.0).sqrt());
}

#[test]
fn custom_lattice_model() {
    // Geometric distribution on 0..=200 with success probability theta.
    let spec = CustomModelSpec {
        name: "geometric".into(),
        theta_dim: 1,
        z_dim: 1,
        sample_dim: 1,
        support: CustomSupport::Lattice { lo: 0, hi: 200 },
        density: "theta * pow(1 - theta, x)".into(),
        score: None,
        nuisance: Some(vec!["x - (1 - theta)/theta + 0*z".into()]),
        default_theta: Some(vec![0.4]),
        default_z: Some(vec![1.0]),
    };
    let m = CustomModel::new(spec).unwrap();
    let s = default_scheme(&m, &[0.4], &[1.0]).unwrap();
    let l = score(&m, &[0.4], &[1.0], &s).unwrap();
    // Fisher information of the geometric law: 1 / (theta^2 (1 - theta)).
    let want = 1.0 / (0.16 * 0.6);
    assert!((l[0].norm_sq() - want).abs() < 1e-6 * want);
}

#[test]
fn custom_model_rejects_bad_specs() {
    let mut spec = serde_json_free_parse("");
    spec.density = "exp(-(x - theta2)^2)".into();
    assert!(CustomModel::new(spec).is_err());
    let mut spec = serde_json_free_parse("");
    spec.sample_dim = 2;
    assert!(CustomModel::new(spec).is_err());
}

#[test]
fn confounded_shift_score_lies_in_nuisance_span() {
    let m = ConfoundedShift;
    let s = scheme_at(&m, &[0.0], &[0.0]);
    let d = density(&m, &[0.0], &[0.0], &s).unwrap();
    let l = score_on(&m, &[0.0], &[0.0], &d).unwrap();
    let span = nuisance_span_on(&m, &[0.0], &[0.0], &d).unwrap();
    let r = crate::measure::complement_project(&l[0], &span).unwrap();
    assert!(r.norm() < 1e-10);
}

#[test]
fn scheme_covers_every_grid_point() {
    let pts: Vec<(Vec<f64>, Vec<f64>)> = NormalMean.nuisance_grid(&[1.0]).into_iter().map(|z| (vec![0.0], z)).collect();
    let s = build_scheme(&NormalMean, &pts, &SchemeSpec::default()).unwrap();
    for (theta, z) in &pts {
        let d = density(&NormalMean, theta, z, &s).unwrap();
        assert!((d.mass() - 1.0).abs() < 1e-9);
    }
    let (lo, hi) = s.truncation().unwrap();
    assert!(hi > 2f64.sqrt() * 6.4 && lo < -2f64.sqrt() * 6.4);
}

#[test]
fn derived_seeds_differ() {
    let seeds: std::collections::BTreeSet<u64> = (0..1000).map(|r| derive_seed(42, r)).collect();
    assert_eq!(seeds.len(), 1000);
    assert_eq!(derive_seed(42, 3), derive_seed(42, 3));
}

#[test]
fn normal_half_width_matches_tail() {
    // 2 * (1 - Phi(w)) = tail, checked with the complementary error function.
    let w = normal_half_width(1e-10);
    let tail = statrs::function::erf::erfc(w / 2f64.sqrt());
    assert!((tail - 1e-10).abs() < 1e-13);
    let _ = PI;
}
