use std::sync::Arc;

use super::*;
use crate::model::toys::ShiftingNuisance;
use crate::model::{builtin_models, default_scheme, NormalMean, PoissonPair, SymmetricLocation};

fn grid_scheme(m: &dyn DensityModel, theta: &[f64], grid: &[Vec<f64>]) -> Arc<IntegrationScheme> {
    scheme_for_grid(m, theta, grid, &SchemeSpec::default()).unwrap()
}

#[test]
fn normal_mean_efficient_information_is_inverse_variance() {
    for z in [0.5, 1.0, 2.0, 4.0] {
        let s = default_scheme(&NormalMean, &[0.3], &[z]).unwrap();
        let e = efficient_score(&NormalMean, &[0.3], &[z], &s).unwrap();
        assert!((e.j_e[(0, 0)] - 1.0 / z).abs() < 1e-6, "z={z}: {}", e.j_e[(0, 0)]);
        assert!(!e.singular);
    }
}

#[test]
fn poisson_pair_efficient_information() {
    // Schur complement of the Fisher information [[z/θ, 1], [1, (1+θ)/z]].
    for (theta, z) in [(1.0, 2.0), (0.5, 3.0), (2.0, 1.0)] {
        let s = default_scheme(&PoissonPair, &[theta], &[z]).unwrap();
        let e = efficient_score(&PoissonPair, &[theta], &[z], &s).unwrap();
        let want = z / theta - z / (1.0 + theta);
        assert!((e.j_e[(0, 0)] - want).abs() < 1e-8, "{} vs {want}", e.j_e[(0, 0)]);
    }
}

#[test]
fn efficient_score_is_orthogonal_to_nuisance() {
    for m in builtin_models().into_iter().chain([Arc::new(ShiftingNuisance) as crate::model::ModelRef]) {
        let (theta, z) = m.default_point();
        let s = default_scheme(m.as_ref(), &theta, &z).unwrap();
        let e = efficient_score(m.as_ref(), &theta, &z, &s).unwrap();
        for nu in e.nuisance_span.basis() {
            for l in &e.l_e {
                assert!(inner_product(l, nu).unwrap().abs() < 1e-8, "{}", m.name());
            }
        }
    }
}

#[test]
fn confounded_score_is_flagged_singular() {
    let m = crate::model::toys::ConfoundedShift;
    let s = default_scheme(&m, &[0.0], &[0.0]).unwrap();
    let e = efficient_score(&m, &[0.0], &[0.0], &s).unwrap();
    assert!(e.singular);
}

#[test]
fn m_transport_of_normal_location_direction() {
    let grid = vec![vec![1.0], vec![4.0]];
    let s = grid_scheme(&NormalMean, &[0.0], &grid);
    let d1 = model::density(&NormalMean, &[0.0], &[1.0], &s).unwrap();
    let d4 = model::density(&NormalMean, &[0.0], &[4.0], &s).unwrap();
    let a = L2Vec::from_fn(&d1, |x| x[0]).unwrap();
    let t = m_transport(&a, &d4).unwrap();
    for (i, x) in s.nodes().enumerate().step_by(13) {
        let ratio = 2.0 * (-x[0] * x[0] / 2.0 + x[0] * x[0] / 8.0).exp();
        assert!((t.values()[i] - ratio * x[0]).abs() < 1e-9 * (1.0 + ratio * x[0].abs()));
    }
    assert!(t.mean().abs() < 1e-6);
    assert!(m_transport(&a, &d1).unwrap().values() == a.values());
    let back = m_transport(&t, &d1).unwrap();
    let err = back.values().iter().zip(a.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(err < 1e-10);
}

#[test]
fn transport_identities_on_random_vectors() {
    let pairs = |z: f64| [(z, 2.0 * z), (z, 0.5 * z), (2.0 * z, z / 1.5)];
    for m in builtin_models() {
        let (theta, z0) = m.default_point();
        let mut grid = Vec::new();
        let mut checks = Vec::new();
        for (a, b) in pairs(1.0) {
            let mut za = z0.clone();
            let mut zb = z0.clone();
            za[0] *= a;
            zb[0] *= b;
            grid.push(za.clone());
            grid.push(zb.clone());
            checks.push((za, zb));
        }
        let s = grid_scheme(m.as_ref(), &theta, &grid);
        for (i, (za, zb)) in checks.iter().enumerate() {
            let r = random_transport_check(m.as_ref(), &theta, za, zb, &s, 20, i as u64).unwrap();
            assert!(r.max() < 1e-8, "{} {za:?}->{zb:?}: {r:?}", m.name());
        }
    }
}

#[test]
fn normal_location_score_lies_in_fia() {
    let grid = vec![vec![0.5], vec![1.0], vec![2.0]];
    let s = grid_scheme(&NormalMean, &[0.0], &grid);
    let amb = build_ambient(&NormalMean, &[0.0], &[1.0], &grid, &s, &AmbientSpec::default()).unwrap();
    let fia = fia_space(&NormalMean, &[0.0], &[1.0], &grid, &amb).unwrap();
    let d = fia.space.density().clone();
    let l = L2Vec::from_fn(&d, |x| x[0]).unwrap();
    let r = complement_project(&l, &fia.space).unwrap();
    assert!(r.norm() / l.norm() < 1e-8, "{}", r.norm());
    assert!(fia.max_ambient_residual < AMBIENT_RESIDUAL_TOL);
}

#[test]
fn information_score_equals_efficient_score_when_attainable() {
    for m in [Arc::new(NormalMean) as crate::model::ModelRef, Arc::new(PoissonPair), Arc::new(SymmetricLocation::default())] {
        let (theta, z) = m.default_point();
        let grid = m.nuisance_grid(&z);
        let s = grid_scheme(m.as_ref(), &theta, &grid);
        let r = efficiency_report(m.as_ref(), &theta, &z, &grid, &s, &AmbientSpec::default(), &Tolerances::default()).unwrap();
        assert!(r.l_i_minus_l_e < 1e-8, "{}: {}", m.name(), r.l_i_minus_l_e);
        assert!(r.attainability.attainable, "{}: {:?}", m.name(), r.attainability);
        let b = r.bridge.unwrap();
        assert!(b.nuisance_residual < 1e-6 && b.identity_residual < 1e-6, "{b:?}");
        assert!(r.loewner_gap > -1e-8);
    }
}

#[test]
fn shifting_nuisance_is_not_attainable() {
    let m = ShiftingNuisance;
    let (theta, z) = m.default_point();
    let grid = m.nuisance_grid(&z);
    let s = grid_scheme(&m, &theta, &grid);
    let r = efficiency_report(&m, &theta, &z, &grid, &s, &AmbientSpec::default(), &Tolerances::default()).unwrap();
    assert!(!r.attainability.attainable);
    assert!(r.l_i_norms[0] < r.l_e_norms[0] - 1e-3, "{:?} {:?}", r.l_i_norms, r.l_e_norms);
    assert!(r.loewner_gap > 1e-4);
}

#[test]
fn fia_does_not_depend_on_the_reference() {
    // One ambient serving both references; F_IA at the second reference is
    // moved to the first by e-transport (recentering).
    for m in [Arc::new(NormalMean) as crate::model::ModelRef, Arc::new(ShiftingNuisance)] {
        let (theta, z) = m.default_point();
        let grid = m.nuisance_grid(&z);
        let z2 = grid[3].clone();
        let s = grid_scheme(m.as_ref(), &theta, &grid);
        let spec = AmbientSpec { extra_references: vec![z2.clone()], ..AmbientSpec::default() };
        let amb = build_ambient(m.as_ref(), &theta, &z, &grid, &s, &spec).unwrap();
        let f1 = fia_space(m.as_ref(), &theta, &z, &grid, &amb).unwrap();
        let f2 = fia_space(m.as_ref(), &theta, &z2, &grid, &amb).unwrap();
        let d1 = f1.space.density().clone();
        let moved: Vec<L2Vec> = f2.space.basis().iter().map(|b| e_transport(b, &d1).unwrap()).collect();
        let f2_at_1 = Subspace::orthonormal(&d1, &moved, 1e-9).unwrap();
        assert_eq!(f1.space.dim(), f2_at_1.dim(), "{}", m.name());
        let c = principal_angles(&f1.space, &f2_at_1).unwrap();
        let worst = c.iter().cloned().fold(1.0, f64::min);
        assert!(worst > 1.0 - 1e-6, "{}: {worst}", m.name());
    }
}

#[test]
fn too_small_ambient_is_a_config_error() {
    let grid = vec![vec![0.5], vec![1.0], vec![2.0]];
    let s = grid_scheme(&NormalMean, &[0.0], &grid);
    let d = model::density(&NormalMean, &[0.0], &[1.0], &s).unwrap();
    let tiny = Subspace::orthonormal(&d, &[L2Vec::from_fn(&d, |x| x[0]).unwrap()], 1e-9).unwrap();
    match fia_space(&NormalMean, &[0.0], &[1.0], &grid, &tiny) {
        Err(Error::Config(msg)) => assert!(msg.contains("transported nuisance #0"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn reparametrised_gradient_scales_the_bound() {
    // Interest g(θ) = cθ: gradient c J_E^{-1} l_E, variance c² / J_E.
    let s = default_scheme(&NormalMean, &[0.0], &[2.0]).unwrap();
    let e = efficient_score(&NormalMean, &[0.0], &[2.0], &s).unwrap();
    let c = 3.0;
    let phi = e.l_e[0].scale(c / e.j_e[(0, 0)]);
    assert!((phi.norm_sq() - c * c * 2.0).abs() < 1e-6);
}
