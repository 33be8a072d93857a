use std::f64::consts::PI;

use proptest::prelude::*;

use super::*;

fn normal(mu: f64, var: f64) -> Density {
    let sd = var.sqrt();
    let s = IntegrationScheme::gauss_legendre(mu - 10.0 * sd, mu + 10.0 * sd, 24, 16).unwrap();
    let vals = s
        .nodes()
        .map(|x| (-(x[0] - mu).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt())
        .collect();
    Density::new(s, vals, 1e-6).unwrap()
}

fn poly(d: &Density, k: i32) -> L2Vec {
    L2Vec::from_fn(d, |x| x[0].powi(k)).unwrap()
}

#[test]
fn gaussian_moments() {
    let d = normal(0.0, 2.0);
    let x = poly(&d, 1);
    assert!((inner_product(&x, &x).unwrap() - 2.0).abs() < 1e-8);
    let x2 = poly(&d, 2);
    assert!((inner_product(&x2, &x2).unwrap() - 12.0).abs() < 1e-8);
}

#[test]
fn center_removes_the_mean() {
    let d = normal(1.5, 0.7);
    let f = L2Vec::from_fn(&d, |x| (x[0]).exp()).unwrap();
    assert!(center(&f).mean().abs() < 1e-12);
}

#[test]
fn projection_of_cubic_on_linear() {
    // E[x^4]/E[x^2] = 3 under N(0, 1).
    let d = normal(0.0, 1.0);
    let s = Subspace::new(vec![poly(&d, 1)], 0.0).unwrap();
    let p = project(&poly(&d, 3), &s).unwrap();
    let want = poly(&d, 1).scale(3.0);
    assert!(p.sub(&want).unwrap().norm() < 1e-9);
}

#[test]
fn principal_angle_closed_form() {
    // cos = E[x^4] / sqrt(E[x^2] E[x^6]) = 3 / sqrt(15).
    let d = normal(0.0, 1.0);
    let a = Subspace::new(vec![poly(&d, 1)], 0.0).unwrap();
    let b = Subspace::new(vec![poly(&d, 3)], 0.0).unwrap();
    let c = principal_angles(&a, &b).unwrap();
    assert_eq!(c.len(), 1);
    assert!((c[0] - 3.0 / 15f64.sqrt()).abs() < 1e-10);
    let ab = Subspace::new(vec![poly(&d, 1), poly(&d, 3)], 0.0).unwrap();
    let c = principal_angles(&a, &ab).unwrap();
    assert!((c[0] - 1.0).abs() < 1e-12);
}

#[test]
fn mismatched_schemes_are_rejected() {
    let a = poly(&normal(0.0, 1.0), 1);
    let b = poly(&normal(0.0, 2.0), 1);
    assert!(matches!(inner_product(&a, &b), Err(crate::Error::Config(_))));
}

#[test]
fn same_scheme_different_density_is_rejected() {
    let d = normal(0.0, 1.0);
    let other = Density::new(d.scheme().clone(), d.values().iter().map(|v| v * 1.0000001).collect(), 1e-3)
        .unwrap();
    let a = poly(&d, 1);
    let b = a.with_density(&other).unwrap();
    assert!(inner_product(&a, &b).is_err());
}

#[test]
fn singular_gram_without_ridge_is_an_error() {
    let d = normal(0.0, 1.0);
    let x = poly(&d, 1);
    let err = Subspace::new(vec![x.clone(), x.scale(2.0)], 0.0).unwrap_err();
    assert!(matches!(err, crate::Error::Numerical(_)));
    let s = Subspace::new(vec![x.clone(), x.scale(2.0)], 1e-10).unwrap();
    let p = project(&x, &s).unwrap();
    assert!(p.sub(&x).unwrap().norm() < 1e-6);
}

#[test]
fn orthonormal_drops_dependent_vectors() {
    let d = normal(0.0, 1.0);
    let v = vec![poly(&d, 1), poly(&d, 1).scale(-3.0), poly(&d, 2), poly(&d, 1).add(&poly(&d, 2)).unwrap()];
    let s = Subspace::orthonormal(&d, &v, 1e-9).unwrap();
    assert_eq!(s.dim(), 2);
    let g = s.gram();
    assert!((g - nalgebra::DMatrix::identity(2, 2)).amax() < 1e-13);
}

#[test]
fn mass_check_rejects_unnormalised_values() {
    let d = normal(0.0, 1.0);
    let bad: Vec<f64> = d.values().iter().map(|v| v * 1.1).collect();
    assert!(Density::new(d.scheme().clone(), bad, 1e-6).is_err());
}

#[test]
fn monte_carlo_weights_reweight_to_lebesgue() {
    // Draws from N(0,1): the integral of the N(0,1) density is exactly one, and
    // E[x^2] of a different normal is reached by self-normalised reweighting.
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let xs: Vec<f64> = (0..20000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let q: Vec<f64> = xs.iter().map(|x| (-x * x / 2.0).exp() / (2.0 * PI).sqrt()).collect();
    let s = IntegrationScheme::monte_carlo(1, xs.clone(), q.clone(), 7).unwrap();
    assert!(s.weights().iter().all(|w| *w == 1.0 / 20000.0));
    let base = Density::new(s.clone(), q, 1e-6).unwrap();
    assert!((base.mass() - 1.0).abs() < 1e-12);
    let other: Vec<f64> = xs.iter().map(|x| (-(x - 0.3f64).powi(2) / 2.0).exp() / (2.0 * PI).sqrt()).collect();
    let d = Density::new(s, other, 1e-6).unwrap();
    let m = L2Vec::from_fn(&d, |x| x[0]).unwrap().mean();
    assert!((m - 0.3).abs() < 0.03);
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 5)
}

fn from_coeffs(d: &Density, c: &[f64]) -> L2Vec {
    // Polynomial of degree 4 plus a bounded term.
    L2Vec::from_fn(d, |x| {
        let t = x[0];
        c[0] * t + c[1] * t * t + c[2] * t.powi(3) + c[3] * t.powi(4) + c[4] * t.sin()
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn inner_product_is_symmetric_and_bilinear(a in coeffs(), b in coeffs(), s in -3.0f64..3.0) {
        let d = normal(0.4, 1.3);
        let f = from_coeffs(&d, &a);
        let g = from_coeffs(&d, &b);
        let fg = inner_product(&f, &g).unwrap();
        prop_assert!((fg - inner_product(&g, &f).unwrap()).abs() <= 1e-12 * (1.0 + fg.abs()));
        let lhs = inner_product(&f.scale(s), &g).unwrap();
        prop_assert!((lhs - s * fg).abs() <= 1e-10 * (1.0 + fg.abs()));
    }

    #[test]
    fn projection_is_idempotent_and_self_adjoint(a in coeffs(), b in coeffs()) {
        let d = normal(-0.2, 0.8);
        let s = Subspace::new(vec![center(&poly(&d, 1)), center(&poly(&d, 2))], 0.0).unwrap();
        let f = center(&from_coeffs(&d, &a));
        let g = center(&from_coeffs(&d, &b));
        let pf = project(&f, &s).unwrap();
        let ppf = project(&pf, &s).unwrap();
        prop_assert!(ppf.sub(&pf).unwrap().norm() <= 1e-9 * (1.0 + f.norm()));
        let pg = project(&g, &s).unwrap();
        let l = inner_product(&pf, &g).unwrap();
        let r = inner_product(&f, &pg).unwrap();
        prop_assert!((l - r).abs() <= 1e-9 * (1.0 + f.norm() * g.norm()));
    }

    #[test]
    fn pythagoras_and_orthogonal_residual(a in coeffs()) {
        let d = normal(0.0, 1.0);
        let s = Subspace::new(vec![poly(&d, 1), center(&poly(&d, 2)), poly(&d, 3)], 0.0).unwrap();
        let f = center(&from_coeffs(&d, &a));
        let p = project(&f, &s).unwrap();
        let r = complement_project(&f, &s).unwrap();
        let total = f.norm_sq();
        prop_assert!((p.norm_sq() + r.norm_sq() - total).abs() <= 1e-9 * (1.0 + total));
        for b in s.basis() {
            let ip = inner_product(&r, b).unwrap();
            prop_assert!(ip.abs() <= 1e-8 * (1.0 + f.norm() * b.norm()));
        }
    }

    #[test]
    fn ridge_projection_is_continuous_at_zero(a in coeffs()) {
        let d = normal(0.0, 1.0);
        let basis = vec![poly(&d, 1), center(&poly(&d, 2))];
        let f = center(&from_coeffs(&d, &a));
        let p0 = project(&f, &Subspace::new(basis.clone(), 0.0).unwrap()).unwrap();
        let p1 = project(&f, &Subspace::new(basis, 1e-12).unwrap()).unwrap();
        prop_assert!(p0.sub(&p1).unwrap().norm() <= 1e-9 * (1.0 + f.norm()));
    }

    #[test]
    fn centering_is_idempotent(a in coeffs()) {
        let d = normal(1.0, 2.0);
        let f = from_coeffs(&d, &a);
        let c = center(&f);
        prop_assert!(c.mean().abs() <= 1e-10 * (1.0 + f.norm()));
        prop_assert!(center(&c).sub(&c).unwrap().norm() <= 1e-12 * (1.0 + f.norm()));
    }

    #[test]
    fn principal_angles_lie_in_unit_interval(a in coeffs(), b in coeffs()) {
        let d = normal(0.0, 1.0);
        let s1 = Subspace::new(vec![from_coeffs(&d, &a), poly(&d, 1)], 1e-12).unwrap();
        let s2 = Subspace::new(vec![from_coeffs(&d, &b)], 1e-12).unwrap();
        let c = principal_angles(&s1, &s2).unwrap();
        prop_assert_eq!(c.len(), 1);
        prop_assert!(c[0] >= 0.0 && c[0] <= 1.0);
    }
}
