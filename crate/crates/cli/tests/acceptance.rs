//! Acceptance battery: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Run with `cargo test -p semieff-cli --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semieff::conditioning::{conditioning_optimality_demo, fiber_centering, FactorizedModel};
use semieff::efficiency::{
    attainability_check, efficient_score, gradient_bridge, information_score_at, random_transport_check, scheme_for_grid,
    AmbientSpec,
};
use semieff::estimate::{mc_study, McOptions};
use semieff::functional::{chain_rule, moment_gradient, verify_gradient, Functional};
use semieff::godambe::{
    battery_for, check_regularity, conditional_score, godambe_information, optimality_battery, poisson_pair_battery, InferenceFn,
};
use semieff::measure::{center, complement_project, project, Density, L2Vec, Subspace};
use semieff::model::toys::ShiftingNuisance;
use semieff::model::{builtin_models, default_scheme, density, DensityModel, ModelRef, NormalMean, PoissonPair, SchemeSpec};
use semieff::tangent::{default_t_grid, diagnose_path, PathDiagnostic, PathSpec, Verdict};
use semieff::Tolerances;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn tol() -> Tolerances {
    Tolerances::default()
}

/// Random bounded centered function: a sum of a few sinusoids.
fn random_fn(d: &Density, rng: &mut ChaCha8Rng, scale: f64) -> L2Vec {
    let terms: Vec<(Vec<f64>, f64, f64)> = (0..4)
        .map(|_| {
            let dim = d.scheme().dim();
            let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0) / scale).collect();
            (a, rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(-2.0..2.0))
        })
        .collect();
    let f = L2Vec::from_fn(d, |x| terms.iter().map(|(a, b, c)| c * (a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() + b).sin()).sum())
        .expect("finite");
    center(&f)
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut worst = [0.0f64; 3];
    for (mi, m) in builtin_models().iter().enumerate() {
        let (theta, z) = m.default_point();
        let s = default_scheme(m.as_ref(), &theta, &z).map_err(e2s)?;
        let d = density(m.as_ref(), &theta, &z, &s).map_err(e2s)?;
        let scale = 1.0 + z.iter().map(|v| v.abs()).fold(0.0, f64::max).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + mi as u64);
        for case in 0..50 {
            let k = rng.gen_range(1..=4);
            let basis: Vec<L2Vec> = (0..k).map(|_| random_fn(&d, &mut rng, scale)).collect();
            let sub = Subspace::new(basis, 0.0).map_err(e2s)?;
            let f = random_fn(&d, &mut rng, scale);
            let g = random_fn(&d, &mut rng, scale);
            let (a, b) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let pf = project(&f, &sub).map_err(e2s)?;
            let ppf = project(&pf, &sub).map_err(e2s)?;
            let idem = ppf.sub(&pf).map_err(e2s)?.norm() / f.norm().max(1.0);
            let resid = complement_project(&f, &sub).map_err(e2s)?;
            let pyth = (f.norm_sq() - pf.norm_sq() - resid.norm_sq()).abs() / f.norm_sq().max(1.0);
            let pg = project(&g, &sub).map_err(e2s)?;
            let lhs = project(&f.scale(a).add(&g.scale(b)).map_err(e2s)?, &sub).map_err(e2s)?;
            let rhs = pf.scale(a).add(&pg.scale(b)).map_err(e2s)?;
            let lin = lhs.sub(&rhs).map_err(e2s)?.norm() / (a.abs() * f.norm() + b.abs() * g.norm()).max(1.0);
            worst = [worst[0].max(idem), worst[1].max(pyth), worst[2].max(lin)];
            ensure(idem <= 1e-10 && pyth <= 1e-8 && lin <= 1e-8, || {
                format!("{} case {case}: idempotence {idem:e}, pythagoras {pyth:e}, linearity {lin:e}", m.name())
            })?;
        }
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(10), || format!("took {t:?}"))?;
    Ok(format!("150 cases; idempotence {:.1e}, pythagoras {:.1e}, linearity {:.1e}", worst[0], worst[1], worst[2]))
}

fn chain_ok(d: &PathDiagnostic) -> bool {
    let c = |v: Verdict| v == Verdict::Converging;
    let v = &d.verdicts;
    (!c(v.sup) || c(v.l2)) && (!c(v.l2) || c(v.weak)) && (!c(v.weak) || c(v.l1))
}

fn hellinger_ok(d: &PathDiagnostic) -> bool {
    d.verdicts.l2 != Verdict::Converging || d.verdicts.hellinger == Verdict::Converging
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let t = tol();
    let grid = default_t_grid();
    let s = default_scheme(&NormalMean, &[0.0], &[1.0]).map_err(e2s)?;
    let gauss = PathSpec::parametric(&NormalMean, &[0.0], &[1.0], &[1.0], &s, &grid).map_err(e2s)?;
    let mut all = Vec::new();

    let lin = diagnose_path(&PathSpec::linear(gauss.base(), gauss.tangent(), &grid).map_err(e2s)?, &t).map_err(e2s)?;
    let lin_max = lin.rows.iter().flat_map(|r| [r.l1, r.l2, r.sup, r.weak1, r.weak2]).fold(0.0, f64::max);
    ensure(lin_max < 1e-10, || format!("linear path remainder {lin_max:e}"))?;
    all.push(lin);

    let g = diagnose_path(&gauss, &t).map_err(e2s)?;
    let conv = |v: Verdict| v == Verdict::Converging;
    ensure(conv(g.verdicts.l2) && conv(g.verdicts.weak) && conv(g.verdicts.l1), || format!("gaussian verdicts {:?}", g.verdicts))?;
    for (name, slope) in [("l2", g.slopes.l2), ("l1", g.slopes.l1)] {
        let sl = slope.ok_or_else(|| format!("no {name} slope"))?;
        ensure((sl - 1.0).abs() <= 0.1, || format!("{name} slope {sl}"))?;
    }
    let (sl2, sl1) = (g.slopes.l2.unwrap_or(f64::NAN), g.slopes.l1.unwrap_or(f64::NAN));
    all.push(g);

    let wrong = gauss.clone().with_claimed_tangent(gauss.tangent().scale(2.0)).map_err(e2s)?;
    let w = diagnose_path(&wrong, &t).map_err(e2s)?;
    let fail = |v: Verdict| v == Verdict::NotConverging;
    ensure(fail(w.verdicts.sup) && fail(w.verdicts.l2) && fail(w.verdicts.weak) && fail(w.verdicts.l1), || {
        format!("wrong tangent verdicts {:?}", w.verdicts)
    })?;
    all.push(w);

    for m in builtin_models() {
        let (theta, z) = m.default_point();
        let far: Vec<f64> = theta.iter().map(|v| v + grid[0]).collect();
        let sc = semieff::model::build_scheme(m.as_ref(), &[(theta.clone(), z.clone()), (far, z.clone())], &SchemeSpec::default()).map_err(e2s)?;
        let mut dir = vec![0.0; theta.len()];
        dir[0] = 1.0;
        let p = PathSpec::parametric(m.as_ref(), &theta, &z, &dir, &sc, &grid).map_err(e2s)?;
        all.push(diagnose_path(&p, &t).map_err(e2s)?);
    }
    for (i, d) in all.iter().enumerate() {
        ensure(chain_ok(d), || format!("path {i} breaks the implication chain: {:?}", d.verdicts))?;
        ensure(hellinger_ok(d), || format!("path {i}: Hellinger does not follow L2: {:?}", d.verdicts))?;
    }
    let el = start.elapsed();
    ensure(el < Duration::from_secs(30), || format!("took {el:?}"))?;
    Ok(format!("linear remainder {lin_max:.1e}; slopes l2 {sl2:.3}, l1 {sl1:.3}; {} paths consistent", all.len()))
}

fn criterion_3() -> Check {
    let s = default_scheme(&NormalMean, &[0.5], &[1.0]).map_err(e2s)?;
    let d = density(&NormalMean, &[0.5], &[1.0], &s).map_err(e2s)?;
    let span = |deg: i32| -> Result<Subspace, String> {
        let v: Vec<L2Vec> = (1..=deg).map(|k| moment_gradient(&d, k)).collect::<semieff::Result<_>>().map_err(e2s)?;
        Subspace::orthonormal(&d, &v, 1e-10).map_err(e2s)
    };
    let t = tol();
    let g = moment_gradient(&d, 1).map_err(e2s)?;
    let mean = Functional::mean();
    let r = verify_gradient(&mean, &d, &span(4)?, std::slice::from_ref(&g), &t).map_err(e2s)?;
    ensure(r.max_residual < 1e-6, || format!("mean gradient residual {:e}", r.max_residual))?;

    let cone = span(1)?;
    let xi = complement_project(&moment_gradient(&d, 3).map_err(e2s)?, &cone).map_err(e2s)?;
    let a = verify_gradient(&mean, &d, &cone, std::slice::from_ref(&g), &t).map_err(e2s)?;
    let b = verify_gradient(&mean, &d, &cone, &[g.add(&xi).map_err(e2s)?], &t).map_err(e2s)?;
    let uniq = a.canonical[0].sub(&b.canonical[0]).map_err(e2s)?.norm();
    ensure(a.passes && b.passes && uniq < 1e-8, || format!("canonical gradients differ by {uniq:e}"))?;

    let m = mean.eval(&d)[0];
    let composed = mean.compose("mean squared", 1, |v| vec![v[0] * v[0]]);
    let cg = chain_rule(&[g], &DMatrix::from_element(1, 1, 2.0 * m)).map_err(e2s)?;
    let c = verify_gradient(&composed, &d, &span(3)?, &cg, &t).map_err(e2s)?;
    ensure(c.max_residual < 1e-5, || format!("chain rule residual {:e}", c.max_residual))?;
    Ok(format!("mean residual {:.1e}; uniqueness {uniq:.1e}; chain rule {:.1e}", r.max_residual, c.max_residual))
}

fn criterion_4() -> Check {
    let mut worst = 0.0f64;
    let mut duality = 0.0f64;
    for m in builtin_models() {
        let (theta, z0) = m.default_point();
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = [(1.0, 2.0), (1.0, 0.5), (2.0, 1.0 / 1.5)]
            .iter()
            .map(|(a, b)| {
                let (mut za, mut zb) = (z0.clone(), z0.clone());
                za[0] *= a;
                zb[0] *= b;
                (za, zb)
            })
            .collect();
        let grid: Vec<Vec<f64>> = pairs.iter().flat_map(|(a, b)| [a.clone(), b.clone()]).collect();
        let s = scheme_for_grid(m.as_ref(), &theta, &grid, &SchemeSpec::default()).map_err(e2s)?;
        for (i, (za, zb)) in pairs.iter().enumerate() {
            let r = random_transport_check(m.as_ref(), &theta, za, zb, &s, 20, 40 + i as u64).map_err(e2s)?;
            ensure(r.max() <= 1e-8 && r.duality <= 1e-8, || format!("{} {za:?} -> {zb:?}: {r:?}", m.name()))?;
            worst = worst.max(r.max());
            duality = duality.max(r.duality);
        }
    }
    Ok(format!("3 models x 3 pairs x 20 vectors; worst identity {worst:.1e}, duality {duality:.1e}"))
}

fn criterion_5() -> Check {
    let t = tol();
    let spec = AmbientSpec::default();
    let mut worst_je = 0.0f64;
    for z in [0.5, 1.0, 2.0, 4.0] {
        let s = default_scheme(&NormalMean, &[0.3], &[z]).map_err(e2s)?;
        let e = efficient_score(&NormalMean, &[0.3], &[z], &s).map_err(e2s)?;
        worst_je = worst_je.max((e.j_e[(0, 0)] - 1.0 / z).abs());
    }
    ensure(worst_je <= 1e-6, || format!("J_E - 1/z = {worst_je:e}"))?;

    let mut li_le = 0.0f64;
    let mut bridge = (0.0f64, 0.0f64);
    let models: Vec<ModelRef> = vec![Arc::new(NormalMean), Arc::new(PoissonPair)];
    for m in &models {
        let (theta, z) = m.default_point();
        let grid = m.nuisance_grid(&z);
        let s = scheme_for_grid(m.as_ref(), &theta, &grid, &SchemeSpec::default()).map_err(e2s)?;
        let att = attainability_check(m.as_ref(), &theta, &grid, &s, &spec, &t).map_err(e2s)?;
        ensure(att.attainable, || format!("{} not attainable: worst cosine {:?}", m.name(), att.worst))?;
        let info = information_score_at(m.as_ref(), &theta, &z, &grid, &s, &spec).map_err(e2s)?;
        let eff = efficient_score(m.as_ref(), &theta, &z, &s).map_err(e2s)?;
        for (li, le) in info.l_i.iter().zip(&eff.l_e) {
            li_le = li_le.max(li.sub(le).map_err(e2s)?.norm() / le.norm());
        }
        let (_, b) = gradient_bridge(m.as_ref(), &theta, &z, &info).map_err(e2s)?;
        bridge = (bridge.0.max(b.nuisance_residual), bridge.1.max(b.identity_residual));
    }
    ensure(li_le <= 1e-8, || format!("relative |l_I - l_E| = {li_le:e}"))?;
    ensure(bridge.0 <= 1e-6 && bridge.1 <= 1e-6, || format!("gradient conditions {bridge:?}"))?;

    let m = ShiftingNuisance;
    let (theta, z) = m.default_point();
    let grid = m.nuisance_grid(&z);
    let s = scheme_for_grid(&m, &theta, &grid, &SchemeSpec::default()).map_err(e2s)?;
    let att = attainability_check(&m, &theta, &grid, &s, &spec, &t).map_err(e2s)?;
    ensure(!att.attainable, || "shifting-nuisance toy reported attainable".into())?;
    Ok(format!("J_E error {worst_je:.1e}; l_I vs l_E {li_le:.1e}; gradient conditions {:.1e}/{:.1e}; toy not attainable", bridge.0, bridge.1))
}

fn criterion_6() -> Check {
    let t = tol();
    let s = default_scheme(&NormalMean, &[0.0], &[1.0]).map_err(e2s)?;
    let score = InferenceFn::score_of(Arc::new(NormalMean));
    let j = godambe_information(&score, &NormalMean, &[0.0], &[1.0], &s, None, &t).map_err(e2s)?.j[(0, 0)];
    ensure((j - 1.0).abs() <= 1e-6, || format!("J(score) = {j}"))?;

    let mut scale_gap = 0.0f64;
    let mut psd = f64::INFINITY;
    let mut bound = 0.0f64;
    let mut s_ext = 0.0f64;
    let mut members = 0;
    for m in builtin_models() {
        let (theta, z) = m.default_point();
        let grid = m.nuisance_grid(&z);
        let sc = scheme_for_grid(m.as_ref(), &theta, &grid, &SchemeSpec::default()).map_err(e2s)?;
        let battery = battery_for(m.clone());
        for psi in &battery {
            let a = godambe_information(psi, m.as_ref(), &theta, &z, &sc, None, &t).map_err(e2s)?.j;
            let b = godambe_information(&psi.scaled(-2.5), m.as_ref(), &theta, &z, &sc, None, &t).map_err(e2s)?.j;
            scale_gap = scale_gap.max((&a - &b).norm() / a.norm());
        }
        let rep = optimality_battery(&battery, m.as_ref(), &theta, &z, &grid, &sc, &AmbientSpec::default(), &t).map_err(e2s)?;
        for c in &rep.candidates {
            members += 1;
            if c.bound_applies {
                let g = c.info_part_gap.ok_or_else(|| format!("{}: no information-part gap", c.name))?;
                let mb = c.info_part_minus_bound.ok_or_else(|| format!("{}: no bound comparison", c.name))?;
                psd = psd.min(g);
                bound = bound.max(mb);
            }
            // Extended and classical sensitivity agree only for functions
            // unbiased at every nuisance value; a quasi-inference function
            // is unbiased at its own z alone.
            if c.regular && !c.depends_on_nuisance {
                let gap = c.godambe.s_ext_gap.ok_or_else(|| format!("{}: no extended sensitivity", c.name))?;
                s_ext = s_ext.max(gap);
            }
        }
    }
    ensure(scale_gap <= 1e-8, || format!("scale invariance gap {scale_gap:e}"))?;
    ensure(psd >= -1e-8, || format!("min eigenvalue of J(psi_I) - J(psi) = {psd:e}"))?;
    ensure(bound <= 1e-6, || format!("|J(psi_I) - J(l_I)| = {bound:e}"))?;
    ensure(s_ext <= 1e-4, || format!("|S_ext - S| = {s_ext:e}"))?;
    Ok(format!("J(score) = {j:.9}; scale {scale_gap:.1e}; {members} members: PSD {psd:.1e}, bound {bound:.1e}, S_ext {s_ext:.1e}"))
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool").install(f)
}

fn criterion_7() -> Check {
    let start = Instant::now();
    let z0 = 2.0;
    let opts = McOptions::default();
    let linear = InferenceFn::scalar("x-theta", |x, t| x[0] - t);
    let cubic = InferenceFn::scalar("(x-theta)^3", |x, t| (x[0] - t).powi(3));
    let (a, b) = single_threaded(|| {
        (
            mc_study(&linear, &NormalMean, &[0.5], &[z0], 2000, 1000, 42, &opts),
            mc_study(&cubic, &NormalMean, &[0.0], &[1.0], 2000, 1000, 9, &opts),
        )
    });
    let (a, b) = (a.map_err(e2s)?, b.map_err(e2s)?);
    let v = a.empirical_cov[(0, 0)];
    ensure(a.valid && (v - z0).abs() <= 0.1 * z0, || format!("var {v} vs z = {z0}"))?;
    let ratio = b.ratio_to_bound.as_ref().map(|r| r[0]).unwrap_or(f64::NAN);
    ensure(b.valid && ratio > 1.1, || format!("cubic ratio to bound {ratio}"))?;
    let el = start.elapsed();
    ensure(el < Duration::from_secs(300), || format!("took {el:?}"))?;
    Ok(format!("var {v:.4} vs {z0}; cubic ratio {ratio:.3}; {el:.1?} single-threaded"))
}

fn criterion_8() -> Check {
    let t = tol();
    let fm = FactorizedModel::poisson_pair();
    let psi = conditional_score();
    let zs = [0.5, 1.0, 2.0, 4.0];
    let thetas = [0.5, 1.0, 2.0];
    let mut j_err = 0.0f64;
    let mut centering = 0.0f64;
    for &theta in &thetas {
        for &z in &zs {
            let s = default_scheme(&PoissonPair, &[theta], &[z]).map_err(e2s)?;
            let reg = check_regularity(&psi, &PoissonPair, &[theta], &[z], &s, &t).map_err(e2s)?;
            ensure(reg.passed(), || format!("theta {theta}, z {z}: {reg:?}"))?;
            centering = centering.max(fiber_centering(&psi, &fm, theta, &s).map_err(e2s)?);
            let j = godambe_information(&psi, &PoissonPair, &[theta], &[z], &s, None, &t).map_err(e2s)?.j[(0, 0)];
            j_err = j_err.max((j - z / (theta * (1.0 + theta))).abs());
        }
    }
    ensure(centering <= 1e-8, || format!("E[psi | t] = {centering:e}"))?;
    ensure(j_err <= 1e-6, || format!("J error {j_err:e}"))?;

    let z_grid: Vec<Vec<f64>> = zs.iter().map(|z| vec![*z]).collect();
    let demo = conditioning_optimality_demo(&fm, &thetas, &z_grid, &poisson_pair_battery(), &SchemeSpec::default(), &t).map_err(e2s)?;
    ensure(demo.optimal_everywhere, || {
        let bad: Vec<String> = demo.points.iter().filter(|p| !p.optimal).map(|p| format!("({}, {:?}) top {}", p.theta, p.z, p.top)).collect();
        format!("conditional score not first at {}", bad.join(", "))
    })?;

    let (theta, z) = (1.0, 2.0);
    let mc = mc_study(&psi, &PoissonPair, &[theta], &[z], 2000, 1000, 17, &McOptions::default()).map_err(e2s)?;
    let target = theta * (1.0 + theta) / z;
    let v = mc.empirical_cov[(0, 0)];
    ensure(mc.valid && (v - target).abs() <= 0.1 * target, || format!("MC var {v} vs 1/J = {target}"))?;
    Ok(format!("12 grid points regular; centering {centering:.1e}; J error {j_err:.1e}; first everywhere; MC var {v:.4} vs {target}"))
}

fn strip_metadata(path: &Path) -> Result<String, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut v: serde_json::Value = serde_json::from_str(&text).map_err(e2s)?;
    v.as_object_mut().ok_or("report is not an object")?.remove("metadata");
    serde_json::to_string_pretty(&v).map_err(e2s)
}

fn criterion_9() -> Check {
    let dir = tempfile::tempdir().map_err(e2s)?;
    let cfg = dir.path().join("run.json");
    let body = serde_json::json!({
        "model": "poisson-pair",
        "theta": [1.0],
        "z": [2.0],
        "seed": 11,
        "solve": { "n": 500 },
        "mc": { "n": 300, "reps": 100 },
    });
    std::fs::write(&cfg, body.to_string()).map_err(e2s)?;
    let commands = ["check-path", "gradient", "efficiency", "godambe", "solve", "mc", "conditioning-demo", "report-all"];
    for cmd in commands {
        let mut outs = Vec::new();
        for run in 0..2 {
            let out = dir.path().join(format!("{cmd}-{run}"));
            let args = ["semieff", cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
            let code = semieff_cli::run(args.iter().map(|s| s.to_string()).collect());
            ensure(code == 0, || format!("{cmd} exited with {code}"))?;
            outs.push(strip_metadata(&out.join(format!("{cmd}.json")))?);
        }
        ensure(outs[0] == outs[1], || format!("{cmd} output differs between runs"))?;
    }
    Ok(format!("{} subcommands reproduce their JSON", commands.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("Hilbert calculus", criterion_1),
        ("path diagnostics", criterion_2),
        ("gradients", criterion_3),
        ("transports", criterion_4),
        ("efficiency", criterion_5),
        ("Godambe information", criterion_6),
        ("estimation MC", criterion_7),
        ("conditioning", criterion_8),
        ("determinism", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let el = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS {} {name} ({el:.2?}): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name} ({el:.2?}): {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
