//! One function per subcommand, each turning a resolved configuration into
//! an `Outcome`.

use serde_json::{json, Value};

use semieff::conditioning::{conditioning_optimality_demo, FactorizedModel};
use semieff::efficiency::{efficiency_report, scheme_for_grid};
use semieff::estimate::{mc_study, solve};
use semieff::functional::{moment_gradient, verify_gradient, Functional};
use semieff::godambe::{conditional_score, optimality_battery, poisson_pair_battery, InferenceFn};
use semieff::linalg::matrix_rows;
use semieff::measure::Subspace;
use semieff::model::{self, Sample};
use semieff::tangent::{diagnose_path, dyadic_grid, PathSpec, Verdict, Verdicts};
use semieff::{Error, Result};

use crate::config::{psi_from_choice, Resolved};
use crate::output::{fmt_f64, to_value, Invariant, Outcome, Table};

fn grid_with_z(r: &Resolved) -> Vec<Vec<f64>> {
    let mut g = r.z_grid.clone();
    if !g.contains(&r.z) {
        g.push(r.z.clone());
    }
    g
}

/// Stronger convergence must never sit beside weaker non-convergence.
fn chain_holds(v: &Verdicts) -> bool {
    let conv = |x: &Verdict| *x == Verdict::Converging;
    (!conv(&v.sup) || conv(&v.l2)) && (!conv(&v.l2) || conv(&v.weak)) && (!conv(&v.weak) || conv(&v.l1))
}

pub fn check_path(r: &Resolved) -> Result<Outcome> {
    let cfg = &r.config.path;
    let q = r.theta.len();
    let direction = cfg.direction.clone().unwrap_or_else(|| (0..q).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect());
    let t_grid = dyadic_grid(cfg.k_min, cfg.k_max);
    let t_max = t_grid.iter().cloned().fold(0.0, f64::max);
    let far: Vec<f64> = r.theta.iter().zip(&direction).map(|(t, d)| t + t_max * d).collect();
    r.model.validate(&far, &r.z)?;
    let scheme = model::build_scheme(r.model.as_ref(), &[(r.theta.clone(), r.z.clone()), (far, r.z.clone())], &r.config.scheme)?;
    let mut path = PathSpec::parametric(r.model.as_ref(), &r.theta, &r.z, &direction, &scheme, &t_grid)?;
    if cfg.tangent_scale != 1.0 {
        let claimed = path.tangent().scale(cfg.tangent_scale);
        path = path.with_claimed_tangent(claimed)?;
    }
    let diag = diagnose_path(&path, &r.config.tolerances)?;
    let mut table = Table::new("path.csv", &["t", "l1", "l2", "sup", "weak1", "weak2", "hellinger"]);
    for row in &diag.rows {
        table.push([row.t, row.l1, row.l2, row.sup, row.weak1, row.weak2, row.hellinger].iter().map(|v| fmt_f64(*v)).collect());
    }
    let mut invariants = vec![
        Invariant::at_most("path identity p_t = p(1 + t nu + t r_t)", diag.identity_error, 1e-8),
        Invariant::holds("verdicts respect sup => L2 => weak => L1", chain_holds(&diag.verdicts)),
    ];
    if diag.verdicts.l2 == Verdict::Converging {
        invariants.push(Invariant::holds("Hellinger remainder converges with L2", diag.verdicts.hellinger == Verdict::Converging));
    }
    Ok(Outcome { result: json!({ "direction": direction, "tangent_scale": cfg.tangent_scale, "diagnostic": to_value(&diag)? }), tables: vec![table], invariants })
}

pub fn gradient(r: &Resolved) -> Result<Outcome> {
    let k = r.config.gradient.order;
    let scheme = model::default_scheme(r.model.as_ref(), &r.theta, &r.z)?;
    let d = model::density(r.model.as_ref(), &r.theta, &r.z, &scheme)?;
    let phi = Functional::moment(k);
    let grad = vec![moment_gradient(&d, k)?];
    let mut dirs = model::score_on(r.model.as_ref(), &r.theta, &r.z, &d)?;
    dirs.extend(model::dictionary_on(r.model.as_ref(), &r.theta, &r.z, &d)?);
    let cone = Subspace::orthonormal(&d, &dirs, 1e-10)?;
    let tol = &r.config.tolerances;
    let res = verify_gradient(&phi, &d, &cone, &grad, tol)?;
    let mut table = Table::new("gradient.csv", &["component", "direction", "derivative", "inner", "residual"]);
    for row in &res.directional {
        table.push(vec![row.component.to_string(), row.direction.to_string(), fmt_f64(row.derivative), fmt_f64(row.inner), fmt_f64(row.residual)]);
    }
    let result = json!({
        "functional": phi.name(),
        "value": phi.eval(&d),
        "cone_dim": cone.dim(),
        "max_residual": res.max_residual,
        "passes": res.passes,
        "directional": to_value(&res.directional)?,
        "cov_gradient": matrix_rows(&res.cov_gradient),
        "cov_canonical": matrix_rows(&res.cov_canonical),
        "loewner_gap": res.loewner_gap,
    });
    let invariants = vec![
        Invariant::at_most("directional derivatives match the gradient", res.max_residual, tol.grad),
        Invariant::at_least("canonical gradient has the smallest covariance", res.loewner_gap, tol.psd),
    ];
    Ok(Outcome { result, tables: vec![table], invariants })
}

pub fn efficiency(r: &Resolved) -> Result<Outcome> {
    let grid = grid_with_z(r);
    let scheme = scheme_for_grid(r.model.as_ref(), &r.theta, &grid, &r.config.scheme)?;
    let tol = &r.config.tolerances;
    let rep = efficiency_report(r.model.as_ref(), &r.theta, &r.z, &r.z_grid, &scheme, &r.config.ambient, tol)?;
    let zdim = r.z.len();
    let mut header: Vec<String> = (1..=zdim).map(|i| format!("z_{i}")).collect();
    header.extend(["min_cosine", "complement_dim", "fia_dim", "trace_j_e", "trace_j_i"].map(String::from));
    let mut att = Table { name: "attainability.csv".into(), header, rows: Vec::new() };
    let trace = |m: &[Vec<f64>]| (0..m.len()).map(|i| m[i][i]).sum::<f64>();
    for row in &rep.attainability.rows {
        let mut cells: Vec<String> = row.z.iter().map(|v| fmt_f64(*v)).collect();
        cells.extend([fmt_f64(row.min_cosine), row.complement_dim.to_string(), row.fia_dim.to_string(), fmt_f64(trace(&row.j_e)), fmt_f64(trace(&row.j_i))]);
        att.push(cells);
    }
    let mut invariants = vec![
        Invariant::at_most("efficient score orthogonal to nuisance tangents", rep.orthogonality_residual, tol.orth),
        Invariant::at_least("J_E - J_I is positive semidefinite", rep.loewner_gap, tol.psd),
    ];
    if let Some(b) = &rep.bridge {
        invariants.push(Invariant::at_most("gradient from l_I is orthogonal to nuisance tangents", b.nuisance_residual, 1e-6));
        invariants.push(Invariant::at_most("gradient from l_I has <phi, l> = I", b.identity_residual, 1e-6));
    }
    let tables = vec![att, Table::matrix("j_e.csv", &rep.j_e), Table::matrix("j_i.csv", &rep.j_i)];
    Ok(Outcome { result: to_value(&rep)?, tables, invariants })
}

pub fn godambe(r: &Resolved) -> Result<Outcome> {
    let battery = r.battery();
    let candidates: Vec<InferenceFn> = match &r.config.godambe.candidates {
        Some(cs) => cs.iter().map(|c| psi_from_choice(c, &battery, r.model.as_ref())).collect::<Result<_>>()?,
        None => battery,
    };
    let grid = grid_with_z(r);
    let scheme = scheme_for_grid(r.model.as_ref(), &r.theta, &grid, &r.config.scheme)?;
    let tol = &r.config.tolerances;
    let rep = optimality_battery(&candidates, r.model.as_ref(), &r.theta, &r.z, &r.z_grid, &scheme, &r.config.ambient, tol)?;
    let mut tables = Vec::new();
    let mut invariants = Vec::new();
    let mut ranking = Table::new("ranking.csv", &["position", "name", "rank", "trace_j"]);
    for (pos, name) in rep.ranking.iter().enumerate() {
        let c = rep.candidates.iter().find(|c| &c.name == name).expect("ranked candidate");
        ranking.push(vec![(pos + 1).to_string(), name.clone(), c.rank.unwrap_or(0).to_string(), fmt_f64(c.godambe.j.trace())]);
    }
    tables.push(ranking);
    for (i, c) in rep.candidates.iter().enumerate() {
        tables.push(Table::matrix(format!("godambe_{}_s.csv", i + 1), &matrix_rows(&c.godambe.s)));
        tables.push(Table::matrix(format!("godambe_{}_v.csv", i + 1), &matrix_rows(&c.godambe.v)));
        tables.push(Table::matrix(format!("godambe_{}_j.csv", i + 1), &matrix_rows(&c.godambe.j)));
        if !c.bound_applies {
            continue;
        }
        if let Some(g) = c.info_part_gap {
            invariants.push(Invariant::at_least(format!("{}: J(psi_I) - J(psi) is positive semidefinite", c.name), g, tol.psd));
        }
        if let Some(g) = c.info_part_minus_bound {
            invariants.push(Invariant::at_most(format!("{}: J(psi_I) = J(l_I)", c.name), g, 1e-6));
        }
        if let Some(g) = c.godambe.s_ext_gap {
            invariants.push(Invariant::at_most(format!("{}: extended sensitivity equals S", c.name), g, 1e-4));
        }
    }
    let mut result = to_value(&rep)?;
    let files: Vec<Value> = (1..=rep.candidates.len()).map(|i| json!({ "s": format!("godambe_{i}_s.csv"), "v": format!("godambe_{i}_v.csv"), "j": format!("godambe_{i}_j.csv") })).collect();
    result["matrix_files"] = Value::Array(files);
    Ok(Outcome { result, tables, invariants })
}

fn read_sample(path: &std::path::Path, dim: usize) -> Result<Sample> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut data = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.parse::<f64>()).collect();
        match vals {
            Ok(v) if v.len() == dim => data.extend(v),
            Ok(v) => return Err(Error::Config(format!("{} row {}: expected {dim} values, found {}", path.display(), i + 1, v.len()))),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::Config(format!("{} row {}: {e}", path.display(), i + 1))),
        }
    }
    Sample::new(dim, data)
}

pub fn solve_cmd(r: &Resolved) -> Result<Outcome> {
    let cfg = &r.config.solve;
    let psi = r.inference_fn(cfg.inference_fn.as_ref())?;
    let (sample, source) = match &cfg.data {
        Some(p) => (read_sample(p, r.model.sample_dim())?, json!({ "file": p })),
        None => {
            let seed = r.seed("drawing a sample (or give solve.data)")?;
            (model::sample(r.model.as_ref(), &r.theta, &r.z, cfg.n, seed)?, json!({ "model": r.model.name(), "n": cfg.n, "seed": seed }))
        }
    };
    let init = cfg.theta_init.clone().unwrap_or_else(|| r.theta.clone());
    let tr = solve(&psi, &sample, &init, &r.z, &cfg.options)?;
    let q = psi.q();
    let mut header: Vec<String> = vec!["iteration".into()];
    header.extend((1..=q).map(|i| format!("theta_{i}")));
    header.extend(["residual".to_string(), "step".to_string()]);
    let mut table = Table { name: "solve_iterates.csv".into(), header, rows: Vec::new() };
    for (i, it) in tr.iterates.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(it.theta.iter().map(|v| fmt_f64(*v)));
        row.extend([fmt_f64(it.residual), fmt_f64(it.step)]);
        table.push(row);
    }
    let invariants = vec![Invariant::holds("root found", tr.converged)];
    Ok(Outcome { result: json!({ "inference_fn": psi.name(), "sample": source, "sample_size": sample.len(), "trace": to_value(&tr)? }), tables: vec![table], invariants })
}

pub fn mc(r: &Resolved) -> Result<Outcome> {
    let cfg = &r.config.mc;
    let seed = r.seed("the mc subcommand")?;
    let psi = r.inference_fn(cfg.inference_fn.as_ref())?;
    let rep = mc_study(&psi, r.model.as_ref(), &r.theta, &r.z, cfg.n, cfg.reps, seed, &cfg.options)?;
    let mut tables = Vec::new();
    if cfg.dump_replications {
        let mut header: Vec<String> = vec!["rep".into()];
        header.extend((1..=psi.q()).map(|i| format!("theta_{i}")));
        header.push("converged".into());
        let mut t = Table { name: "mc_reps.csv".into(), header, rows: Vec::new() };
        for x in &rep.replications {
            let mut row = vec![x.rep.to_string()];
            row.extend(x.theta_hat.iter().map(|v| fmt_f64(*v)));
            row.push(x.converged.to_string());
            t.push(row);
        }
        tables.push(t);
    }
    let invariants = vec![
        Invariant::holds("at most 5% of replications failed", rep.valid),
        Invariant::at_least("empirical covariance is positive semidefinite", rep.empirical_cov_min_eigenvalue, -1e-12),
    ];
    let mut result = to_value(&rep)?;
    if let Some(o) = result.as_object_mut() {
        o.remove("replications");
    }
    Ok(Outcome { result, tables, invariants })
}

pub fn conditioning_demo(r: &Resolved) -> Result<Outcome> {
    if r.model.name() != "poisson-pair" {
        return Err(Error::Config(format!("no likelihood factorisation is available for `{}`; use --model poisson-pair", r.model.name())));
    }
    let fm = FactorizedModel::poisson_pair();
    let cfg = &r.config.conditioning;
    let mut thetas = cfg.theta_grid.clone().unwrap_or_else(|| vec![0.5, 1.0, 2.0]);
    if cfg.theta_grid.is_none() && !thetas.contains(&r.theta[0]) {
        thetas.push(r.theta[0]);
        thetas.sort_by(f64::total_cmp);
    }
    let zs = cfg.z_grid.clone().unwrap_or_else(|| vec![vec![0.5], vec![1.0], vec![2.0], vec![4.0]]);
    let mut battery = poisson_pair_battery();
    battery.push(conditional_score().scaled(2.0));
    let tol = &r.config.tolerances;
    let rep = conditioning_optimality_demo(&fm, &thetas, &zs, &battery, &r.config.scheme, tol)?;
    let mut table = Table::new("conditioning.csv", &["theta", "z", "member", "j", "gap"]);
    let mut invariants = vec![
        Invariant::holds("conditional score is optimal at every grid point", rep.optimal_everywhere),
        Invariant::at_most("p = f_t h", rep.factorization_residual, 1e-10),
        Invariant::at_most("f_t sums to one on every fiber", rep.fiber_normalization, tol.mass),
    ];
    let mut centering = 0.0f64;
    let mut orth = 0.0f64;
    for p in &rep.points {
        centering = centering.max(p.fiber_centering);
        orth = orth.max(p.decomposition.max_orthogonality);
        for m in &p.members {
            table.push(vec![fmt_f64(p.theta), fmt_f64(p.z[0]), m.name.clone(), fmt_f64(m.j), fmt_f64(m.gap)]);
        }
    }
    invariants.push(Invariant::at_most("E[conditional score | t] = 0", centering, 1e-8));
    invariants.push(Invariant::at_most("remainder orthogonal to regular functions", orth, 1e-6));
    Ok(Outcome { result: to_value(&rep)?, tables: vec![table], invariants })
}

pub fn report_all(r: &Resolved) -> Result<Outcome> {
    let mut parts: Vec<(&str, Outcome)> = vec![("efficiency", efficiency(r)?), ("godambe", godambe(r)?)];
    if r.model.name() == "poisson-pair" {
        parts.push(("conditioning", conditioning_demo(r)?));
    }
    let mut result = serde_json::Map::new();
    let mut tables = Vec::new();
    let mut invariants = Vec::new();
    for (name, o) in parts {
        result.insert(name.to_string(), o.result);
        tables.extend(o.tables.into_iter().map(|mut t| {
            if !t.name.starts_with(name) {
                t.name = format!("{name}_{}", t.name);
            }
            t
        }));
        invariants.extend(o.invariants.into_iter().map(|mut i| {
            i.name = format!("{name}: {}", i.name);
            i
        }));
    }
    if !result.contains_key("conditioning") {
        result.insert("conditioning".into(), Value::Null);
    }
    Ok(Outcome { result: Value::Object(result), tables, invariants })
}
