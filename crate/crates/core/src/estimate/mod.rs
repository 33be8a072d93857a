//! Solving `sum_i psi(x_i; theta) = 0` and Monte-Carlo replication studies.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::efficiency::efficient_score;
use crate::godambe::{godambe_information, InferenceFn};
use crate::linalg::{empirical_covariance, inverse, min_eigenvalue, serialize_matrix, spd_inverse};
use crate::model::{self, DensityModel, Sample, SchemeSpec};
use crate::{fd_step, Error, Result, Tolerances};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Convergence threshold on `||mean psi||` per component; the total is
    /// this times `q`.
    pub tol_root: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { max_iter: 100, max_halvings: 30, tol_root: 1e-8 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Iterate {
    pub theta: Vec<f64>,
    /// `||sum psi|| / n` at `theta`.
    pub residual: f64,
    /// Damping factor of the step that produced this iterate (0 for the start).
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    Newton,
    Bisection,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveTrace {
    pub iterates: Vec<Iterate>,
    pub converged: bool,
    pub method: SolveMethod,
    pub theta_hat: Vec<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub jacobian_at_solution: DMatrix<f64>,
}

impl SolveTrace {
    pub fn residual(&self) -> f64 {
        self.iterates.last().map(|i| i.residual).unwrap_or(f64::INFINITY)
    }

    /// Newton or bisection steps taken, excluding the start and the final
    /// polishing step.
    pub fn steps(&self) -> usize {
        self.iterates.iter().filter(|i| i.step > 0.0).count()
    }
}

struct Objective<'a> {
    psi: &'a InferenceFn,
    sample: &'a Sample,
    z: &'a [f64],
}

impl Objective<'_> {
    fn mean(&self, theta: &[f64]) -> Option<DVector<f64>> {
        let q = self.psi.q();
        let mut acc = vec![0.0; q];
        for x in self.sample.iter() {
            let v = self.psi.eval(x, theta, self.z);
            for (a, b) in acc.iter_mut().zip(&v) {
                *a += b;
            }
        }
        let n = self.sample.len() as f64;
        let m = DVector::from_iterator(q, acc.into_iter().map(|a| a / n));
        m.iter().all(|v| v.is_finite()).then_some(m)
    }

    fn residual(&self, theta: &[f64]) -> f64 {
        self.mean(theta).map(|m| m.norm()).unwrap_or(f64::INFINITY)
    }

    fn jacobian(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        let q = self.psi.q();
        let mut j = DMatrix::zeros(q, theta.len());
        for k in 0..theta.len() {
            let h = fd_step(theta[k]);
            let mut tp = theta.to_vec();
            let mut tm = theta.to_vec();
            tp[k] += h;
            tm[k] -= h;
            let d = (self.mean(&tp)? - self.mean(&tm)?) / (2.0 * h);
            j.set_column(k, &d);
        }
        Some(j)
    }

    fn newton_step(&self, theta: &[f64]) -> Option<DVector<f64>> {
        let m = self.mean(theta)?;
        let j = self.jacobian(theta)?;
        let step = j.lu().solve(&(-m))?;
        step.iter().all(|v| v.is_finite()).then_some(step)
    }
}

fn add(theta: &[f64], step: &DVector<f64>, lambda: f64) -> Vec<f64> {
    theta.iter().zip(step.iter()).map(|(t, s)| t + lambda * s).collect()
}

/// Damped Newton on `mean psi(theta) = 0` from `theta_init`; a scalar
/// problem falls back to bisection on a sign-changing bracket when Newton
/// stalls. Non-convergence is reported in the trace rather than as an error.
pub fn solve(psi: &InferenceFn, sample: &Sample, theta_init: &[f64], z: &[f64], opts: &SolveOptions) -> Result<SolveTrace> {
    if sample.is_empty() {
        return Err(Error::Config("cannot solve on an empty sample".into()));
    }
    if theta_init.len() != psi.q() {
        return Err(Error::Config(format!("{} has {} components but the starting point has {}", psi.name(), psi.q(), theta_init.len())));
    }
    let obj = Objective { psi, sample, z };
    let tol = opts.tol_root * psi.q() as f64;
    let mut theta = theta_init.to_vec();
    let mut res = obj.residual(&theta);
    let mut iterates = vec![Iterate { theta: theta.clone(), residual: res, step: 0.0 }];
    while res.is_finite() && res >= tol && iterates.len() <= opts.max_iter {
        let Some(step) = obj.newton_step(&theta) else { break };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let cand = add(&theta, &step, lambda);
            let r = obj.residual(&cand);
            if r < res {
                theta = cand;
                res = r;
                iterates.push(Iterate { theta: theta.clone(), residual: res, step: lambda });
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let mut method = SolveMethod::Newton;
    if res >= tol && psi.q() == 1 {
        if let Some((t, r, its)) = bisect(&obj, theta_init[0], tol, opts.max_iter * 2) {
            method = SolveMethod::Bisection;
            iterates.extend(its);
            theta = vec![t];
            res = r;
        }
    }
    let converged = res < tol;
    if converged {
        // One full Newton step from the accepted root, kept if it does not
        // make the residual worse.
        if let Some(step) = obj.newton_step(&theta) {
            let cand = add(&theta, &step, 1.0);
            let r = obj.residual(&cand);
            if r <= res {
                theta = cand;
                res = r;
                if let Some(last) = iterates.last_mut() {
                    last.theta = theta.clone();
                    last.residual = res;
                }
            }
        }
    }
    let jacobian_at_solution = obj.jacobian(&theta).unwrap_or_else(|| DMatrix::from_element(psi.q(), psi.q(), f64::NAN));
    Ok(SolveTrace { iterates, converged, method, theta_hat: theta, jacobian_at_solution })
}

/// Expands a bracket around `start` until the mean of `psi` changes sign,
/// then bisects.
fn bisect(obj: &Objective<'_>, start: f64, tol: f64, max_iter: usize) -> Option<(f64, f64, Vec<Iterate>)> {
    let f = |t: f64| obj.mean(&[t]).map(|m| m[0]);
    let f0 = f(start)?;
    let width = 0.1 * start.abs().max(1.0);
    let mut bracket = None;
    'outer: for k in 0..40 {
        let w = width * 2f64.powi(k);
        for other in [start + w, start - w] {
            if let Some(fo) = f(other) {
                if fo.signum() != f0.signum() {
                    bracket = Some(if other > start { (start, other, f0) } else { (other, start, fo) });
                    break 'outer;
                }
            }
        }
    }
    let (mut lo, mut hi, mut flo) = bracket?;
    let mut its = Vec::new();
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        its.push(Iterate { theta: vec![mid], residual: fm.abs(), step: 1.0 });
        if fm.abs() < tol {
            return Some((mid, fm.abs(), its));
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * mid.abs().max(1.0) {
            break;
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McOptions {
    pub solve: SolveOptions,
    /// Starting point is `theta_0 + init_offset`, componentwise.
    pub init_offset: f64,
    pub scheme: SchemeSpec,
    pub min_reps: usize,
    /// Share of failed replications above which the report is invalid.
    pub max_failure_rate: f64,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions { solve: SolveOptions::default(), init_offset: 0.05, scheme: SchemeSpec::default(), min_reps: 100, max_failure_rate: 0.05 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RepResult {
    pub rep: usize,
    pub theta_hat: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    pub inference_fn: String,
    pub model: String,
    pub theta0: Vec<f64>,
    pub z0: Vec<f64>,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    /// Covariance of `sqrt(n) (theta_hat - theta_0)` over converged reps.
    #[serde(serialize_with = "serialize_matrix")]
    pub empirical_cov: DMatrix<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub target_j_inv: DMatrix<f64>,
    /// Inverse efficient information; absent when it is singular.
    #[serde(serialize_with = "crate::linalg::serialize_opt_matrix")]
    pub semiparametric_bound: Option<DMatrix<f64>>,
    /// Frobenius distance to the target over the target's norm.
    pub relative_deviation_target: f64,
    /// Diagonal ratios empirical / bound.
    pub ratio_to_bound: Option<Vec<f64>>,
    pub empirical_cov_min_eigenvalue: f64,
    pub failures: usize,
    pub valid: bool,
    pub median_abs_error: Vec<f64>,
    pub replications: Vec<RepResult>,
}

/// Replicates `solve` on fresh samples. Replication `r` draws from the seed
/// `derive_seed(seed, r)`, so the report is the same for any thread count.
#[allow(clippy::too_many_arguments)]
pub fn mc_study(
    psi: &InferenceFn,
    model: &dyn DensityModel,
    theta0: &[f64],
    z0: &[f64],
    n: usize,
    reps: usize,
    seed: u64,
    opts: &McOptions,
) -> Result<McReport> {
    if reps < opts.min_reps {
        return Err(Error::Config(format!("need at least {} replications, got {reps}", opts.min_reps)));
    }
    if n == 0 {
        return Err(Error::Config("sample size must be positive".into()));
    }
    let scheme = model::build_scheme(model, &[(theta0.to_vec(), z0.to_vec())], &opts.scheme)?;
    let tol = Tolerances::default();
    let g = godambe_information(psi, model, theta0, z0, &scheme, None, &tol)?;
    if !g.regularity.passed() {
        return Err(Error::Precondition(format!("{} is not regular at the true parameter: {:?}", psi.name(), g.regularity)));
    }
    let target_j_inv = inverse(&g.j, "Godambe information")?;
    let eff = efficient_score(model, theta0, z0, &scheme)?;
    let semiparametric_bound = if eff.singular { None } else { spd_inverse(&eff.j_e, "efficient information").ok() };

    let start: Vec<f64> = theta0.iter().map(|t| t + opts.init_offset).collect();
    let replications = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<RepResult> {
            let s = model::sample(model, theta0, z0, n, model::derive_seed(seed, rep as u64))?;
            let tr = solve(psi, &s, &start, z0, &opts.solve)?;
            Ok(RepResult { rep, converged: tr.converged, theta_hat: tr.theta_hat })
        })
        .collect::<Result<Vec<_>>>()?;

    let ok: Vec<&RepResult> = replications.iter().filter(|r| r.converged).collect();
    let failures = reps - ok.len();
    let sq = (n as f64).sqrt();
    let rows: Vec<Vec<f64>> = ok.iter().map(|r| r.theta_hat.iter().zip(theta0).map(|(a, b)| sq * (a - b)).collect()).collect();
    let q = theta0.len();
    let empirical_cov = if rows.len() < 2 { DMatrix::from_element(q, q, f64::NAN) } else { empirical_covariance(&rows, None) };
    let relative_deviation_target = (&empirical_cov - &target_j_inv).norm() / target_j_inv.norm();
    let ratio_to_bound = semiparametric_bound.as_ref().map(|b| (0..b.nrows()).map(|i| empirical_cov[(i, i)] / b[(i, i)]).collect());
    let median_abs_error = (0..q)
        .map(|k| {
            let mut e: Vec<f64> = ok.iter().map(|r| (r.theta_hat[k] - theta0[k]).abs()).collect();
            e.sort_by(f64::total_cmp);
            if e.is_empty() {
                f64::NAN
            } else if e.len() % 2 == 1 {
                e[e.len() / 2]
            } else {
                0.5 * (e[e.len() / 2 - 1] + e[e.len() / 2])
            }
        })
        .collect();
    Ok(McReport {
        inference_fn: psi.name().to_string(),
        model: model.name().to_string(),
        theta0: theta0.to_vec(),
        z0: z0.to_vec(),
        n,
        reps,
        seed,
        empirical_cov_min_eigenvalue: min_eigenvalue(&empirical_cov),
        empirical_cov,
        target_j_inv,
        semiparametric_bound,
        relative_deviation_target,
        ratio_to_bound,
        failures,
        valid: (failures as f64) <= opts.max_failure_rate * reps as f64,
        median_abs_error,
        replications,
    })
}
