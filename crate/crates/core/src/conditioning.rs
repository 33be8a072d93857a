//! Optimal estimating functions from a likelihood factorisation
//! `p(x; theta, z) = f_t(x; theta) h(t(x); theta, z)`: the conditional score
//! `d/dtheta log f_t` beats every regular estimating function when the family
//! of laws of `t` is complete.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::godambe::{self, equivalence_fit, godambe_information, EquivalenceFit, InferenceFn};
use crate::measure::{inner_product, Density, IntegrationScheme, L2Vec};
use crate::model::{self, ModelRef, PoissonPair, SchemeSpec};
use crate::{fd_step, Error, Result, Tolerances};

type Statistic = dyn Fn(&[f64]) -> f64 + Send + Sync;
type LogConditional = dyn Fn(&[f64], f64) -> f64 + Send + Sync;
type LogMarginal = dyn Fn(f64, f64, &[f64]) -> f64 + Send + Sync;

/// A scalar-parameter model together with a factorisation of its density.
#[derive(Clone)]
pub struct FactorizedModel {
    base: ModelRef,
    statistic: Arc<Statistic>,
    log_f_t: Arc<LogConditional>,
    log_h: Arc<LogMarginal>,
    score: Option<Arc<LogConditional>>,
    completeness_declared: bool,
}

impl fmt::Debug for FactorizedModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FactorizedModel").field("base", &self.base.name()).field("completeness_declared", &self.completeness_declared).finish()
    }
}

fn ln_choose(n: f64, k: f64) -> f64 {
    crate::model::ln_factorial(n) - crate::model::ln_factorial(k) - crate::model::ln_factorial(n - k)
}

impl FactorizedModel {
    /// `log_f_t(x, theta)` is the conditional log density of `x` given
    /// `t(x)`, `log_h(t, theta, z)` the log density of `t`.
    pub fn new(
        base: ModelRef,
        statistic: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        log_f_t: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
        log_h: impl Fn(f64, f64, &[f64]) -> f64 + Send + Sync + 'static,
        completeness_declared: bool,
    ) -> Result<Self> {
        if base.theta_dim() != 1 {
            return Err(Error::Config("conditioning needs a scalar interest parameter".into()));
        }
        Ok(FactorizedModel { base, statistic: Arc::new(statistic), log_f_t: Arc::new(log_f_t), log_h: Arc::new(log_h), score: None, completeness_declared })
    }

    /// Analytic `d/dtheta log f_t`; finite differences are used otherwise.
    pub fn with_score(mut self, score: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        self.score = Some(Arc::new(score));
        self
    }

    /// Poisson pair: given `t = x1 + x2`, `x2` is Binomial(t, theta/(1+theta))
    /// and `t` is Poisson(z(1+theta)). The Poisson family in its mean is
    /// complete, which is declared here rather than checked.
    pub fn poisson_pair() -> Self {
        let pi = |theta: f64| theta / (1.0 + theta);
        FactorizedModel::new(
            Arc::new(PoissonPair),
            |x| x[0] + x[1],
            move |x, theta| {
                let t = x[0] + x[1];
                ln_choose(t, x[1]) + x[1] * pi(theta).ln() + x[0] * (1.0 - pi(theta)).ln()
            },
            |t, theta, z| {
                let mu = z[0] * (1.0 + theta);
                -mu + t * mu.ln() - crate::model::ln_factorial(t)
            },
            true,
        )
        .expect("scalar parameter")
        .with_score(|x, theta| x[1] / theta - (x[0] + x[1]) / (1.0 + theta))
    }

    pub fn base(&self) -> &ModelRef {
        &self.base
    }

    pub fn completeness_declared(&self) -> bool {
        self.completeness_declared
    }

    pub fn statistic(&self, x: &[f64]) -> f64 {
        (self.statistic)(x)
    }

    pub fn log_f_t(&self, x: &[f64], theta: f64) -> f64 {
        (self.log_f_t)(x, theta)
    }

    pub fn log_h(&self, t: f64, theta: f64, z: &[f64]) -> f64 {
        (self.log_h)(t, theta, z)
    }

    /// `d/dtheta log f_t(x; theta)`.
    pub fn conditional_score_at(&self, x: &[f64], theta: f64) -> f64 {
        match &self.score {
            Some(s) => s(x, theta),
            None => fd_log_f_t(self, x, theta),
        }
    }
}

fn fd_log_f_t(fm: &FactorizedModel, x: &[f64], theta: f64) -> f64 {
    let h = fd_step(theta);
    (fm.log_f_t(x, theta + h) - fm.log_f_t(x, theta - h)) / (2.0 * h)
}

/// Largest `|log p - log f_t - log h|` over the scheme.
pub fn factorization_residual(fm: &FactorizedModel, theta: f64, z: &[f64], scheme: &IntegrationScheme) -> f64 {
    scheme
        .nodes()
        .map(|x| {
            let lp = fm.base.log_density(x, &[theta], z);
            let lf = fm.log_f_t(x, theta) + fm.log_h(fm.statistic(x), theta, z);
            (lp - lf).abs()
        })
        .fold(0.0, f64::max)
}

/// Node indices grouped by the value of the statistic, in increasing order.
fn fibers(fm: &FactorizedModel, scheme: &IntegrationScheme) -> Vec<(f64, Vec<usize>)> {
    let mut idx: Vec<(f64, usize)> = scheme.nodes().enumerate().map(|(i, x)| (fm.statistic(x), i)).collect();
    idx.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<(f64, Vec<usize>)> = Vec::new();
    for (t, i) in idx {
        match out.last_mut() {
            Some((tt, v)) if *tt == t => v.push(i),
            _ => out.push((t, vec![i])),
        }
    }
    out
}

fn require_lattice(scheme: &IntegrationScheme) -> Result<()> {
    match scheme.kind() {
        crate::measure::SchemeKind::Lattice => Ok(()),
        k => Err(Error::Model(format!("fiber sums need a lattice scheme, got {k:?}"))),
    }
}

/// Largest `|sum over a fiber of f_t - 1|`.
pub fn fiber_normalization(fm: &FactorizedModel, theta: f64, scheme: &IntegrationScheme) -> Result<f64> {
    require_lattice(scheme)?;
    let w = scheme.weights();
    let nodes: Vec<&[f64]> = scheme.nodes().collect();
    Ok(fibers(fm, scheme)
        .iter()
        .map(|(_, ids)| (ids.iter().map(|&i| w[i] * fm.log_f_t(nodes[i], theta).exp()).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max))
}

/// Largest `|E[psi | t]|` over the fibers of the scheme.
pub fn fiber_centering(psi: &InferenceFn, fm: &FactorizedModel, theta: f64, scheme: &IntegrationScheme) -> Result<f64> {
    require_lattice(scheme)?;
    let w = scheme.weights();
    let nodes: Vec<&[f64]> = scheme.nodes().collect();
    let mut worst = 0.0f64;
    for (_, ids) in fibers(fm, scheme) {
        let (mut num, mut den) = (0.0, 0.0);
        for &i in &ids {
            let f = w[i] * fm.log_f_t(nodes[i], theta).exp();
            num += f * psi.eval(nodes[i], &[theta], &[])[0];
            den += f;
        }
        worst = worst.max((num / den).abs());
    }
    Ok(worst)
}

/// The conditional score as an estimating function, after checking that
/// `f_t` is normalised on every fiber at `theta_check`.
pub fn conditional_score(fm: &FactorizedModel, theta_check: f64, scheme: &IntegrationScheme, tol: &Tolerances) -> Result<InferenceFn> {
    let err = fiber_normalization(fm, theta_check, scheme)?;
    if err > tol.mass {
        return Err(Error::Model(format!("conditional density does not sum to one on a fiber (error {err:.2e})")));
    }
    let fm = fm.clone();
    Ok(InferenceFn::scalar("conditional score", move |x, t| fm.conditional_score_at(x, t)))
}

#[derive(Debug, Clone, Serialize)]
pub struct Orthogonality {
    pub name: String,
    pub value: f64,
}

/// `psi = A l + R` with `A = 1` and `R = -d/dtheta log h(t)`.
#[derive(Debug, Clone, Serialize)]
pub struct DecompositionReport {
    pub a: f64,
    /// `max |(psi - l) + d/dtheta log h|` over the scheme.
    pub r_error: f64,
    /// Largest spread of `R` within one fiber; zero when `R` depends on `x`
    /// only through `t`.
    pub r_fiber_spread: f64,
    /// `<R, phi>` for each regular member of the battery.
    pub orthogonality: Vec<Orthogonality>,
    pub max_orthogonality: f64,
    /// `E[psi l] / E[psi']`, which is -1 for an unbiased `psi`.
    pub score_ratio: f64,
}

pub fn decomposition_residual(
    fm: &FactorizedModel,
    theta: f64,
    z: &[f64],
    scheme: &Arc<IntegrationScheme>,
    battery: &[InferenceFn],
    tol: &Tolerances,
) -> Result<DecompositionReport> {
    let model = fm.base.as_ref();
    let d = model::density(model, &[theta], z, scheme)?;
    let psi = conditional_score(fm, theta, scheme, tol)?;
    let psi_tab = psi.tabulate(&[theta], z, &d)?.remove(0);
    let l_raw = L2Vec::new(scheme.nodes().map(|x| model::raw_score_at(model, x, &[theta], z)[0]).collect(), d.clone())?;
    let r = psi_tab.sub(&l_raw)?;
    let h = fd_step(theta);
    let mut r_error = 0.0f64;
    for (i, x) in scheme.nodes().enumerate() {
        let t = fm.statistic(x);
        let dlogh = (fm.log_h(t, theta + h, z) - fm.log_h(t, theta - h, z)) / (2.0 * h);
        r_error = r_error.max((r.values()[i] + dlogh).abs());
    }
    let r_fiber_spread = fibers(fm, scheme)
        .iter()
        .map(|(_, ids)| {
            let v: Vec<f64> = ids.iter().map(|&i| r.values()[i]).collect();
            v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    let mut orthogonality = Vec::new();
    for phi in battery.iter().filter(|p| !p.depends_on_nuisance()) {
        let reg = godambe::check_regularity(phi, model, &[theta], z, scheme, tol)?;
        if !reg.passed() {
            continue;
        }
        let tab = phi.tabulate(&[theta], z, &d)?.remove(0);
        orthogonality.push(Orthogonality { name: phi.name().to_string(), value: inner_product(&r, &tab)? });
    }
    let max_orthogonality = orthogonality.iter().map(|o| o.value.abs()).fold(0.0, f64::max);
    let dpsi = psi.sensitivity(&[theta], z, &d)?[(0, 0)];
    let score_ratio = inner_product(&psi_tab, &l_raw)? / dpsi;
    Ok(DecompositionReport { a: 1.0, r_error, r_fiber_spread, orthogonality, max_orthogonality, score_ratio })
}

#[derive(Debug, Clone, Serialize)]
pub struct MemberRow {
    pub name: String,
    pub regular: bool,
    pub depends_on_nuisance: bool,
    pub j: f64,
    /// `J(conditional score) - J(member)`.
    pub gap: f64,
    /// `E[phi~ psi~] - E[psi~^2]` with `~` the standardised version
    /// `phi / E[phi']`; zero for every regular member.
    pub standardized_cross: f64,
    /// Residual of `E[phi~^2] = E[(phi~ - psi~)^2] + 2E[phi~ psi~] - E[psi~^2]`.
    pub expansion_residual: f64,
    /// Fit of the conditional score against the member, reported when the
    /// informations agree.
    pub equivalence: Option<EquivalenceFit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridPoint {
    pub theta: f64,
    pub z: Vec<f64>,
    pub j_conditional: f64,
    pub fiber_centering: f64,
    pub decomposition: DecompositionReport,
    pub members: Vec<MemberRow>,
    /// Regular z-free member with the largest information.
    pub top: String,
    /// The conditional score is at least as informative as every regular
    /// z-free member, and every member that ties is equivalent to it.
    pub optimal: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditioningReport {
    pub model: String,
    pub completeness_declared: bool,
    pub factorization_residual: f64,
    pub fiber_normalization: f64,
    pub points: Vec<GridPoint>,
    pub optimal_everywhere: bool,
}

fn standardized(v: &L2Vec, dv: f64) -> L2Vec {
    v.scale(1.0 / dv)
}

/// Compares the conditional score with every battery member at every grid
/// point. The claim rests on the declared completeness of the law of `t`.
pub fn conditioning_optimality_demo(
    fm: &FactorizedModel,
    theta_grid: &[f64],
    z_grid: &[Vec<f64>],
    battery: &[InferenceFn],
    spec: &SchemeSpec,
    tol: &Tolerances,
) -> Result<ConditioningReport> {
    if !fm.completeness_declared() {
        return Err(Error::Precondition("the demonstration assumes a complete family for the statistic; none is declared".into()));
    }
    let model = fm.base.as_ref();
    let pts: Vec<(Vec<f64>, Vec<f64>)> = theta_grid.iter().flat_map(|t| z_grid.iter().map(move |z| (vec![*t], z.clone()))).collect();
    let scheme = model::build_scheme(model, &pts, spec)?;
    let mut fact = 0.0f64;
    let mut norm = 0.0f64;
    for &t in theta_grid {
        norm = norm.max(fiber_normalization(fm, t, &scheme)?);
        for z in z_grid {
            fact = fact.max(factorization_residual(fm, t, z, &scheme));
        }
    }
    use rayon::prelude::*;
    let points = pts
        .par_iter()
        .map(|(theta, z)| demo_point(fm, theta[0], z, &scheme, battery, tol))
        .collect::<Result<Vec<_>>>()?;
    let optimal_everywhere = points.iter().all(|p| p.optimal);
    Ok(ConditioningReport { model: model.name().to_string(), completeness_declared: true, factorization_residual: fact, fiber_normalization: norm, points, optimal_everywhere })
}

fn demo_point(fm: &FactorizedModel, theta: f64, z: &[f64], scheme: &Arc<IntegrationScheme>, battery: &[InferenceFn], tol: &Tolerances) -> Result<GridPoint> {
    let model = fm.base.as_ref();
    let d: Density = model::density(model, &[theta], z, scheme)?;
    let psi = conditional_score(fm, theta, scheme, tol)?;
    let gp = godambe_information(&psi, model, &[theta], z, scheme, None, tol)?;
    let j_conditional = gp.j[(0, 0)];
    let psi_tab = psi.tabulate(&[theta], z, &d)?;
    let psi_std = standardized(&psi_tab[0], gp.s[(0, 0)]);
    let psi_sq = psi_std.norm_sq();

    let mut members = Vec::new();
    let mut optimal = true;
    let mut top = (psi.name().to_string(), j_conditional);
    for phi in battery {
        let g = godambe_information(phi, model, &[theta], z, scheme, None, tol)?;
        let tab = phi.tabulate(&[theta], z, &d)?;
        let phi_std = standardized(&tab[0], g.s[(0, 0)]);
        let cross = inner_product(&phi_std, &psi_std)?;
        let lhs = phi_std.norm_sq();
        let rhs = phi_std.sub(&psi_std)?.norm_sq() + 2.0 * cross - psi_sq;
        let j = g.j[(0, 0)];
        let regular = g.regularity.passed();
        let claim = regular && !phi.depends_on_nuisance();
        let ties = (j - j_conditional).abs() <= 1e-6 * j_conditional.abs().max(1.0);
        let equivalence = if ties { Some(equivalence_fit(&psi_tab, &tab)?) } else { None };
        if claim {
            if j > j_conditional + 1e-8 * j_conditional.abs().max(1.0) {
                optimal = false;
            }
            if let Some(fit) = &equivalence {
                if !(fit.residual < tol.equiv && fit.full_rank) {
                    optimal = false;
                }
            }
            if j > top.1 + 1e-8 * top.1.abs().max(1.0) {
                top = (phi.name().to_string(), j);
            }
        }
        members.push(MemberRow {
            name: phi.name().to_string(),
            regular,
            depends_on_nuisance: phi.depends_on_nuisance(),
            j,
            gap: j_conditional - j,
            standardized_cross: cross - psi_sq,
            expansion_residual: (lhs - rhs).abs(),
            equivalence,
        });
    }
    Ok(GridPoint {
        theta,
        z: z.to_vec(),
        j_conditional,
        fiber_centering: fiber_centering(&psi, fm, theta, scheme)?,
        decomposition: decomposition_residual(fm, theta, z, scheme, battery, tol)?,
        members,
        top: top.0,
        optimal,
    })
}
