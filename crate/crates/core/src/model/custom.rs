use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::expr::Expr;
use super::{log_grid, DensityModel, NuisanceKind, Support};
use crate::measure::quadrature::composite_gauss_legendre;
use crate::{fd_step, Error, Result};

/// Support of a custom model, fixed independently of the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum CustomSupport {
    Interval { lo: f64, hi: f64 },
    Lattice { lo: i64, hi: i64 },
    Simplex { max_sum: u64 },
}

/// Declarative description of a model, typically read from JSON.
///
/// `density` must be a normalised density over `support`. When `score` is
/// absent the score is taken by central differences in `theta`; when
/// `nuisance` is absent the dictionary is the finite-difference score in each
/// coordinate of `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomModelSpec {
    pub name: String,
    pub theta_dim: usize,
    pub z_dim: usize,
    #[serde(default = "one")]
    pub sample_dim: usize,
    pub support: CustomSupport,
    pub density: String,
    #[serde(default)]
    pub score: Option<Vec<String>>,
    #[serde(default)]
    pub nuisance: Option<Vec<String>>,
    #[serde(default)]
    pub default_theta: Option<Vec<f64>>,
    #[serde(default)]
    pub default_z: Option<Vec<f64>>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone)]
pub struct CustomModel {
    spec: CustomModelSpec,
    density: Expr,
    score: Option<Vec<Expr>>,
    nuisance: Option<Vec<Expr>>,
}

impl CustomModel {
    pub fn new(spec: CustomModelSpec) -> Result<Self> {
        if spec.theta_dim == 0 {
            return Err(Error::Config("custom model needs theta_dim >= 1".into()));
        }
        let dims_ok = match spec.support {
            CustomSupport::Simplex { .. } => spec.sample_dim == 2,
            _ => spec.sample_dim == 1,
        };
        if !dims_ok {
            return Err(Error::Config(format!(
                "sample_dim {} does not match support {:?}",
                spec.sample_dim, spec.support
            )));
        }
        if let CustomSupport::Interval { lo, hi } = spec.support {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!("bad interval [{lo}, {hi}]")));
            }
        }
        let parse = |s: &String| -> Result<Expr> {
            let e = Expr::parse(s)?;
            e.check_arity(spec.sample_dim, spec.theta_dim, spec.z_dim)?;
            Ok(e)
        };
        let density = parse(&spec.density)?;
        let score = spec.score.as_ref().map(|v| v.iter().map(parse).collect::<Result<Vec<_>>>()).transpose()?;
        if let Some(s) = &score {
            if s.len() != spec.theta_dim {
                return Err(Error::Config(format!("score has {} components, theta_dim is {}", s.len(), spec.theta_dim)));
            }
        }
        let nuisance = spec.nuisance.as_ref().map(|v| v.iter().map(parse).collect::<Result<Vec<_>>>()).transpose()?;
        if nuisance.is_none() && spec.z_dim == 0 {
            return Err(Error::Config("custom model without z needs an explicit nuisance dictionary".into()));
        }
        Ok(CustomModel { spec, density, score, nuisance })
    }

    pub fn spec(&self) -> &CustomModelSpec {
        &self.spec
    }

    fn support_points(&self) -> Vec<Vec<f64>> {
        match self.spec.support {
            CustomSupport::Lattice { lo, hi } => (lo..=hi).map(|k| vec![k as f64]).collect(),
            CustomSupport::Simplex { max_sum } => {
                let mut v = Vec::new();
                for t in 0..=max_sum {
                    for x2 in 0..=t {
                        v.push(vec![(t - x2) as f64, x2 as f64]);
                    }
                }
                v
            }
            CustomSupport::Interval { .. } => Vec::new(),
        }
    }
}

impl DensityModel for CustomModel {
    fn name(&self) -> &str {
        &self.spec.name
    }

    fn theta_dim(&self) -> usize {
        self.spec.theta_dim
    }

    fn nuisance_kind(&self) -> NuisanceKind {
        if self.spec.z_dim == 1 {
            NuisanceKind::Scalar
        } else {
            NuisanceKind::Vector
        }
    }

    fn sample_dim(&self) -> usize {
        self.spec.sample_dim
    }

    fn validate(&self, _theta: &[f64], z: &[f64]) -> Result<()> {
        if z.len() != self.spec.z_dim {
            return Err(Error::Config(format!("model {} expects z of length {}, got {}", self.spec.name, self.spec.z_dim, z.len())));
        }
        Ok(())
    }

    fn log_density(&self, x: &[f64], theta: &[f64], z: &[f64]) -> f64 {
        self.density.eval(x, theta, z).ln()
    }

    fn score_at(&self, x: &[f64], theta: &[f64], z: &[f64]) -> Option<Vec<f64>> {
        self.score.as_ref().map(|s| s.iter().map(|e| e.eval(x, theta, z)).collect())
    }

    fn dictionary_len(&self, z: &[f64]) -> usize {
        self.nuisance.as_ref().map(|n| n.len()).unwrap_or(z.len())
    }

    fn dictionary_at(&self, x: &[f64], theta: &[f64], z: &[f64]) -> Vec<f64> {
        if let Some(n) = &self.nuisance {
            return n.iter().map(|e| e.eval(x, theta, z)).collect();
        }
        let mut zz = z.to_vec();
        (0..z.len())
            .map(|k| {
                let h = fd_step(z[k]);
                zz[k] = z[k] + h;
                let up = self.log_density(x, theta, &zz);
                zz[k] = z[k] - h;
                let down = self.log_density(x, theta, &zz);
                zz[k] = z[k];
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    fn support(&self, _theta: &[f64], _z: &[f64], _tail_mass: f64) -> Result<Support> {
        Ok(match self.spec.support {
            CustomSupport::Interval { lo, hi } => Support::Interval { lo, hi },
            CustomSupport::Lattice { lo, hi } => Support::Lattice { lo, hi },
            CustomSupport::Simplex { max_sum } => Support::Simplex { max_sum },
        })
    }

    // Lattice supports are sampled exactly by inverting the cumulative mass.
    // Intervals use a piecewise-constant approximation on 4096 cells, each
    // cell's mass taken from a 4-point Gauss rule.
    fn sample_into(&self, theta: &[f64], z: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let (points, masses): (Vec<Vec<f64>>, Vec<f64>) = match self.spec.support {
            CustomSupport::Interval { lo, hi } => {
                let cells = 4096;
                let (x, w) = composite_gauss_legendre(lo, hi, cells, 4);
                let width = (hi - lo) / cells as f64;
                let mut pts = Vec::with_capacity(cells);
                let mut ms = Vec::with_capacity(cells);
                for c in 0..cells {
                    let m: f64 = (0..4).map(|k| w[4 * c + k] * self.density.eval(&[x[4 * c + k]], theta, z)).sum();
                    pts.push(vec![lo + c as f64 * width, width]);
                    ms.push(m.max(0.0));
                }
                (pts, ms)
            }
            _ => {
                let pts = self.support_points();
                let ms = pts.iter().map(|p| self.density.eval(p, theta, z).max(0.0)).collect();
                (pts, ms)
            }
        };
        let total: f64 = masses.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::Domain(format!("density of {} has no mass on its support", self.spec.name)));
        }
        let mut cdf = Vec::with_capacity(masses.len());
        let mut acc = 0.0;
        for m in &masses {
            acc += m / total;
            cdf.push(acc);
        }
        let mut out = Vec::with_capacity(n * self.spec.sample_dim);
        for _ in 0..n {
            let u: f64 = rng.gen();
            let i = cdf.partition_point(|c| *c < u).min(cdf.len() - 1);
            match self.spec.support {
                CustomSupport::Interval { .. } => {
                    let v: f64 = rng.gen();
                    out.push(points[i][0] + v * points[i][1]);
                }
                _ => out.extend_from_slice(&points[i]),
            }
        }
        Ok(out)
    }

    fn nuisance_grid(&self, z: &[f64]) -> Vec<Vec<f64>> {
        if z.iter().all(|v| *v > 0.0) {
            log_grid(z)
        } else {
            [-1.0, -0.5, 0.0, 0.5, 1.0].iter().map(|d| z.iter().map(|v| v + d).collect()).collect()
        }
    }

    fn default_point(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.spec.default_theta.clone().unwrap_or_else(|| vec![0.0; self.spec.theta_dim]),
            self.spec.default_z.clone().unwrap_or_else(|| vec![1.0; self.spec.z_dim]),
        )
    }
}
