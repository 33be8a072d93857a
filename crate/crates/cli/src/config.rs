//! The JSON run configuration and its merge with command-line flags.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use semieff::efficiency::AmbientSpec;
use semieff::estimate::{McOptions, SolveOptions};
use semieff::godambe::{battery_for, InferenceFn};
use semieff::model::expr::Expr;
use semieff::model::{model_by_name, CustomModel, CustomModelSpec, DensityModel, ModelRef, SchemeSpec};
use semieff::{Error, Result, Tolerances};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelChoice {
    Name(String),
    Custom(CustomModelSpec),
}

/// An estimating function named from the model's battery, or written out as
/// one expression per component in the model expression language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PsiChoice {
    Name(String),
    Expr {
        #[serde(default)]
        name: Option<String>,
        expr: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathConfig {
    /// Direction in theta; defaults to the first coordinate.
    pub direction: Option<Vec<f64>>,
    /// Multiplier on the claimed tangent; 1 checks the true score.
    pub tangent_scale: f64,
    pub k_min: u32,
    pub k_max: u32,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig { direction: None, tangent_scale: 1.0, k_min: 3, k_max: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradientConfig {
    /// Raw moment `E[x^order]` of the first coordinate.
    pub order: i32,
}

impl Default for GradientConfig {
    fn default() -> Self {
        GradientConfig { order: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GodambeConfig {
    /// Defaults to the model's battery.
    pub candidates: Option<Vec<PsiChoice>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    pub inference_fn: Option<PsiChoice>,
    /// Sample size when the sample is drawn from the model.
    pub n: usize,
    pub theta_init: Option<Vec<f64>>,
    /// CSV file with one observation per row; a header row is optional.
    pub data: Option<PathBuf>,
    pub options: SolveOptions,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig { inference_fn: None, n: 1000, theta_init: None, data: None, options: SolveOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub inference_fn: Option<PsiChoice>,
    pub n: usize,
    pub reps: usize,
    pub options: McOptions,
    /// Also write one CSV row per replication.
    pub dump_replications: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { inference_fn: None, n: 2000, reps: 1000, options: McOptions::default(), dump_replications: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConditioningConfig {
    pub theta_grid: Option<Vec<f64>>,
    pub z_grid: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: Option<ModelChoice>,
    pub theta: Option<Vec<f64>>,
    pub z: Option<Vec<f64>>,
    /// Nuisance values for the efficiency and Godambe computations.
    pub z_grid: Option<Vec<Vec<f64>>>,
    pub seed: Option<u64>,
    pub scheme: SchemeSpec,
    pub tolerances: Tolerances,
    pub ambient: AmbientSpec,
    pub path: PathConfig,
    pub gradient: GradientConfig,
    pub godambe: GodambeConfig,
    pub solve: SolveConfig,
    pub mc: McConfig,
    pub conditioning: ConditioningConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// A configuration with every default filled in.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub model: ModelRef,
    pub theta: Vec<f64>,
    pub z: Vec<f64>,
    pub z_grid: Vec<Vec<f64>>,
}

impl Resolved {
    pub fn new(mut config: RunConfig) -> Result<Self> {
        config.tolerances.validate()?;
        let model: ModelRef = match config.model.clone().unwrap_or_else(|| ModelChoice::Name("normal-mean".into())) {
            ModelChoice::Name(n) => model_by_name(&n).ok_or_else(|| Error::Config(format!("unknown model `{n}`")))?,
            ModelChoice::Custom(spec) => Arc::new(CustomModel::new(spec)?),
        };
        let (t0, z0) = model.default_point();
        let theta = config.theta.clone().unwrap_or(t0);
        let z = config.z.clone().unwrap_or(z0);
        if theta.len() != model.theta_dim() {
            return Err(Error::Config(format!("theta has {} entries, {} needs {}", theta.len(), model.name(), model.theta_dim())));
        }
        model.validate(&theta, &z)?;
        let z_grid = config.z_grid.clone().unwrap_or_else(|| model.nuisance_grid(&z));
        for zs in &z_grid {
            model.validate(&theta, zs)?;
        }
        config.theta = Some(theta.clone());
        config.z = Some(z.clone());
        config.z_grid = Some(z_grid.clone());
        Ok(Resolved { config, model, theta, z, z_grid })
    }

    pub fn seed(&self, what: &str) -> Result<u64> {
        self.config.seed.ok_or_else(|| Error::Config(format!("`seed` is required for {what}; pass --seed N or set \"seed\" in the config")))
    }

    /// The named battery member, an expression, or the battery's first
    /// member when nothing is chosen.
    pub fn inference_fn(&self, choice: Option<&PsiChoice>) -> Result<InferenceFn> {
        let battery = self.battery();
        match choice {
            None => Ok(battery.into_iter().find(|p| !p.depends_on_nuisance()).unwrap_or_else(|| InferenceFn::score_of(self.model.clone()))),
            Some(c) => psi_from_choice(c, &battery, self.model.as_ref()),
        }
    }

    pub fn battery(&self) -> Vec<InferenceFn> {
        battery_for(self.model.clone())
    }
}

pub fn psi_from_choice(choice: &PsiChoice, battery: &[InferenceFn], model: &dyn DensityModel) -> Result<InferenceFn> {
    match choice {
        PsiChoice::Name(n) => battery.iter().find(|p| p.name() == n).cloned().ok_or_else(|| {
            let names: Vec<&str> = battery.iter().map(|p| p.name()).collect();
            Error::Config(format!("unknown inference function `{n}`; available: {}", names.join(", ")))
        }),
        PsiChoice::Expr { name, expr } => {
            if expr.len() != model.theta_dim() {
                return Err(Error::Config(format!("inference function needs {} expressions, got {}", model.theta_dim(), expr.len())));
            }
            let parsed = expr.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>>>()?;
            for e in &parsed {
                e.check_arity(model.sample_dim(), model.theta_dim(), usize::MAX)?;
            }
            let uses_z = parsed.iter().any(|e| e.arity().2 > 0);
            let label = name.clone().unwrap_or_else(|| expr.join("; "));
            let q = parsed.len();
            let f = move |x: &[f64], t: &[f64], z: &[f64]| parsed.iter().map(|e| e.eval(x, t, z)).collect();
            Ok(if uses_z { InferenceFn::with_nuisance(label, q, f) } else { InferenceFn::new(label, q, move |x, t| f(x, t, &[])) })
        }
    }
}
