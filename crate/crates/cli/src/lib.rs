//! The `semieff` command-line tool.
//!
//! Exit status: 0 when every invariant holds, 1 for configuration and domain
//! errors (nothing is written), 2 for numerical failures or failed
//! invariants (the report is still written).

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use semieff::{Error, Result};

use config::{ModelChoice, Resolved, RunConfig};
use output::{pretty, report_document, to_value, write_atomic, Outcome};

#[derive(Debug, Parser)]
#[command(name = "semieff", version, about = "Semiparametric efficiency and estimating-function diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Builtin model name: normal-mean, poisson-pair or symmetric-location.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Comma-separated parameter of interest.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    pub theta: Option<Vec<f64>>,
    /// Comma-separated nuisance parameter.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    pub z: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Remainder norms and convergence verdicts along a parametric path.
    CheckPath,
    /// Checks the canonical gradient of a raw moment.
    Gradient,
    /// Efficient and information scores, their information and attainability.
    Efficiency,
    /// Godambe information and ranking of the inference-function battery.
    Godambe,
    /// Solves the estimating equation on one sample.
    Solve,
    /// Monte Carlo study of the root's sampling covariance.
    Mc,
    /// Optimality of the conditional score in a factorised model.
    ConditioningDemo,
    /// Efficiency, Godambe and (when available) conditioning in one report.
    ReportAll,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::CheckPath => "check-path",
            Command::Gradient => "gradient",
            Command::Efficiency => "efficiency",
            Command::Godambe => "godambe",
            Command::Solve => "solve",
            Command::Mc => "mc",
            Command::ConditioningDemo => "conditioning-demo",
            Command::ReportAll => "report-all",
        }
    }
}

fn resolve(cli: &Cli) -> Result<Resolved> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = &cli.model {
        if cfg.model.as_ref() != Some(&ModelChoice::Name(m.clone())) {
            // A different model makes configured parameter values meaningless.
            if cfg.model.is_some() {
                cfg.theta = None;
                cfg.z = None;
                cfg.z_grid = None;
            }
            cfg.model = Some(ModelChoice::Name(m.clone()));
        }
    }
    if let Some(t) = &cli.theta {
        cfg.theta = Some(t.clone());
    }
    if let Some(z) = &cli.z {
        if cfg.z.as_ref() != Some(z) {
            cfg.z_grid = None;
        }
        cfg.z = Some(z.clone());
    }
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    Resolved::new(cfg)
}

fn execute(command: Command, r: &Resolved) -> Result<Outcome> {
    match command {
        Command::CheckPath => commands::check_path(r),
        Command::Gradient => commands::gradient(r),
        Command::Efficiency => commands::efficiency(r),
        Command::Godambe => commands::godambe(r),
        Command::Solve => commands::solve_cmd(r),
        Command::Mc => commands::mc(r),
        Command::ConditioningDemo => commands::conditioning_demo(r),
        Command::ReportAll => commands::report_all(r),
    }
}

fn is_user_error(e: &Error) -> bool {
    matches!(e, Error::Config(_) | Error::Domain(_))
}

fn write_outcome(out: &Path, command: Command, config: &serde_json::Value, outcome: &Outcome) -> Result<()> {
    for t in &outcome.tables {
        write_atomic(out, &t.name, &t.to_bytes()?)?;
    }
    let doc = report_document(command.name(), config, outcome);
    write_atomic(out, &format!("{}.json", command.name()), &pretty(&doc))?;
    Ok(())
}

fn write_error(out: &Path, command: Command, config: &serde_json::Value, e: &Error) -> Result<()> {
    let doc = json!({ "command": command.name(), "config": config, "passed": false, "error": e.to_string() });
    write_atomic(out, &format!("{}.json", command.name()), &pretty(&doc))?;
    Ok(())
}

fn configure_threads() -> std::result::Result<(), String> {
    let Ok(v) = std::env::var("SEMIEFF_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| format!("SEMIEFF_THREADS must be a positive integer, got `{v}`"))?;
    // A second call in the same process (tests) keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Runs the tool on `args` (including the program name) and returns the exit
/// status.
pub fn run(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("semieff: {msg}");
        return 1;
    }
    let resolved = match resolve(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("semieff: {e}");
            return 1;
        }
    };
    let config = to_value(&resolved.config).unwrap_or(serde_json::Value::Null);
    match execute(cli.command, &resolved) {
        Ok(outcome) => {
            if let Err(e) = write_outcome(&cli.out, cli.command, &config, &outcome) {
                eprintln!("semieff: {e}");
                return 1;
            }
            for inv in outcome.invariants.iter().filter(|i| !i.passed) {
                eprintln!("semieff: invariant failed: {} (value {:e}, threshold {:e})", inv.name, inv.value, inv.threshold);
            }
            if outcome.passed() {
                0
            } else {
                2
            }
        }
        Err(e) if is_user_error(&e) => {
            eprintln!("semieff: {e}");
            1
        }
        Err(e) => {
            eprintln!("semieff: {e}");
            if let Err(w) = write_error(&cli.out, cli.command, &config, &e) {
                eprintln!("semieff: {w}");
            }
            2
        }
    }
}
