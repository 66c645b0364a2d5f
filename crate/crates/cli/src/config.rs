use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "toricsol", version, about = "Soliton vector fields, toric soliton checks and continuity paths")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a polyhedron from a fan or halfspace JSON and report its vertices.
    Polytope,
    /// Minimize the weighted volume functional over the cone Λ.
    SolitonVector,
    /// Run one of the closed-form invariant suites.
    Verify {
        #[arg(long = "case", value_enum)]
        case: VerifyCase,
    },
    /// Solve the continuity path s ∈ [0, 1] and write the monitor table.
    Continuity,
    /// Compare F̂ with J on a perturbed one-dimensional model.
    Fhat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum VerifyCase {
    GaussianXi,
    GaussianPolytope,
    BrionVsOracle,
    LegendreInvolution,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PrefactorFlag {
    #[value(name = "1")]
    One,
    #[value(name = "2pi")]
    TwoPi,
}

#[derive(Debug, Args)]
pub struct Flags {
    /// JSON input: a fan or polyhedron, or a run configuration.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Directory for the report and CSV output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long = "tol-grad", global = true)]
    pub tol_grad: Option<f64>,
    #[arg(long = "tol-newton", global = true)]
    pub tol_newton: Option<f64>,
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    #[arg(long = "grid-h", global = true)]
    pub grid_h: Option<f64>,
    /// ξ-range as `lo,hi`.
    #[arg(long = "grid-span", global = true, allow_hyphen_values = true)]
    pub grid_span: Option<String>,
    #[arg(long = "truncation-R", global = true)]
    pub truncation_r: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub prefactor: Option<PrefactorFlag>,
}

/// Validated command line: tolerances are positive, spans are ordered.
#[derive(Debug)]
pub struct RunConfig {
    pub command: Command,
    pub input_path: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub tolerances: BTreeMap<String, f64>,
    pub steps: Option<usize>,
    pub grid_h: Option<f64>,
    pub grid_span: Option<(f64, f64)>,
    pub truncation_r: Option<f64>,
    pub prefactor: PrefactorFlag,
}

fn parse_span(text: &str) -> Result<(f64, f64), CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let bad = || CliError::Config(format!("--grid-span expects `lo,hi`, got `{text}`"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn positive(name: &str, v: Option<f64>) -> Result<Option<f64>, CliError> {
    match v {
        Some(x) if !(x.is_finite() && x > 0.0) => Err(CliError::Config(format!("{name} must be positive, got {x}"))),
        other => Ok(other),
    }
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Result<Self, CliError> {
        let f = cli.flags;
        let mut tolerances = BTreeMap::new();
        if let Some(t) = positive("--tol-grad", f.tol_grad)? {
            tolerances.insert("grad".to_string(), t);
        }
        if let Some(t) = positive("--tol-newton", f.tol_newton)? {
            tolerances.insert("newton".to_string(), t);
        }
        if f.steps == Some(0) {
            return Err(CliError::Config("--steps must be at least 1".into()));
        }
        Ok(Self {
            command: cli.command,
            input_path: f.input,
            output_dir: f.out,
            tolerances,
            steps: f.steps,
            grid_h: positive("--grid-h", f.grid_h)?,
            grid_span: f.grid_span.as_deref().map(parse_span).transpose()?,
            truncation_r: positive("--truncation-R", f.truncation_r)?,
            prefactor: f.prefactor.unwrap_or(PrefactorFlag::One),
        })
    }

    pub fn tolerance(&self, key: &str, default: f64) -> f64 {
        self.tolerances.get(key).copied().unwrap_or(default)
    }
}

/// A Gaussian bump `amplitude · exp(-|ξ - center|² / width²)` added to the reference data.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    pub amplitude: f64,
    #[serde(default)]
    pub center: Vec<f64>,
    #[serde(default = "unit_width")]
    pub width: f64,
}

fn unit_width() -> f64 {
    1.0
}

impl Default for BumpSpec {
    fn default() -> Self {
        Self { amplitude: 0.5, center: vec![], width: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// One-dimensional Gaussian model on the half-line.
    #[default]
    Gaussian,
    /// Legendre dual of the Guillemin potential of the blown-up C×P¹ polytope.
    Flagship,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    pub newton: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub h: Option<f64>,
    pub span: Option<[f64; 2]>,
}

/// Run configuration for `continuity` and `fhat`.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct ModelRun {
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default)]
    pub bump: BumpSpec,
    pub steps: Option<usize>,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
    #[serde(default)]
    pub grid: GridSpec,
}

/// Resolved settings for a model run, written back as `run.json`.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ResolvedRun {
    pub model: ModelKind,
    pub bump: BumpSpec,
    pub steps: usize,
    pub newton_tol: f64,
    pub grid_h: f64,
    pub grid_span: [f64; 2],
}

impl ModelRun {
    /// Command-line flags override the file.
    pub fn resolve(self, cfg: &RunConfig) -> Result<ResolvedRun, CliError> {
        let (h_default, span_default) = match self.model {
            ModelKind::Gaussian => (0.01, [-8.0, 6.0]),
            ModelKind::Flagship => (0.375, [-3.0, 3.0]),
        };
        let grid_h = cfg.grid_h.or(self.grid.h).unwrap_or(h_default);
        let grid_span = cfg.grid_span.map(|(a, b)| [a, b]).or(self.grid.span).unwrap_or(span_default);
        let newton_tol = cfg.tolerances.get("newton").copied().or(self.tolerances.newton).unwrap_or(1e-10);
        let steps = cfg.steps.or(self.steps).unwrap_or(20);
        positive("grid h", Some(grid_h))?;
        positive("newton tolerance", Some(newton_tol))?;
        positive("bump width", Some(self.bump.width))?;
        if steps == 0 || !(grid_span[0] < grid_span[1]) {
            return Err(CliError::Config("steps must be positive and the span ordered".into()));
        }
        let dim = match self.model {
            ModelKind::Gaussian => 1,
            ModelKind::Flagship => 2,
        };
        let mut bump = self.bump;
        if bump.center.is_empty() {
            bump.center = vec![0.0; dim];
        }
        if bump.center.len() != dim || !bump.amplitude.is_finite() {
            return Err(CliError::Config(format!("bump center must have {dim} finite entries")));
        }
        if self.model == ModelKind::Flagship && (grid_span[0] + grid_span[1]).abs() > 1e-12 {
            return Err(CliError::Config("the planar model needs a symmetric span `-a,a`".into()));
        }
        Ok(ResolvedRun { model: self.model, bump, steps, newton_tol, grid_h, grid_span })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spans_and_unknown_keys() {
        assert_eq!(parse_span("-8,6").unwrap(), (-8.0, 6.0));
        assert!(parse_span("6,-8").is_err());
        assert!(parse_span("1").is_err());
        let ok: ModelRun = serde_json::from_str(r#"{"bump": {"amplitude": 0.0}, "steps": 1}"#).unwrap();
        assert_eq!(ok.bump.width, 1.0);
        assert!(serde_json::from_str::<ModelRun>(r#"{"bumps": {}}"#).is_err());
        assert!(serde_json::from_str::<ModelRun>(r#"{"bump": {"amplitude": 1, "height": 2}}"#).is_err());
    }
}
