//! Experiment configuration files.
//!
//! A config is a TOML document with a mandatory `version = 1` key, the
//! `[kernel]`, `[grid]` and `[coefficients]` sections, and one optional
//! section per subcommand. See `README.md` for the full schema.

use std::path::Path;

use heatfk::{Coefficients, Kernel, KernelKind, ScalarFn, SpaceGrid, TimeGrid};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
#[error("config error in `{field}`: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Constant { q0: f64 },
    Gaussian { variance: f64, length_scale: f64 },
    Exponential { variance: f64, length_scale: f64 },
    WhiteApprox { eps: f64 },
    Bifractional { h: f64, k: f64 },
}

/// Overrides for the exponents a kernel declares by default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeclaredExponents {
    pub beta: Option<f64>,
    pub gamma0: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points: Vec<usize>,
    pub t_end: f64,
    pub steps: usize,
    #[serde(default = "default_clip_tol")]
    pub clip_tol: f64,
}

fn default_clip_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub drift: ScalarFn,
    pub diffusion: ScalarFn,
    pub initial: ScalarFn,
    #[serde(default = "one")]
    pub rho: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSpec {
    /// Keep every `csv_time_stride`-th time row in the CSV.
    #[serde(default = "one_usize")]
    pub csv_time_stride: usize,
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardSpec {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_picard_tol")]
    pub tol: f64,
    /// Relative agreement with the time-stepping solution required by `--check`.
    #[serde(default = "default_scheme_tol")]
    pub agreement: f64,
}

fn default_iterations() -> usize {
    50
}
fn default_picard_tol() -> f64 {
    1e-10
}
fn default_scheme_tol() -> f64 {
    0.02
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FkModelSpec {
    /// No noise and no drift: `V = E h(x + B_t)`.
    Zero,
    /// Spatially flat noise with covariance `q0`.
    Constant { q0: f64 },
    /// The configured kernel on a sampled lattice.
    Quenched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FkSpec {
    pub model: FkModelSpec,
    pub t: f64,
    /// Observation points; each entry has the grid dimension.
    pub x: Vec<Vec<f64>>,
    pub n_paths: usize,
    /// Uncompensated weights, for negative controls.
    #[serde(default)]
    pub drop_compensator: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifySpec {
    pub t: f64,
    pub x: Vec<f64>,
    pub eps: Vec<f64>,
    pub n_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MalliavinSpec {
    pub t: f64,
    pub x: Vec<f64>,
    /// Number of equally spaced s-nodes in `[0, t)`.
    pub s_points: usize,
    pub n_paths: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthSpec {
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    pub x: Vec<f64>,
    pub replicas: usize,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: BandwidthSpec,
    #[serde(default = "default_eval_points")]
    pub eval_points: usize,
}

fn default_bandwidth() -> BandwidthSpec {
    BandwidthSpec::Silverman
}
fn default_eval_points() -> usize {
    401
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderSpec {
    pub replicas: usize,
    /// Grid node at which time increments are measured.
    pub x: Vec<f64>,
    #[serde(default = "default_p")]
    pub p: Vec<u32>,
    /// Time lags in steps.
    pub time_lags: Vec<usize>,
    /// Space lags in nodes along the first axis.
    pub space_lags: Vec<usize>,
    #[serde(default = "default_band")]
    pub band: f64,
}

fn default_p() -> Vec<u32> {
    vec![2, 4]
}
fn default_band() -> f64 {
    0.07
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelCheckSpec {
    /// Times for the small-time exponent regression; at least 8, spanning a decade.
    pub h1a_times: Vec<f64>,
    #[serde(default = "default_gamma_tol")]
    pub gamma_tolerance: f64,
}

fn default_gamma_tol() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub declared: DeclaredExponents,
    pub grid: GridSpec,
    pub coefficients: CoefficientSpec,
    #[serde(default)]
    pub solve: SolveSpec,
    pub picard: Option<PicardSpec>,
    pub fk: Option<FkSpec>,
    pub mollify: Option<MollifySpec>,
    pub malliavin: Option<MalliavinSpec>,
    pub density: Option<DensitySpec>,
    pub holder: Option<HolderSpec>,
    pub kernel_check: Option<KernelCheckSpec>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("<file>", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let value: toml::Table = toml::from_str(text).map_err(|e| ConfigError::new("<document>", e.message()))?;
        match value.get("version") {
            None => return Err(ConfigError::new("version", "missing; this tool reads version = 1")),
            Some(toml::Value::Integer(v)) if *v == CONFIG_VERSION as i64 => {}
            Some(v) => {
                return Err(ConfigError::new("version", format!("unsupported value {v}; expected {CONFIG_VERSION}")))
            }
        }
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::new(field_of(&e, text), e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.kernel()?;
        self.space_grid()?;
        self.time_grid()?;
        self.coefficients()?;
        if !(self.grid.clip_tol >= 0.0 && self.grid.clip_tol < 1.0) {
            return Err(ConfigError::new("grid.clip_tol", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<Kernel, ConfigError> {
        let base = match self.kernel {
            KernelSpec::Constant { q0 } => Kernel::constant(q0),
            KernelSpec::Gaussian { variance, length_scale } => Kernel::gaussian(variance, length_scale),
            KernelSpec::Exponential { variance, length_scale } => Kernel::exponential(variance, length_scale),
            KernelSpec::WhiteApprox { eps } => Kernel::white_approx(eps),
            KernelSpec::Bifractional { h, k } => Kernel::bifractional(h, k),
        }
        .map_err(|e| ConfigError::new("kernel", e.to_string()))?;
        let d = &self.declared;
        Kernel::new(
            base.kind,
            d.beta.unwrap_or(base.beta),
            d.gamma0.unwrap_or(base.gamma0),
            d.gamma.unwrap_or(base.gamma),
        )
        .map_err(|e| ConfigError::new("declared", e.to_string()))
    }

    pub fn space_grid(&self) -> Result<SpaceGrid, ConfigError> {
        let g = &self.grid;
        if g.lower.len() != g.upper.len() || g.lower.len() != g.points.len() {
            return Err(ConfigError::new("grid", "lower, upper and points must have the same length"));
        }
        let grid = match g.lower.len() {
            1 => SpaceGrid::line(g.lower[0], g.upper[0], g.points[0]),
            2 => SpaceGrid::plane([g.lower[0], g.lower[1]], [g.upper[0], g.upper[1]], [g.points[0], g.points[1]]),
            n => return Err(ConfigError::new("grid.points", format!("dimension {n} is not supported (1 or 2)"))),
        };
        let grid = grid.map_err(|e| ConfigError::new("grid", e.to_string()))?;
        if let KernelKind::BifractionalDerivative { .. } = self.kernel()?.kind {
            if grid.dim() != 1 {
                return Err(ConfigError::new("grid", "the bifractional kernel is one-dimensional"));
            }
        }
        Ok(grid)
    }

    pub fn time_grid(&self) -> Result<TimeGrid, ConfigError> {
        TimeGrid::new(self.grid.t_end, self.grid.steps).map_err(|e| ConfigError::new("grid.t_end", e.to_string()))
    }

    pub fn coefficients(&self) -> Result<Coefficients, ConfigError> {
        let c = &self.coefficients;
        Coefficients::new(c.drift, c.diffusion, c.initial, c.rho)
            .map_err(|e| ConfigError::new("coefficients", e.to_string()))
    }
}

/// Best-effort dotted path of the table containing the error span.
fn field_of(err: &toml::de::Error, text: &str) -> String {
    let Some(span) = err.span() else { return "<document>".into() };
    let mut table = String::new();
    let mut key = String::new();
    let mut offset = 0;
    for line in text.lines() {
        let end = offset + line.len();
        let trimmed = line.trim();
        if trimmed.starts_with('[') {
            table = trimmed.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            key.clear();
        } else if let Some((k, _)) = trimmed.split_once('=') {
            key = k.trim().to_string();
        }
        if span.start <= end {
            break;
        }
        offset = end + 1;
    }
    match (table.is_empty(), key.is_empty()) {
        (true, true) => "<document>".into(),
        (true, false) => key,
        (false, true) => table,
        (false, false) => format!("{table}.{key}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
version = 1
[kernel]
kind = "constant"
q0 = 1.0
[grid]
lower = [-2.0]
upper = [2.0]
points = [21]
t_end = 0.1
steps = 10
[coefficients]
drift = { kind = "zero" }
diffusion = { kind = "zero" }
initial = { kind = "sin", amplitude = 1.0, frequency = 1.0, offset = 0.0 }
"#;

    #[test]
    fn minimal_config_parses() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.grid.clip_tol, 1e-12);
        assert_eq!(c.kernel().unwrap().gamma, 0.0);
    }

    #[test]
    fn version_is_mandatory() {
        let e = ExperimentConfig::parse(&MINIMAL.replace("version = 1", "")).unwrap_err();
        assert_eq!(e.field, "version");
        let e = ExperimentConfig::parse(&MINIMAL.replace("version = 1", "version = 2")).unwrap_err();
        assert_eq!(e.field, "version");
    }

    #[test]
    fn bad_kernel_kind_names_the_field() {
        let e = ExperimentConfig::parse(&MINIMAL.replace("\"constant\"", "\"quadratic\"")).unwrap_err();
        assert!(e.field.starts_with("kernel"), "{e}");
    }

    #[test]
    fn unknown_coefficient_is_rejected() {
        let e =
            ExperimentConfig::parse(&MINIMAL.replace("kind = \"zero\" }\ndiffusion", "kind = \"cube\" }\ndiffusion"))
                .unwrap_err();
        assert!(e.field.starts_with("coefficients"), "{e}");
    }

    #[test]
    fn invalid_exponents_are_rejected() {
        let text = MINIMAL.replace("[grid]", "[declared]\ngamma = -2.0\n[grid]");
        assert_eq!(ExperimentConfig::parse(&text).unwrap_err().field, "declared");
    }

    #[test]
    fn non_lipschitz_diffusion_is_rejected() {
        let text = MINIMAL.replace("diffusion = { kind = \"zero\" }", "diffusion = { kind = \"square\" }");
        assert_eq!(ExperimentConfig::parse(&text).unwrap_err().field, "coefficients");
    }
}
