use serde::Deserialize;
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub evolve: EvolveConfig,
    #[serde(default)]
    pub envelope: EnvelopeConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub design: DesignConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialKind {
    Builtin,
    Expression,
    Csv,
    Designed,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub kind: PotentialKind,
    /// Built-in name, or a label for the other kinds.
    pub name: Option<String>,
    pub depth: Option<f64>,
    pub width: Option<f64>,
    /// Multiplies V.
    pub coupling: Option<f64>,
    /// Closed form in r, e.g. "-math::exp(-r^2)".
    pub expression: Option<String>,
    pub support: Option<f64>,
    /// CSV of (r, V) samples.
    pub path: Option<PathBuf>,
    pub ell: Option<usize>,
    pub c0: Option<f64>,
    pub source_coefficients: Option<Vec<f64>>,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        Self {
            kind: PotentialKind::Builtin,
            name: Some("gaussian_bump".into()),
            depth: None,
            width: None,
            coupling: None,
            expression: None,
            support: None,
            path: None,
            ell: None,
            c0: None,
            source_coefficients: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub r_max: Option<f64>,
    pub sectors: Vec<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n: 64, r_max: None, sectors: vec![0, 1, 2] }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceConfig {
    pub rank: f64,
    pub inversion: f64,
    /// Relative change allowed under λ-panel refinement; unset skips the check.
    pub quadrature: Option<f64>,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self { rank: 1e-8, inversion: 1e-6, quadrature: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub start: f64,
    pub end: f64,
    pub count: usize,
    pub values: Option<Vec<f64>>,
    /// Fit window; defaults to the whole grid.
    pub fit_window: Option<(f64, f64)>,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { start: 10.0, end: 1000.0, count: 16, values: None, fit_window: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    Bump,
    SectorBump,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub data: DataKind,
    pub width: f64,
    pub ell: usize,
    pub sigma: f64,
    pub subtract: Vec<String>,
    pub target_radius: f64,
    pub target_count: usize,
    pub cutoff: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self { data: DataKind::Bump, width: 0.5, ell: 0, sigma: 0.0, subtract: vec![], target_radius: 20.0, target_count: 80, cutoff: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignChoice {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvelopeConfig {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub count: usize,
    pub sign: SignChoice,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self { lambda_min: 1e-4, lambda_max: 0.05, count: 12, sign: SignChoice::Plus }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub c_min: f64,
    pub c_max: f64,
    pub steps: usize,
    /// Also bisect for the coupling where the first kernel appears.
    pub threshold: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { c_min: 0.5, c_max: 40.0, steps: 12, threshold: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    Bump,
    First,
    Second,
    Third,
    Angular,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub kind: DesignKind,
    pub c0: f64,
    pub support: f64,
    pub samples: usize,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self { kind: DesignKind::Third, c0: 0.0, support: 4.0, samples: 400 }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        // relative CSV paths resolve against the config file
        if let (Some(p), Some(dir)) = (cfg.potential.path.as_mut(), path.parent()) {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let t = &self.tolerances;
        if !(t.rank > 0.0) || !(t.inversion > 0.0) || t.quadrature.is_some_and(|q| !(q > 0.0)) {
            return bad("tolerances must be positive".into());
        }
        if self.grid.n < 4 {
            return bad(format!("grid.n = {} is too small", self.grid.n));
        }
        if self.grid.sectors.is_empty() || self.grid.sectors.iter().any(|&l| l > 2) {
            return bad("grid.sectors must be a non-empty subset of {0, 1, 2}".into());
        }
        if let Some(p) = &self.potential.path {
            if !p.exists() {
                return bad(format!("potential.path {} does not exist", p.display()));
            }
        }
        let tm = &self.time;
        match &tm.values {
            Some(v) if v.is_empty() || v.iter().any(|t| !(*t > 0.0)) => return bad("time.values must be positive".into()),
            None if !(tm.start > 0.0 && tm.end > tm.start && tm.count >= 2) => {
                return bad("time needs 0 < start < end and count >= 2".into())
            }
            _ => {}
        }
        let e = &self.envelope;
        if !(e.lambda_min > 0.0 && e.lambda_max > e.lambda_min && e.count >= 3) {
            return bad("envelope needs 0 < lambda_min < lambda_max and count >= 3".into());
        }
        let s = &self.sweep;
        if !(s.c_min > 0.0 && s.c_max > s.c_min && s.steps >= 2) {
            return bad("sweep needs 0 < c_min < c_max and steps >= 2".into());
        }
        if !(self.evolve.width > 0.0 && self.evolve.cutoff > 0.0 && self.evolve.sigma >= 0.0) {
            return bad("evolve.width and evolve.cutoff must be positive, evolve.sigma non-negative".into());
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        match &self.time.values {
            Some(v) => v.clone(),
            None => h4spec::propagator::log_times(self.time.start, self.time.end, self.time.count),
        }
    }

    pub fn envelope_lambdas(&self) -> Vec<f64> {
        let e = &self.envelope;
        let n = e.count;
        (0..n).map(|k| e.lambda_min * (e.lambda_max / e.lambda_min).powf(k as f64 / (n - 1) as f64)).collect()
    }
}
