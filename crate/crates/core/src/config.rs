//! Run configuration files.
//!
//! One TOML file per run, with named sections; relative paths inside it are
//! resolved against the file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::{BisectionConfig, CertifyParams, DEFAULT_TOL};
use crate::field::{FieldError, FieldGraph, ScenarioFile};
use crate::sim::{FrictionVehicle, NoiseMode, SimConfig};
use crate::statespace::{augment_with_filter, double_integrator, AugmentedPlant, ModelError, ParamStateSpace};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub multiplier: MultiplierSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub bisection: BisectionSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub scenario: Option<ScenarioSection>,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `double-integrator` or `friction-vehicle`; ignored when `file` is set.
    #[serde(default = "default_builtin")]
    pub builtin: String,
    /// Base model in the plain-text model format.
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default = "one_usize")]
    pub d: usize,
    #[serde(default = "one")]
    pub k_p: f64,
    #[serde(default = "default_kd")]
    pub k_d: f64,
    #[serde(default)]
    pub vehicle: Option<FrictionVehicle>,
    /// Grid points per axis for the friction vehicle.
    #[serde(default)]
    pub grid_points: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            builtin: default_builtin(),
            file: None,
            d: 1,
            k_p: 1.0,
            k_d: default_kd(),
            vehicle: None,
            grid_points: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplierSection {
    #[serde(default = "one_usize")]
    pub nu: usize,
    #[serde(default = "one")]
    pub m: f64,
    #[serde(default = "default_l")]
    pub l: f64,
}

impl Default for MultiplierSection {
    fn default() -> Self {
        Self { nu: 1, m: 1.0, l: default_l() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "default_mode")]
    pub mode: NoiseMode,
    #[serde(default = "default_period")]
    pub period: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { delta: 0.0, mode: default_mode(), period: default_period() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BisectionSection {
    #[serde(default)]
    pub alpha_lo: f64,
    #[serde(default = "one")]
    pub alpha_hi: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl Default for BisectionSection {
    fn default() -> Self {
        Self { alpha_lo: 0.0, alpha_hi: 1.0, tol: DEFAULT_TOL }
    }
}

/// Either an explicit list or an inclusive linear range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValueList {
    List(Vec<f64>),
    Range { start: f64, stop: f64, count: usize },
}

impl ValueList {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Self::List(v) => v.clone(),
            Self::Range { start, stop, count } => match count {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..*n).map(|k| start + (stop - start) * k as f64 / (n - 1) as f64).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub k_d: ValueList,
    pub delta: ValueList,
    pub l: ValueList,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub file: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    /// Number of runs; run `k` uses seed `seed + k`.
    #[serde(default = "one_usize")]
    pub runs: usize,
    /// Half-width of the box around the equilibrium that initial states are
    /// drawn from when no certificate is given.
    #[serde(default = "one")]
    pub init_spread: f64,
    /// Certificate enabling the initial-ball check and the rate comparison.
    #[serde(default)]
    pub certificate: Option<PathBuf>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            t_end: default_t_end(),
            dt: default_dt(),
            sample_every: default_sample_every(),
            runs: 1,
            init_spread: 1.0,
            certificate: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_out() }
    }
}

fn default_builtin() -> String {
    "double-integrator".into()
}
fn one_usize() -> usize {
    1
}
fn one() -> f64 {
    1.0
}
fn default_kd() -> f64 {
    9.0
}
fn default_l() -> f64 {
    10.0
}
fn default_mode() -> NoiseMode {
    NoiseMode::Opposing
}
fn default_period() -> f64 {
    0.5
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_t_end() -> f64 {
    50.0
}
fn default_dt() -> f64 {
    1e-3
}
fn default_sample_every() -> usize {
    10
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

pub fn read_text(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = read_text(path)?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let b = &self.bisection;
        if !(b.tol > 0.0 && b.alpha_hi > b.alpha_lo && b.alpha_lo >= 0.0) {
            return Err(ConfigError::Invalid("bisection needs tol > 0 and 0 <= alpha_lo < alpha_hi".into()));
        }
        if self.multiplier.nu == 0 {
            return Err(ConfigError::Invalid("multiplier order nu must be at least 1".into()));
        }
        if let Some(s) = &self.sweep {
            for (name, list) in [("k_d", &s.k_d), ("delta", &s.delta), ("l", &s.l)] {
                if list.values().is_empty() {
                    return Err(ConfigError::Invalid(format!("sweep range {name} is empty")));
                }
            }
        }
        if self.workers == Some(0) {
            return Err(ConfigError::Invalid("workers must be positive".into()));
        }
        for p in [self.model.file.as_ref(), self.scenario.as_ref().map(|s| &s.file), self.simulation.certificate.as_ref()]
            .into_iter()
            .flatten()
        {
            let full = self.resolve(p);
            if !full.exists() {
                return Err(ConfigError::Invalid(format!("referenced file {} does not exist", full.display())));
            }
        }
        Ok(())
    }

    pub fn base_model(&self) -> Result<ParamStateSpace, ConfigError> {
        if let Some(file) = &self.model.file {
            return Ok(ParamStateSpace::from_model_str(&read_text(&self.resolve(file))?)?);
        }
        match self.model.builtin.as_str() {
            "double-integrator" => Ok(double_integrator(self.model.d)),
            "friction-vehicle" => Ok(self.vehicle().model()?),
            other => Err(ConfigError::Invalid(format!("unknown built-in model {other:?}"))),
        }
    }

    pub fn vehicle(&self) -> FrictionVehicle {
        let mut v = self.model.vehicle.unwrap_or_default();
        if let Some(n) = self.model.grid_points {
            v.grid_points = n;
        }
        v
    }

    pub fn plant_with_kd(&self, k_d: f64) -> Result<AugmentedPlant, ModelError> {
        let base = self.base_model().map_err(|e| match e {
            ConfigError::Model(m) => m,
            other => ModelError::Format(other.to_string()),
        })?;
        augment_with_filter(&base, self.model.k_p, k_d)
    }

    pub fn plant(&self) -> Result<AugmentedPlant, ConfigError> {
        Ok(self.plant_with_kd(self.model.k_d)?)
    }

    pub fn certify_params(&self, d: usize) -> CertifyParams {
        CertifyParams::new(self.multiplier.nu, self.multiplier.m, self.multiplier.l, self.noise.delta, d)
    }

    pub fn bisection(&self) -> BisectionConfig {
        BisectionConfig { alpha_lo: self.bisection.alpha_lo, alpha_hi: self.bisection.alpha_hi, tol: self.bisection.tol }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig { t_end: self.simulation.t_end, dt: self.simulation.dt, sample_every: self.simulation.sample_every }
    }

    /// Scenario text (for hashing) and the graph it describes.
    pub fn scenario(&self) -> Result<(String, FieldGraph), ConfigError> {
        let section = self
            .scenario
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("missing [scenario] section".into()))?;
        let path = self.resolve(&section.file);
        let text = read_text(&path)?;
        let graph = ScenarioFile::from_toml(&text)
            .and_then(|s| s.build())
            .map_err(|e| ConfigError::Parse { path, message: e.to_string() })?;
        Ok((text, graph))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_ranges() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg.model.k_d, 9.0);
        assert_eq!(cfg.bisection.tol, DEFAULT_TOL);
        let r = ValueList::Range { start: 1.0, stop: 3.0, count: 5 };
        assert_eq!(r.values(), vec![1.0, 1.5, 2.0, 2.5, 3.0]);
        let cfg: RunConfig = toml::from_str("[sweep]\nk_d = [1.0, 2.0]\ndelta = [0.0]\nl = { start = 10.0, stop = 20.0, count = 3 }").unwrap();
        assert_eq!(cfg.sweep.unwrap().l.values(), vec![10.0, 15.0, 20.0]);
    }

    #[test]
    fn rejects_unknown_fields_and_bad_ranges() {
        assert!(toml::from_str::<RunConfig>("[model]\nbogus = 1").is_err());
        let cfg: RunConfig = toml::from_str("[bisection]\ntol = 0.0").unwrap();
        assert!(cfg.validate().is_err());
        let cfg: RunConfig = toml::from_str("[sweep]\nk_d = []\ndelta = [0.0]\nl = [10.0]").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn builtin_models() {
        let mut cfg = RunConfig::default();
        cfg.model = ModelSection::default();
        assert_eq!(cfg.plant().unwrap().n_states(), 2);
        cfg.model.builtin = "friction-vehicle".into();
        let plant = cfg.plant().unwrap();
        assert_eq!(plant.n_states(), 4);
        assert_eq!(plant.aug.grid().len(), 11);
        cfg.model.builtin = "submarine".into();
        assert!(cfg.plant().is_err());
    }
}
