//! Experiment configuration: file format, defaults and validation.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use mirror_em::baseline::{log_grid, DomainGuard, GdConfig, SmoothnessCoords};
use mirror_em::models::InitMethod;
use mirror_em::solver::{EmOptions, EpsilonSchedule, GemPolicy, StepSchedule};
use mirror_em::synthetic::SyntheticSpec;
use mirror_em::ModelKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Em,
    Gem,
    Online,
    Map,
    Gd,
    Compare,
    Estep,
    Verify,
    Smoothness,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Em => "em",
            Mode::Gem => "gem",
            Mode::Online => "online",
            Mode::Map => "map",
            Mode::Gd => "gd",
            Mode::Compare => "compare",
            Mode::Estep => "estep",
            Mode::Verify => "verify",
            Mode::Smoothness => "smoothness",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    /// Gaussian mixture with full covariances.
    #[default]
    Gmm,
    /// Mixture of independent-Bernoulli components (0/1 data).
    Bernoulli,
    /// Single Gaussian with unknown mean and covariance.
    Gaussian,
    /// Univariate Gaussian with variance fixed at one.
    UnitGaussian,
    /// Univariate Laplace mixture.
    Laplace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Covariance {
    #[default]
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// The bundled Old Faithful eruptions table (272 × 2).
    #[default]
    Faithful,
    Csv { path: PathBuf },
    Synthetic { spec: SyntheticSpec, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub method: InitMethod,
    /// JSON file with explicit starting parameters; overrides `method`.
    pub params: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Diagnostics {
    pub tol: f64,
    pub natural_decrement: bool,
    pub missing_info_from: Option<usize>,
    pub store_params: bool,
}

impl Default for Diagnostics {
    fn default() -> Self {
        let d = EmOptions::default();
        Diagnostics {
            tol: d.tol,
            natural_decrement: d.natural_decrement,
            missing_info_from: d.missing_info_from,
            store_params: d.store_params,
        }
    }
}

impl Diagnostics {
    pub fn em_options(&self) -> EmOptions {
        EmOptions {
            tol: self.tol,
            natural_decrement: self.natural_decrement,
            missing_info_from: self.missing_info_from,
            store_params: self.store_params,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GdSettings {
    /// Step for a single `fit --method gd` run.
    pub step_size: f64,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_count: usize,
    pub domain_guard: DomainGuard,
}

impl Default for GdSettings {
    fn default() -> Self {
        GdSettings { step_size: 0.1, grid_min: 1e-6, grid_max: 1.0, grid_count: 13, domain_guard: DomainGuard::Backtrack }
    }
}

impl GdSettings {
    pub fn gd_config(&self, iters: usize) -> GdConfig {
        GdConfig {
            step_size: self.step_size,
            iters,
            grid: log_grid(self.grid_max, self.grid_min, self.grid_count),
            domain_guard: self.domain_guard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineSettings {
    pub passes: usize,
    pub schedule: StepSchedule,
}

impl Default for OnlineSettings {
    fn default() -> Self {
        OnlineSettings { passes: 1, schedule: StepSchedule::InverseT { offset: 10.0 } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSettings {
    pub n0: f64,
    /// Prior mean of the sufficient statistics; defaults to the mean
    /// parameters of the starting point.
    pub prior_mean: Option<Vec<f64>>,
}

impl Default for MapSettings {
    fn default() -> Self {
        MapSettings { n0: 1.0, prior_mean: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GemKind {
    /// One block per iteration, multiplicative constant `1/k`.
    #[default]
    Ecm,
    /// Inexact M-step with additive tolerance `scale / t²`.
    Additive,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GemSettings {
    pub policy: GemKind,
    /// Claimed multiplicative constant; `1/k` when absent.
    pub c: Option<f64>,
    pub eps_scale: f64,
    pub max_inner: usize,
    /// Standard errors allowed in the seed-averaged check.
    pub z: f64,
}

impl Default for GemSettings {
    fn default() -> Self {
        GemSettings { policy: GemKind::Ecm, c: None, eps_scale: 1.0, max_inner: 10_000, z: 3.0 }
    }
}

impl GemSettings {
    pub fn policy(&self, k: usize) -> GemPolicy {
        match self.policy {
            GemKind::Ecm => GemPolicy::Multiplicative { c: self.c.unwrap_or(1.0 / k as f64) },
            GemKind::Additive => GemPolicy::Additive {
                epsilons: EpsilonSchedule::InverseSquare { scale: self.eps_scale },
                max_inner: self.max_inner,
            },
            GemKind::Exact => GemPolicy::Exact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothnessSettings {
    pub variances: Vec<f64>,
    pub pairs: usize,
    pub half_width: f64,
    pub coords: SmoothnessCoords,
}

impl Default for SmoothnessSettings {
    fn default() -> Self {
        SmoothnessSettings {
            variances: vec![1.0, 0.1, 0.01, 0.001],
            pairs: 200,
            half_width: 0.5,
            coords: SmoothnessCoords::MeanVariance,
        }
    }
}

/// Everything needed to reproduce a run. Serialized into every trace header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub model: ModelName,
    pub k: usize,
    pub covariance: Covariance,
    pub data: DataSource,
    /// Per-column z-scoring; on by default for `compare` with Gaussian models.
    pub standardize: Option<bool>,
    pub init: InitConfig,
    pub iters: usize,
    pub seeds: Vec<u64>,
    pub diagnostics: Diagnostics,
    /// Output directory. Not written into trace headers.
    pub output: PathBuf,
    pub gd: GdSettings,
    pub online: OnlineSettings,
    pub map: MapSettings,
    pub gem: GemSettings,
    pub smoothness: SmoothnessSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::Em,
            model: ModelName::Gmm,
            k: 2,
            covariance: Covariance::Full,
            data: DataSource::Faithful,
            standardize: None,
            init: InitConfig::default(),
            iters: 50,
            seeds: vec![0],
            diagnostics: Diagnostics::default(),
            output: PathBuf::from("runs"),
            gd: GdSettings::default(),
            online: OnlineSettings::default(),
            map: MapSettings::default(),
            gem: GemSettings::default(),
            smoothness: SmoothnessSettings::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reads a TOML or JSON file (by extension; TOML otherwise).
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
        } else {
            toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
        }
    }

    pub fn model_kind(&self) -> ModelKind {
        match self.model {
            ModelName::Gmm => ModelKind::GaussianMixture { k: self.k },
            ModelName::Bernoulli => ModelKind::BernoulliMixture { k: self.k },
            ModelName::Gaussian => ModelKind::SingleGaussian,
            ModelName::UnitGaussian => ModelKind::UnitVarianceGaussian,
            ModelName::Laplace => ModelKind::LaplaceMixture { k: self.k },
        }
    }

    pub fn standardize(&self) -> bool {
        self.standardize
            .unwrap_or(self.mode == Mode::Compare && matches!(self.model, ModelName::Gmm | ModelName::Gaussian))
    }

    /// The configuration of a single-seed run, as written into its header.
    pub fn for_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seeds = vec![seed];
        c.output = PathBuf::new();
        c
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.seeds.is_empty() {
            return Err("at least one seed is required".into());
        }
        if self.iters == 0 && !matches!(self.mode, Mode::Verify | Mode::Smoothness) {
            return Err("iters must be positive".into());
        }
        if self.k == 0 {
            return Err("k must be positive".into());
        }
        let needs_ef = matches!(self.mode, Mode::Em | Mode::Gem | Mode::Online | Mode::Map | Mode::Gd | Mode::Compare);
        if needs_ef && self.model == ModelName::Laplace {
            return Err(format!("mode {} needs an exponential-family model; use estep for laplace", self.mode.as_str()));
        }
        if self.mode == Mode::Estep && self.model != ModelName::Laplace {
            return Err("estep runs the laplace mixture; pass --model laplace".into());
        }
        if self.mode == Mode::Smoothness && !matches!(self.model, ModelName::Gaussian | ModelName::UnitGaussian) {
            return Err("smoothness probes the single gaussian models; pass --model gaussian or unit-gaussian".into());
        }
        if let DataSource::Synthetic { spec, .. } = &self.data {
            spec.validate().map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}
