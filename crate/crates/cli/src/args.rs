//! Command-line surface. Every flag is optional so that values from a
//! config file survive unless overridden.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mirror_em::baseline::{DomainGuard, SmoothnessCoords};
use mirror_em::models::InitMethod;
use mirror_em::solver::StepSchedule;
use mirror_em::synthetic::{SyntheticFamily, SyntheticSpec};

use crate::config::{Covariance, DataSource, ExperimentConfig, GemKind, Mode, ModelName};

#[derive(Debug, Parser)]
#[command(name = "mirror-em", version, about = "Run and check expectation-maximization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model by exact EM, or by gradient descent with `--method gd`.
    Fit(FitArgs),
    /// EM against gradient descent tuned over a step-size grid.
    Compare(CompareArgs),
    /// Online EM over single-row updates.
    Online(OnlineArgs),
    /// EM for the posterior mode under a conjugate prior.
    Map(MapArgs),
    /// Generalized EM with partial or inexact M-steps.
    Gem(GemArgs),
    /// E-step only analysis for the Laplace mixture.
    Estep(EstepArgs),
    /// Run the numerical oracle suite.
    Verify(VerifyArgs),
    /// Empirical gradient-Lipschitz estimates for the single Gaussian.
    Smoothness(SmoothnessArgs),
    /// Run whatever mode a config file names.
    Run(CommonArgs),
    /// Rerun the experiment recorded in a trace header.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Random,
    Kmeanspp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GuardArg {
    Reject,
    Backtrack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CoordsArg {
    Natural,
    MeanVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    /// `γ_t = 1 / (t + offset)`.
    InverseT,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SyntheticArg {
    Gaussian,
    Bernoulli,
    Laplace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Em,
    Gd,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML or JSON experiment file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model family.
    #[arg(long, value_enum)]
    pub model: Option<ModelName>,
    /// Number of mixture components.
    #[arg(long)]
    pub k: Option<usize>,
    /// Covariance structure of Gaussian components (only `full`).
    #[arg(long, value_enum)]
    pub covariance: Option<Covariance>,
    /// CSV file with a header row, or `faithful` for the bundled table.
    #[arg(long, conflicts_with = "synthetic")]
    pub data: Option<String>,
    /// Generate an equal-weight synthetic mixture instead of reading data.
    #[arg(long, value_enum)]
    pub synthetic: Option<SyntheticArg>,
    /// Components of the synthetic mixture.
    #[arg(long, requires = "synthetic")]
    pub synthetic_k: Option<usize>,
    /// Dimension of the synthetic data.
    #[arg(long, requires = "synthetic")]
    pub dim: Option<usize>,
    /// Distance between neighbouring synthetic centres, in component standard deviations.
    #[arg(long, requires = "synthetic")]
    pub separation: Option<f64>,
    /// Rows of synthetic data.
    #[arg(long, requires = "synthetic")]
    pub n: Option<usize>,
    /// Seed of the synthetic data draw (independent of `--seed`).
    #[arg(long, requires = "synthetic")]
    pub data_seed: Option<u64>,
    /// Z-score each column before fitting.
    #[arg(long, overrides_with = "no_standardize")]
    pub standardize: bool,
    /// Keep the data on its original scale.
    #[arg(long, overrides_with = "standardize")]
    pub no_standardize: bool,
    /// Seeded initialization: random rows or k-means++ centres.
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    /// JSON file with explicit starting parameters.
    #[arg(long)]
    pub init_params: Option<PathBuf>,
    /// Iterations (full-data passes for batch modes).
    #[arg(long)]
    pub iters: Option<usize>,
    /// Seeds to run, comma separated or repeated.
    #[arg(long = "seed", value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Half-open seed range `a..b`, appended to `--seed`.
    #[arg(long, value_parser = parse_range)]
    pub seed_range: Option<(u64, u64)>,
    /// Stop once the Bregman stationarity measure drops below this value (0 disables).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Record the largest missing-information eigenvalue from this iteration on.
    #[arg(long)]
    pub missing_info_from: Option<usize>,
    /// Skip the natural-gradient decrement diagnostic.
    #[arg(long)]
    pub no_natural_decrement: bool,
    /// Store every iterate in the trace.
    #[arg(long)]
    pub store_params: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Fitting algorithm.
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[command(flatten)]
    pub gd: GdArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GdArgs {
    /// Step size for a single gradient-descent run.
    #[arg(long)]
    pub step_size: Option<f64>,
    /// What gradient descent does when a step leaves the parameter domain.
    #[arg(long, value_enum)]
    pub domain_guard: Option<GuardArg>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub gd: GdArgs,
    /// Smallest step of the log-spaced gradient-descent grid.
    #[arg(long)]
    pub grid_min: Option<f64>,
    /// Largest step of the grid.
    #[arg(long)]
    pub grid_max: Option<f64>,
    /// Number of grid steps.
    #[arg(long)]
    pub grid_count: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct OnlineArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Passes over the data; one update per row per pass.
    #[arg(long)]
    pub passes: Option<usize>,
    /// Step-size schedule.
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleArg>,
    /// Offset of the `1/(t + offset)` schedule.
    #[arg(long)]
    pub offset: Option<f64>,
    /// Step of the constant schedule.
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct MapArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Prior strength in pseudo-observations.
    #[arg(long)]
    pub n0: Option<f64>,
    /// Prior mean of the sufficient statistics, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub prior_mean: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct GemArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Inexact M-step policy.
    #[arg(long, value_enum)]
    pub policy: Option<GemKind>,
    /// Multiplicative constant claimed for ECM (default `1/k`).
    #[arg(long)]
    pub c: Option<f64>,
    /// Additive tolerances are `eps_scale / t²`.
    #[arg(long)]
    pub eps_scale: Option<f64>,
    /// Cap on inner coordinate sweeps per additive-policy M-step.
    #[arg(long)]
    pub max_inner: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EstepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SmoothnessArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Variance ladder, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub variances: Option<Vec<f64>>,
    /// Random parameter pairs per variance level.
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Sampled means lie within this distance of the data mean.
    #[arg(long)]
    pub half_width: Option<f64>,
    /// Coordinates in which gradient differences are measured.
    #[arg(long, value_enum)]
    pub coords: Option<CoordsArg>,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// Trace file written by an earlier run.
    pub trace: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected a..b, got {s}"))?;
    let a: u64 = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    if b <= a {
        return Err(format!("empty seed range {s}"));
    }
    Ok((a, b))
}

impl CommonArgs {
    pub fn base_config(&self) -> Result<ExperimentConfig, String> {
        match &self.config {
            Some(p) => ExperimentConfig::load(p),
            None => Ok(ExperimentConfig::default()),
        }
    }

    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), String> {
        set(&mut cfg.model, self.model);
        set(&mut cfg.k, self.k);
        set(&mut cfg.covariance, self.covariance);
        if let Some(d) = &self.data {
            let path = PathBuf::from(d);
            let bundled = d == "faithful" || (d == "faithful.csv" && !path.exists());
            cfg.data = if bundled { DataSource::Faithful } else { DataSource::Csv { path } };
        }
        if let Some(fam) = self.synthetic {
            let (mut spec, mut seed) = match &cfg.data {
                DataSource::Synthetic { spec, seed } => (spec.clone(), *seed),
                _ => (SyntheticSpec { family: SyntheticFamily::Gaussian, k: cfg.k, dim: 1, separation: 3.0, n: 300 }, 0),
            };
            spec.family = match fam {
                SyntheticArg::Gaussian => SyntheticFamily::Gaussian,
                SyntheticArg::Bernoulli => SyntheticFamily::Bernoulli,
                SyntheticArg::Laplace => SyntheticFamily::Laplace,
            };
            set(&mut spec.k, self.synthetic_k);
            set(&mut spec.dim, self.dim);
            set(&mut spec.separation, self.separation);
            set(&mut spec.n, self.n);
            set(&mut seed, self.data_seed);
            cfg.data = DataSource::Synthetic { spec, seed };
        }
        if self.standardize {
            cfg.standardize = Some(true);
        }
        if self.no_standardize {
            cfg.standardize = Some(false);
        }
        if let Some(m) = self.init {
            cfg.init.method = match m {
                InitArg::Random => InitMethod::Random,
                InitArg::Kmeanspp => InitMethod::Kmeanspp,
            };
        }
        if self.init_params.is_some() {
            cfg.init.params = self.init_params.clone();
        }
        set(&mut cfg.iters, self.iters);
        let mut seeds = self.seeds.clone();
        if let Some((a, b)) = self.seed_range {
            seeds.extend(a..b);
        }
        if !seeds.is_empty() {
            cfg.seeds = seeds;
        }
        set(&mut cfg.diagnostics.tol, self.tol);
        if self.missing_info_from.is_some() {
            cfg.diagnostics.missing_info_from = self.missing_info_from;
        }
        if self.no_natural_decrement {
            cfg.diagnostics.natural_decrement = false;
        }
        if self.store_params {
            cfg.diagnostics.store_params = true;
        }
        if let Some(o) = &self.out {
            cfg.output = o.clone();
        }
        Ok(())
    }
}

impl GdArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        set(&mut cfg.gd.step_size, self.step_size);
        if let Some(g) = self.domain_guard {
            cfg.gd.domain_guard = match g {
                GuardArg::Reject => DomainGuard::Reject,
                GuardArg::Backtrack => DomainGuard::Backtrack,
            };
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn configured(common: &CommonArgs, mode: Option<Mode>) -> Result<ExperimentConfig, String> {
    let mut cfg = common.base_config()?;
    if let Some(m) = mode {
        cfg.mode = m;
    }
    common.apply(&mut cfg)?;
    Ok(cfg)
}

/// Resolves a parsed command line into a complete configuration.
pub fn resolve(command: &Command) -> Result<ExperimentConfig, String> {
    let cfg = match command {
        Command::Fit(a) => {
            let mut cfg = configured(&a.common, None)?;
            cfg.mode = match a.method {
                Some(MethodArg::Em) => Mode::Em,
                Some(MethodArg::Gd) => Mode::Gd,
                None if cfg.mode == Mode::Gd => Mode::Gd,
                None => Mode::Em,
            };
            a.gd.apply(&mut cfg);
            cfg
        }
        Command::Compare(a) => {
            let mut cfg = configured(&a.common, Some(Mode::Compare))?;
            a.gd.apply(&mut cfg);
            set(&mut cfg.gd.grid_min, a.grid_min);
            set(&mut cfg.gd.grid_max, a.grid_max);
            set(&mut cfg.gd.grid_count, a.grid_count);
            cfg
        }
        Command::Online(a) => {
            let mut cfg = configured(&a.common, Some(Mode::Online))?;
            set(&mut cfg.online.passes, a.passes);
            let kind = a.schedule.unwrap_or(match cfg.online.schedule {
                StepSchedule::InverseT { .. } => ScheduleArg::InverseT,
                StepSchedule::Constant { .. } => ScheduleArg::Constant,
            });
            cfg.online.schedule = match (kind, &cfg.online.schedule) {
                (ScheduleArg::InverseT, StepSchedule::InverseT { offset }) => {
                    StepSchedule::InverseT { offset: a.offset.unwrap_or(*offset) }
                }
                (ScheduleArg::InverseT, _) => StepSchedule::InverseT { offset: a.offset.unwrap_or(10.0) },
                (ScheduleArg::Constant, StepSchedule::Constant { gamma }) => {
                    StepSchedule::Constant { gamma: a.gamma.unwrap_or(*gamma) }
                }
                (ScheduleArg::Constant, _) => StepSchedule::Constant { gamma: a.gamma.unwrap_or(0.05) },
            };
            cfg
        }
        Command::Map(a) => {
            let mut cfg = configured(&a.common, Some(Mode::Map))?;
            set(&mut cfg.map.n0, a.n0);
            if a.prior_mean.is_some() {
                cfg.map.prior_mean = a.prior_mean.clone();
            }
            cfg
        }
        Command::Gem(a) => {
            let mut cfg = configured(&a.common, Some(Mode::Gem))?;
            set(&mut cfg.gem.policy, a.policy);
            if a.c.is_some() {
                cfg.gem.c = a.c;
            }
            set(&mut cfg.gem.eps_scale, a.eps_scale);
            set(&mut cfg.gem.max_inner, a.max_inner);
            cfg
        }
        Command::Estep(a) => {
            let mut cfg = a.common.base_config()?;
            cfg.mode = Mode::Estep;
            if a.common.config.is_none() {
                cfg.model = ModelName::Laplace;
            }
            a.common.apply(&mut cfg)?;
            cfg
        }
        Command::Verify(a) => configured(&a.common, Some(Mode::Verify))?,
        Command::Smoothness(a) => {
            let mut cfg = a.common.base_config()?;
            cfg.mode = Mode::Smoothness;
            if a.common.config.is_none() {
                cfg.model = ModelName::Gaussian;
            }
            a.common.apply(&mut cfg)?;
            if let Some(v) = &a.variances {
                cfg.smoothness.variances = v.clone();
            }
            set(&mut cfg.smoothness.pairs, a.pairs);
            set(&mut cfg.smoothness.half_width, a.half_width);
            if let Some(c) = a.coords {
                cfg.smoothness.coords = match c {
                    CoordsArg::Natural => SmoothnessCoords::Natural,
                    CoordsArg::MeanVariance => SmoothnessCoords::MeanVariance,
                };
            }
            cfg
        }
        Command::Run(common) => {
            if common.config.is_none() {
                return Err("run needs --config".into());
            }
            configured(common, None)?
        }
        Command::Replay(a) => {
            let file = std::fs::File::open(&a.trace).map_err(|e| format!("cannot open {}: {e}", a.trace.display()))?;
            let trace = mirror_em::solver::EmTrace::read_jsonl(std::io::BufReader::new(file))
                .map_err(|e| format!("{}: {e}", a.trace.display()))?;
            let mut cfg: ExperimentConfig = serde_json::from_value(trace.header.config)
                .map_err(|e| format!("{}: header config: {e}", a.trace.display()))?;
            cfg.output = a.out.clone().unwrap_or_else(|| PathBuf::from("runs"));
            cfg
        }
    };
    cfg.validate()?;
    Ok(cfg)
}
