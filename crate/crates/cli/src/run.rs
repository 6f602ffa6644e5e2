//! Executes a resolved configuration: one job per seed, then the
//! cross-seed checks, then the files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use mirror_em::baseline::{empirical_smoothness, grid_search_gd, run_gd, RegionSampler};
use mirror_em::models::{faithful, init_laplace, init_params, LaplaceParams, MixtureParams};
use mirror_em::solver::{
    check_estep_bound, check_gem_additive, check_gem_multiplicative, check_rate_bounds, run_em,
    run_estep_analysis, run_generalized_em, run_map_em, run_online_em, EmTrace, GemPolicy, OnlineOptions, Prior,
    TraceStatus,
};
use mirror_em::synthetic::{generate_synthetic, GroundTruth};
use mirror_em::verify::run_suite;
use mirror_em::{Dataset, Error, LatentModel, NaturalParams, Tolerances};

use crate::config::{DataSource, ExperimentConfig, Mode};

const TOL: Tolerances = Tolerances::DEFAULT;

/// Environment variable that sizes the seed-sweep thread pool.
pub const THREADS_ENV: &str = "MIRROR_EM_THREADS";

#[derive(Debug)]
pub enum Failure {
    /// Bad input or configuration.
    Config(String),
    /// The algorithm itself broke down.
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Numerical(_) => 2,
        }
    }

    fn for_seed(self, seed: u64) -> Self {
        match self {
            Failure::Config(m) => Failure::Config(format!("seed {seed}: {m}")),
            Failure::Numerical(m) => Failure::Numerical(format!("seed {seed}: {m}")),
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain { .. }
            | Error::Numerical(_)
            | Error::Solve(_)
            | Error::NonFinite(_)
            | Error::ZeroWeightComponent { .. }
            | Error::Certificate { .. }
            | Error::AllDiverged => Failure::Numerical(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub label: String,
    pub iterations: usize,
    pub final_nll: f64,
    pub min_bregman_stat: Option<f64>,
    pub status: TraceStatus,
    pub file: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub check: String,
    pub seed: Option<u64>,
    pub pass: bool,
    pub detail: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub mode: Mode,
    pub runs: Vec<RunSummary>,
    pub verdicts: Vec<Verdict>,
    pub details: Vec<Value>,
}

impl Report {
    pub fn any_failed_run(&self) -> bool {
        self.runs.iter().any(|r| matches!(r.status, TraceStatus::Failed { .. }))
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    /// 0 on success, 2 if a run broke down numerically, 3 if a check failed.
    pub fn exit_code(&self) -> u8 {
        if self.any_failed_run() {
            2
        } else if !self.all_pass() {
            3
        } else {
            0
        }
    }
}

struct SeedOutput {
    traces: Vec<(String, EmTrace)>,
    verdicts: Vec<Verdict>,
    details: Option<Value>,
}

impl SeedOutput {
    fn trace(label: &str, trace: EmTrace) -> Self {
        SeedOutput { traces: vec![(label.into(), trace)], verdicts: Vec::new(), details: None }
    }
}

fn rate_verdict(trace: &EmTrace, seed: u64) -> Option<Verdict> {
    if trace.failed() {
        return None;
    }
    let r = check_rate_bounds(trace, TOL.rate_slack, TOL.monotone_slack, TOL.kl_agreement);
    Some(Verdict {
        check: "rate_bounds".into(),
        seed: Some(seed),
        pass: r.pass,
        detail: serde_json::to_value(&r).unwrap_or(Value::Null),
    })
}

/// Loads (and optionally generates and standardizes) the data set.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Option<GroundTruth>), Failure> {
    let (data, truth) = match &cfg.data {
        DataSource::Faithful => (faithful(), None),
        DataSource::Csv { path } => (Dataset::from_csv_path(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?, None),
        DataSource::Synthetic { spec, seed } => {
            let (d, t) = generate_synthetic(spec, *seed).map_err(|e| Failure::Config(e.to_string()))?;
            (d, Some(t))
        }
    };
    let data = if cfg.standardize() { data.standardize().0 } else { data };
    Ok((data, truth))
}

struct Context {
    cfg: ExperimentConfig,
    model: LatentModel,
}

impl Context {
    fn start(&self, seed: u64) -> Result<NaturalParams, Failure> {
        let params: MixtureParams = match &self.cfg.init.params {
            Some(p) => read_json(p)?,
            None => init_params(&self.model, self.cfg.init.method, seed)?,
        };
        Ok(self.model.from_standard(&params)?)
    }

    fn laplace_start(&self, seed: u64) -> Result<LaplaceParams, Failure> {
        match &self.cfg.init.params {
            Some(p) => read_json(p),
            None => Ok(init_laplace(&self.model, self.cfg.init.method, seed)?),
        }
    }

    fn run_seed(&self, seed: u64) -> Result<SeedOutput, Failure> {
        let cfg = &self.cfg;
        let model = &self.model;
        let opts = cfg.diagnostics.em_options();
        match cfg.mode {
            Mode::Em => {
                let tr = run_em(model, &self.start(seed)?, cfg.iters, &opts)?;
                Ok(SeedOutput { verdicts: rate_verdict(&tr, seed).into_iter().collect(), ..SeedOutput::trace("", tr) })
            }
            Mode::Gd => Ok(SeedOutput::trace("", run_gd(model, &self.start(seed)?, &cfg.gd.gd_config(cfg.iters))?)),
            Mode::Compare => {
                let theta0 = self.start(seed)?;
                let em = run_em(model, &theta0, cfg.iters, &opts)?;
                let grid = grid_search_gd(model, &theta0, &cfg.gd.gd_config(cfg.iters))?;
                let (pe, pg) = (em.objective_path(), grid.best_trace.objective_path());
                let len = pe.len().min(pg.len());
                // first t from which EM stays strictly below GD
                let below_from = (0..len).rev().take_while(|&t| pe[t] < pg[t]).last();
                let target = grid.best_trace.final_nll;
                let reaches_at = pe.iter().position(|&l| l <= target);
                let details = json!({
                    "seed": seed,
                    "best_step": grid.best_step,
                    "candidates": grid.candidates,
                    "em_final_nll": em.final_nll,
                    "gd_final_nll": target,
                    "em_below_gd_from": below_from,
                    "em_reaches_gd_final_at": reaches_at,
                });
                Ok(SeedOutput {
                    verdicts: rate_verdict(&em, seed).into_iter().collect(),
                    traces: vec![("em".into(), em), ("gd".into(), grid.best_trace)],
                    details: Some(details),
                })
            }
            Mode::Online => {
                let oo = OnlineOptions { full_diagnostics: true, store_params: cfg.diagnostics.store_params };
                let tr = run_online_em(model, &self.start(seed)?, cfg.online.passes, cfg.online.schedule, seed, &oo)?;
                Ok(SeedOutput::trace("", tr))
            }
            Mode::Map => {
                let theta0 = self.start(seed)?;
                let fam = model.family()?;
                let m0 = match &cfg.map.prior_mean {
                    Some(m) => DVector::from_column_slice(m),
                    None => fam.mean_map(theta0.values())?,
                };
                let prior = Prior::new(fam, m0, cfg.map.n0)?;
                let tr = run_map_em(model, &theta0, cfg.iters, &prior, &opts)?;
                Ok(SeedOutput { verdicts: rate_verdict(&tr, seed).into_iter().collect(), ..SeedOutput::trace("", tr) })
            }
            Mode::Gem => {
                let policy = cfg.gem.policy(model.k());
                let tr = run_generalized_em(model, &self.start(seed)?, cfg.iters, &policy, seed, &opts)?;
                let verdict = match &policy {
                    GemPolicy::Additive { epsilons, .. } if !tr.failed() => {
                        let r = check_gem_additive(&tr, epsilons, TOL.rate_slack);
                        Some(Verdict {
                            check: "gem_additive".into(),
                            seed: Some(seed),
                            pass: r.pass,
                            detail: serde_json::to_value(&r).unwrap_or(Value::Null),
                        })
                    }
                    GemPolicy::Exact => rate_verdict(&tr, seed),
                    _ => None,
                };
                Ok(SeedOutput { verdicts: verdict.into_iter().collect(), ..SeedOutput::trace("", tr) })
            }
            Mode::Estep => {
                let tr = run_estep_analysis(model, &self.laplace_start(seed)?, cfg.iters)?;
                let verdict = (!tr.failed()).then(|| {
                    let r = check_estep_bound(&tr, TOL.rate_slack, TOL.monotone_slack);
                    Verdict {
                        check: "estep_bound".into(),
                        seed: Some(seed),
                        pass: r.pass,
                        detail: serde_json::to_value(&r).unwrap_or(Value::Null),
                    }
                });
                Ok(SeedOutput { verdicts: verdict.into_iter().collect(), ..SeedOutput::trace("", tr) })
            }
            Mode::Verify => {
                let reports = run_suite(seed)?;
                let verdicts = reports
                    .into_iter()
                    .map(|r| Verdict {
                        check: r.name.clone(),
                        seed: Some(seed),
                        pass: r.pass,
                        detail: serde_json::to_value(&r).unwrap_or(Value::Null),
                    })
                    .collect();
                Ok(SeedOutput { traces: Vec::new(), verdicts, details: None })
            }
            Mode::Smoothness => {
                let s = &cfg.smoothness;
                let centre = model.data().column_means()[0];
                let estimates = s
                    .variances
                    .iter()
                    .map(|&v| {
                        empirical_smoothness(model, &RegionSampler::around(centre, s.half_width, v), s.pairs, seed, s.coords)
                    })
                    .collect::<mirror_em::Result<Vec<f64>>>()?;
                let growth: Vec<f64> = estimates.windows(2).map(|w| w[1] / w[0]).collect();
                let details = json!({
                    "seed": seed,
                    "centre": centre,
                    "variances": s.variances,
                    "estimates": estimates,
                    "growth": growth,
                });
                Ok(SeedOutput { traces: Vec::new(), verdicts: Vec::new(), details: Some(details) })
            }
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Config(format!("cannot create {}: {e}", path.display())))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Config(format!("{}: {e}", path.display()))
}

fn trace_name(mode: Mode, label: &str, seed: u64) -> String {
    if label.is_empty() {
        format!("{}_seed{seed}", mode.as_str())
    } else {
        format!("{}_{label}_seed{seed}", mode.as_str())
    }
}

fn thread_pool() -> Result<rayon::ThreadPool, Failure> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse::<usize>().map_err(|e| Failure::Config(format!("{THREADS_ENV}={v}: {e}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::Config(format!("thread pool: {e}")))
}

/// Runs the experiment and writes traces, CSV mirrors and the report.
pub fn execute(cfg: &ExperimentConfig) -> Result<(Report, PathBuf), Failure> {
    cfg.validate().map_err(Failure::Config)?;
    let (data, truth) = if cfg.mode == Mode::Verify { (faithful(), None) } else { load_data(cfg)? };
    let model = LatentModel::with_shared_data(cfg.model_kind(), Arc::new(data.clone()))
        .map_err(|e| Failure::Config(e.to_string()))?;
    let ctx = Context { cfg: cfg.clone(), model };

    let results: Vec<Result<SeedOutput, Failure>> =
        thread_pool()?.install(|| cfg.seeds.par_iter().map(|&s| ctx.run_seed(s)).collect());

    let out_dir = &cfg.output;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    if let Some(truth) = truth {
        let p = out_dir.join("data.csv");
        data.write_csv(create(&p)?).map_err(Failure::from)?;
        let p = out_dir.join("ground_truth.json");
        let mut w = create(&p)?;
        serde_json::to_writer_pretty(&mut w, &truth).map_err(|e| Failure::Config(e.to_string()))?;
        w.flush().map_err(io_err(&p))?;
    }

    let mut report = Report { mode: cfg.mode, runs: Vec::new(), verdicts: Vec::new(), details: Vec::new() };
    let mut gem_traces = Vec::new();
    for (&seed, result) in cfg.seeds.iter().zip(results) {
        let out = result.map_err(|f| f.for_seed(seed))?;
        for (label, mut tr) in out.traces {
            tr.header.seed = Some(seed);
            tr.header.config = serde_json::to_value(cfg.for_seed(seed)).map_err(|e| Failure::Config(e.to_string()))?;
            let name = trace_name(cfg.mode, &label, seed);
            let jsonl = out_dir.join(format!("{name}.jsonl"));
            let mut w = create(&jsonl)?;
            tr.write_jsonl(&mut w)?;
            w.flush().map_err(io_err(&jsonl))?;
            let csv = out_dir.join(format!("{name}.csv"));
            let mut w = create(&csv)?;
            tr.write_csv(&mut w)?;
            w.flush().map_err(io_err(&csv))?;
            report.runs.push(RunSummary {
                seed,
                label: if label.is_empty() { cfg.mode.as_str().into() } else { label },
                iterations: tr.records.len(),
                final_nll: tr.final_nll,
                min_bregman_stat: tr.records.iter().any(|r| r.bregman_stat.is_finite()).then(|| tr.min_bregman_stat()),
                status: tr.status.clone(),
                file: format!("{name}.jsonl"),
            });
            if cfg.mode == Mode::Gem {
                gem_traces.push(tr);
            }
        }
        report.verdicts.extend(out.verdicts);
        report.details.extend(out.details);
    }

    if let GemPolicy::Multiplicative { c } = cfg.gem.policy(ctx.model.k()) {
        if cfg.mode == Mode::Gem && !gem_traces.iter().any(EmTrace::failed) {
            let r = check_gem_multiplicative(&gem_traces, c, cfg.gem.z)?;
            report.verdicts.push(Verdict {
                check: "gem_multiplicative".into(),
                seed: None,
                pass: r.pass,
                detail: serde_json::to_value(&r).unwrap_or(Value::Null),
            });
        }
    }

    let path = out_dir.join(format!("{}_report.json", cfg.mode.as_str()));
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &report).map_err(|e| Failure::Config(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(&path))?;
    Ok((report, path))
}
