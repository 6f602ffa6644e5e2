//! Online EM: a running average of single-sample expected statistics.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmTrace, IterRecord, TraceHeader, TraceStatus};
use crate::error::{Error, Result};
use crate::expfam::NaturalParams;
use crate::models::LatentModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schedule", rename_all = "snake_case")]
pub enum StepSchedule {
    /// `γ_t = 1 / (t + offset)`.
    InverseT { offset: f64 },
    Constant { gamma: f64 },
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::InverseT { offset: 0.0 }
    }
}

impl StepSchedule {
    pub fn gamma(&self, t: usize) -> f64 {
        match self {
            StepSchedule::InverseT { offset } => 1.0 / (t as f64 + offset),
            StepSchedule::Constant { gamma } => *gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            StepSchedule::InverseT { offset } => *offset >= 0.0 && offset.is_finite(),
            StepSchedule::Constant { gamma } => *gamma > 0.0 && *gamma <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("step schedule {self:?} leaves (0, 1]")))
        }
    }
}

/// Uniform sample indices `i_1, …, i_T`, reproducible from the seed.
pub fn online_indices(n: usize, updates: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..updates).map(|_| rng.random_range(0..n)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineOptions {
    /// Evaluate the full-data objective and stationarity after every update.
    pub full_diagnostics: bool,
    pub store_params: bool,
}

impl Default for OnlineOptions {
    fn default() -> Self {
        OnlineOptions { full_diagnostics: true, store_params: false }
    }
}

/// `μ_{t+1} = (1 - γ_t) μ_t + γ_t s_{i_t}(θ_t)`, `θ_{t+1} = ∇A*(μ_{t+1})`,
/// for `passes · n` updates.
pub fn run_online_em(
    model: &LatentModel,
    theta0: &NaturalParams,
    passes: usize,
    schedule: StepSchedule,
    seed: u64,
    opts: &OnlineOptions,
) -> Result<EmTrace> {
    run_online_em_updates(model, theta0, passes * model.n(), schedule, seed, opts)
}

/// Online EM for an explicit number of single-sample updates.
pub fn run_online_em_updates(
    model: &LatentModel,
    theta0: &NaturalParams,
    updates: usize,
    schedule: StepSchedule,
    seed: u64,
    opts: &OnlineOptions,
) -> Result<EmTrace> {
    schedule.validate()?;
    let fam = model.family()?.clone();
    if updates == 0 {
        return Err(Error::InvalidInput("need at least one update".into()));
    }
    let mut theta = model.natural(theta0.values().clone())?.into_values();
    let mut mu = fam.mean_map(&theta)?;
    let mut records = Vec::with_capacity(updates);
    let mut status = TraceStatus::Completed;
    for (step, &i) in online_indices(model.n(), updates, seed).iter().enumerate() {
        let t = step + 1;
        let gamma = schedule.gamma(t);
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidInput(format!("step size {gamma} at t = {t} outside (0, 1]")));
        }
        let si = model.sample_stats(&theta, i)?;
        let mu_next = &mu * (1.0 - gamma) + si * gamma;
        let next = match fam.inverse_mean_map(&mu_next) {
            Ok(v) => v,
            Err(err) => {
                status = TraceStatus::Failed { at: t, reason: err.to_string() };
                break;
            }
        };
        let mut rec = if opts.full_diagnostics {
            let e = model.e_step_values(&theta)?;
            let mut r = IterRecord::new(t, e.nll);
            r.bregman_stat = super::stationarity_from_stats(model, &theta, &e.stats)?;
            r
        } else {
            IterRecord::new(t, f64::NAN)
        };
        rec.kl_step = fam.bregman(&theta, &next)?;
        if opts.store_params {
            rec.params = Some(theta.iter().copied().collect());
        }
        records.push(rec);
        theta = next;
        mu = mu_next;
    }
    let final_nll = model.nll_values(&theta)?;
    let mut header = TraceHeader::new("online");
    header.seed = Some(seed);
    header.config = serde_json::to_value(schedule)?;
    Ok(EmTrace {
        header,
        records,
        final_params: theta.iter().copied().collect(),
        final_nll,
        status,
        events: Vec::new(),
    })
}
