//! MAP-EM under a conjugate prior: moment matching on statistics shrunk
//! towards the prior mean.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{decrement_from_gradient, EmOptions, EmTrace, IterRecord, TraceHeader, TraceStatus};
use crate::error::{Error, Result};
use crate::expfam::{FamilySpec, NaturalParams};
use crate::models::LatentModel;

/// Conjugate prior `p(θ) ∝ exp(n0 (⟨m0, θ⟩ - A(θ)))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    /// Prior mean of the sufficient statistics; must be interior.
    pub m0: Vec<f64>,
    /// Prior strength in pseudo-observations.
    pub n0: f64,
}

impl Prior {
    pub fn new(family: &FamilySpec, m0: DVector<f64>, n0: f64) -> Result<Self> {
        if !(n0 > 0.0) || !n0.is_finite() {
            return Err(Error::ImproperPrior(format!("prior strength must be positive, got {n0}")));
        }
        family
            .check_mean(&m0)
            .map_err(|e| Error::ImproperPrior(format!("prior mean not interior: {e}")))?;
        Ok(Prior { m0: m0.iter().copied().collect(), n0 })
    }

    fn m0(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.m0)
    }

    /// `(n s + n0 m0) / (n + n0)`.
    pub fn shrink(&self, n: usize, s: &DVector<f64>) -> DVector<f64> {
        let n = n as f64;
        (s * n + self.m0() * self.n0) / (n + self.n0)
    }

    /// `(n L(θ) - n0 (⟨m0, θ⟩ - A(θ))) / (n + n0)`.
    pub fn objective(&self, family: &FamilySpec, n: usize, nll: f64, theta: &DVector<f64>) -> Result<f64> {
        let n = n as f64;
        let log_prior = self.m0().dot(theta) - family.log_partition(theta)?;
        Ok((n * nll - self.n0 * log_prior) / (n + self.n0))
    }
}

pub fn run_map_em(
    model: &LatentModel,
    theta0: &NaturalParams,
    iters: usize,
    prior: &Prior,
    opts: &EmOptions,
) -> Result<EmTrace> {
    let fam = model.family()?.clone();
    let prior = Prior::new(&fam, prior.m0(), prior.n0)?;
    if iters == 0 {
        return Err(Error::InvalidInput("need at least one iteration".into()));
    }
    let n = model.n();
    let mut theta = model.natural(theta0.values().clone())?.into_values();
    let mut records = Vec::with_capacity(iters);
    let mut status = TraceStatus::Completed;
    for t in 1..=iters {
        let e = model.e_step_values(&theta)?;
        let mu = fam.mean_map(&theta)?;
        let target = prior.shrink(n, &e.stats);
        let next = match fam.inverse_mean_map(&target) {
            Ok(v) => v,
            Err(err) => {
                status = TraceStatus::Failed { at: t, reason: err.to_string() };
                break;
            }
        };
        let mut rec = IterRecord::new(t, prior.objective(&fam, n, e.nll, &theta)?);
        rec.kl_step = fam.bregman(&theta, &next)?;
        rec.bregman_stat = fam.dual_bregman(&target, &mu)?;
        if opts.natural_decrement {
            rec.natural_decrement = Some(decrement_from_gradient(model, &theta, &(&mu - &target))?);
        }
        if opts.store_params {
            rec.params = Some(theta.iter().copied().collect());
        }
        let stop = opts.should_stop(rec.bregman_stat);
        records.push(rec);
        theta = next;
        if stop {
            status = TraceStatus::Converged { at: t };
            break;
        }
    }
    let final_nll = prior.objective(&fam, n, model.nll_values(&theta)?, &theta)?;
    let mut header = TraceHeader::new("map");
    header.objective = "map".into();
    header.config = serde_json::to_value(&prior)?;
    Ok(EmTrace {
        header,
        records,
        final_params: theta.iter().copied().collect(),
        final_nll,
        status,
        events: Vec::new(),
    })
}
