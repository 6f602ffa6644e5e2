//! EM on Laplace mixtures, tracked through the posterior over labels only.

use serde::{Deserialize, Serialize};

use super::{EmTrace, IterRecord, TraceHeader, TraceStatus};
use crate::error::{Error, Result};
use crate::models::{LaplaceParams, LatentModel, Responsibilities};

fn flatten(p: &LaplaceParams) -> Vec<f64> {
    p.weights.iter().chain(&p.locs).chain(&p.scales).copied().collect()
}

/// `(1/n) Σ_i KL(cat(a_i) ‖ cat(b_i))`.
pub fn mean_row_kl(a: &Responsibilities, b: &Responsibilities) -> f64 {
    let (ra, rb) = (a.matrix(), b.matrix());
    let mut total = 0.0;
    for i in 0..ra.nrows() {
        for j in 0..ra.ncols() {
            let p = ra[(i, j)];
            if p > 0.0 {
                total += p * (p / rb[(i, j)]).ln();
            }
        }
    }
    total / ra.nrows() as f64
}

/// Records `kl_step = bregman_stat = (1/n) Σ_i KL(r_t,i ‖ r_{t+1},i)`.
pub fn run_estep_analysis(model: &LatentModel, params0: &LaplaceParams, iters: usize) -> Result<EmTrace> {
    if iters == 0 {
        return Err(Error::InvalidInput("need at least one iteration".into()));
    }
    let mut params = params0.clone();
    let mut resp = model.laplace_responsibilities(&params)?;
    let mut nll = model.laplace_nll(&params)?;
    let mut records = Vec::with_capacity(iters);
    let mut status = TraceStatus::Completed;
    for t in 1..=iters {
        let next = match model.laplace_m_step(&resp) {
            Ok(p) => p,
            Err(err) => {
                status = TraceStatus::Failed { at: t, reason: err.to_string() };
                break;
            }
        };
        let next_resp = model.laplace_responsibilities(&next)?;
        let d = mean_row_kl(&resp, &next_resp);
        let mut rec = IterRecord::new(t, nll);
        rec.kl_step = d;
        rec.bregman_stat = d;
        rec.params = Some(flatten(&params));
        records.push(rec);
        nll = model.laplace_nll(&next)?;
        params = next;
        resp = next_resp;
    }
    Ok(EmTrace {
        header: TraceHeader::new("estep"),
        records,
        final_params: flatten(&params),
        final_nll: nll,
        status,
        events: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstepBoundReport {
    pub min_divergence: f64,
    pub average_decrease: f64,
    pub monotone_violations: Vec<usize>,
    pub per_step_violations: Vec<usize>,
    pub pass: bool,
}

pub fn check_estep_bound(trace: &EmTrace, slack: f64, monotone_slack: f64) -> EstepBoundReport {
    let path = trace.objective_path();
    let len = trace.records.len();
    let mut monotone_violations = Vec::new();
    let mut per_step_violations = Vec::new();
    for (i, r) in trace.records.iter().enumerate() {
        if !(path[i + 1] <= path[i] + monotone_slack) {
            monotone_violations.push(r.t);
        }
        if !(r.kl_step <= path[i] - path[i + 1] + slack) {
            per_step_violations.push(r.t);
        }
    }
    let min_divergence = trace.min_bregman_stat();
    let average_decrease = if len > 0 { (path[0] - path[len]) / len as f64 } else { f64::NAN };
    EstepBoundReport {
        pass: len > 0
            && min_divergence <= average_decrease + slack
            && monotone_violations.is_empty()
            && per_step_violations.is_empty(),
        min_divergence,
        average_decrease,
        monotone_violations,
        per_step_violations,
    }
}
