//! Post-hoc checks of the convergence inequalities along a trace.

use serde::{Deserialize, Serialize};

use super::EmTrace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateBoundReport {
    pub iterations: usize,
    /// Steps `t` where `D_A(θ_t, θ_{t+1}) > L_t - L_{t+1} + slack`.
    pub per_step_violations: Vec<usize>,
    /// Steps where the objective increased by more than the monotonicity slack.
    pub monotone_violations: Vec<usize>,
    /// `min_t D_A(θ_t, θ_{t+1})`.
    pub min_kl_step: f64,
    /// `(L_1 - L_{T+1}) / T`.
    pub average_decrease: f64,
    pub rate_pass: bool,
    /// `max_t |kl_step_t - bregman_stat_t|`.
    pub stationarity_residual: f64,
    pub stationarity_pass: bool,
    pub pass: bool,
}

/// Checks on an exact (or MAP) EM trace:
/// each step's KL is paid for by the objective decrease, the minimum step KL
/// is at most the average decrease, and the step KL equals the Bregman
/// stationarity measure.
pub fn check_rate_bounds(trace: &EmTrace, slack: f64, monotone_slack: f64, agreement: f64) -> RateBoundReport {
    let path = trace.objective_path();
    let t_len = trace.records.len();
    let mut per_step_violations = Vec::new();
    let mut monotone_violations = Vec::new();
    let mut residual: f64 = 0.0;
    for (i, r) in trace.records.iter().enumerate() {
        let decrease = path[i] - path[i + 1];
        if !(r.kl_step <= decrease + slack) {
            per_step_violations.push(r.t);
        }
        if !(path[i + 1] <= path[i] + monotone_slack) {
            monotone_violations.push(r.t);
        }
        residual = residual.max((r.kl_step - r.bregman_stat).abs());
    }
    let min_kl_step = trace.records.iter().map(|r| r.kl_step).fold(f64::INFINITY, f64::min);
    let average_decrease = if t_len > 0 { (path[0] - path[t_len]) / t_len as f64 } else { 0.0 };
    let rate_pass = t_len > 0 && min_kl_step <= average_decrease + slack;
    let stationarity_pass = residual <= agreement;
    RateBoundReport {
        iterations: t_len,
        pass: rate_pass && stationarity_pass && per_step_violations.is_empty() && monotone_violations.is_empty(),
        per_step_violations,
        monotone_violations,
        min_kl_step,
        average_decrease,
        rate_pass,
        stationarity_residual: residual,
        stationarity_pass,
    }
}

/// Gaps below this are treated as converged when forming contraction ratios.
pub const LINEAR_RATE_NOISE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRateReport {
    /// Iterations `t` with a recorded `λ_max`.
    pub tail: Vec<usize>,
    /// `(L_{t+1} - L*) / (L_t - L*)` for tail steps whose gap is above the noise floor.
    pub contractions: Vec<f64>,
    /// Running maximum of `λ_max` over the tail, aligned with `tail`.
    pub rate_bound: Vec<f64>,
    pub max_lambda: f64,
    /// Steps violating `L_{t+1} - L* ≤ r_t (L_t - L*) + additive_slack`.
    pub additive_violations: Vec<usize>,
    /// Steps violating `ratio ≤ r_t + ratio_slack`.
    pub ratio_violations: Vec<usize>,
    pub pass: bool,
}

/// Copy of `trace` keeping `λ_max` only after the last record with
/// `λ_max ≥ 1`, i.e. from where the NLL Hessian is positive-definite on.
pub fn basin_tail(trace: &EmTrace) -> EmTrace {
    let mut out = trace.clone();
    if let Some(last) = out.records.iter().rposition(|r| r.lambda_max_missing.is_some_and(|l| l >= 1.0)) {
        for r in &mut out.records[..=last] {
            r.lambda_max_missing = None;
        }
    }
    out
}

/// Local linear rate against the running maximum of the recorded
/// missing-information eigenvalue.
pub fn check_local_linear_rate(
    trace: &EmTrace,
    loss_star: f64,
    additive_slack: f64,
    ratio_slack: f64,
) -> Result<LinearRateReport> {
    let path = trace.objective_path();
    let tail: Vec<(usize, f64)> = trace
        .records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.lambda_max_missing.map(|l| (i, l)))
        .collect();
    if tail.len() < 5 {
        return Err(Error::InsufficientTail { required: 5, got: tail.len() });
    }
    let mut running = f64::NEG_INFINITY;
    let mut rep = LinearRateReport {
        tail: Vec::new(),
        contractions: Vec::new(),
        rate_bound: Vec::new(),
        max_lambda: f64::NEG_INFINITY,
        additive_violations: Vec::new(),
        ratio_violations: Vec::new(),
        pass: false,
    };
    for &(i, lambda) in &tail {
        running = running.max(lambda);
        let t = trace.records[i].t;
        let gap = path[i] - loss_star;
        let next = path[i + 1] - loss_star;
        rep.tail.push(t);
        rep.rate_bound.push(running);
        if !(next <= running * gap + additive_slack) {
            rep.additive_violations.push(t);
        }
        if gap > LINEAR_RATE_NOISE_FLOOR {
            let ratio = next / gap;
            rep.contractions.push(ratio);
            if !(ratio <= running + ratio_slack) {
                rep.ratio_violations.push(t);
            }
        }
    }
    rep.max_lambda = running;
    rep.pass = rep.additive_violations.is_empty() && rep.ratio_violations.is_empty();
    Ok(rep)
}
