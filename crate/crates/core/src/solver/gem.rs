//! Generalized EM: inexact M-steps with a multiplicative (block-coordinate)
//! or additive (inner gradient descent) optimality certificate.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{decrement_from_gradient, EmOptions, EmTrace, IterRecord, TraceHeader, TraceStatus};
use crate::error::{Error, Result};
use crate::expfam::{FamilySpec, NaturalParams};
use crate::models::LatentModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schedule", rename_all = "snake_case")]
pub enum EpsilonSchedule {
    /// `ε_t = scale / t²`.
    InverseSquare { scale: f64 },
    Constant { epsilon: f64 },
    /// `ε_t = values[t-1]`, zero past the end.
    Explicit { values: Vec<f64> },
}

impl EpsilonSchedule {
    pub fn epsilon(&self, t: usize) -> f64 {
        match self {
            EpsilonSchedule::InverseSquare { scale } => scale / (t as f64 * t as f64),
            EpsilonSchedule::Constant { epsilon } => *epsilon,
            EpsilonSchedule::Explicit { values } => values.get(t - 1).copied().unwrap_or(0.0),
        }
    }

    /// `Σ_{t ≤ iters} ε_t`.
    pub fn total(&self, iters: usize) -> f64 {
        (1..=iters).map(|t| self.epsilon(t)).sum()
    }

    fn validate(&self) -> Result<()> {
        let bad = match self {
            EpsilonSchedule::InverseSquare { scale } => !(*scale >= 0.0),
            EpsilonSchedule::Constant { epsilon } => !(*epsilon >= 0.0),
            EpsilonSchedule::Explicit { values } => values.iter().any(|v| !(*v >= 0.0)),
        };
        if bad {
            Err(Error::InvalidInput("additive tolerances must be non-negative".into()))
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GemPolicy {
    Exact,
    /// Block-coordinate M-step: the weights plus one uniformly drawn
    /// component block are set to their exact optimum. `c` is the claimed
    /// multiplicative constant (`1/k` for this update).
    Multiplicative { c: f64 },
    /// Gradient descent on the surrogate until `Q_t(φ) - min Q_t ≤ ε_t`.
    /// `ε_t = 0` means the exact minimizer.
    Additive { epsilons: EpsilonSchedule, max_inner: usize },
}

impl GemPolicy {
    pub fn validate(&self) -> Result<()> {
        match self {
            GemPolicy::Exact => Ok(()),
            GemPolicy::Multiplicative { c } => {
                if *c > 0.0 && *c <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidInput(format!("multiplicative constant {c} outside (0, 1]")))
                }
            }
            GemPolicy::Additive { epsilons, max_inner } => {
                if *max_inner == 0 {
                    return Err(Error::InvalidInput("inner iteration cap must be positive".into()));
                }
                epsilons.validate()
            }
        }
    }
}

/// Weights plus component block `j` at their exact optimum; the other blocks stay put.
fn block_step(fam: &FamilySpec, theta: &DVector<f64>, s: &DVector<f64>, j: usize) -> Result<DVector<f64>> {
    let FamilySpec::Mixture { k, component } = fam else {
        return fam.inverse_mean_map(s);
    };
    let k = *k;
    let mut pi: Vec<f64> = (0..k - 1).map(|i| s[i]).collect();
    pi.push(1.0 - pi.iter().sum::<f64>());
    if let Some(i) = pi.iter().position(|p| !(*p > 0.0)) {
        return Err(Error::domain(fam.name(), format!("weight of component {i} must be positive")));
    }
    let mut blocks: Vec<DVector<f64>> = (0..k).map(|i| fam.mixture_block(theta, i)).collect::<Result<_>>()?;
    blocks[j] = component.inverse_mean_map(&(fam.mixture_block(s, j)? / pi[j]))?;
    fam.mixture_assemble(&pi, &blocks)
}

/// Armijo-backtracked gradient descent on `Q(φ) = A(φ) - ⟨s, φ⟩` from `start`.
fn inexact_step(
    model: &LatentModel,
    start: &DVector<f64>,
    s: &DVector<f64>,
    q_star: f64,
    epsilon: f64,
    max_inner: usize,
) -> Result<DVector<f64>> {
    let fam = model.family()?;
    let q = |phi: &DVector<f64>| model.surrogate_from_stats(s, phi);
    let mut phi = start.clone();
    let mut qv = q(&phi)?;
    let mut lr = 1.0;
    for it in 0..max_inner {
        if it > 0 && qv - q_star <= epsilon {
            return Ok(phi);
        }
        let g = fam.mean_map(&phi)? - s;
        let gg = g.dot(&g);
        if gg == 0.0 {
            return Ok(phi);
        }
        let mut eta = lr;
        loop {
            let cand = &phi - &g * eta;
            if fam.in_natural_domain(&cand) {
                let qc = q(&cand)?;
                if qc <= qv - 1e-4 * eta * gg {
                    phi = cand;
                    qv = qc;
                    break;
                }
            }
            eta *= 0.5;
            if eta < 1e-30 {
                return Err(Error::Certificate { epsilon, gap: qv - q_star, iterations: it });
            }
        }
        lr = (eta * 2.0).min(1e6);
    }
    if qv - q_star <= epsilon {
        Ok(phi)
    } else {
        Err(Error::Certificate { epsilon, gap: qv - q_star, iterations: max_inner })
    }
}

/// Generalized EM. Early stopping follows `opts.tol` as in exact EM.
pub fn run_generalized_em(
    model: &LatentModel,
    theta0: &NaturalParams,
    iters: usize,
    policy: &GemPolicy,
    seed: u64,
    opts: &EmOptions,
) -> Result<EmTrace> {
    policy.validate()?;
    if iters == 0 {
        return Err(Error::InvalidInput("need at least one iteration".into()));
    }
    let fam = model.family()?.clone();
    let k = model.k();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = model.natural(theta0.values().clone())?.into_values();
    let mut records = Vec::with_capacity(iters);
    let mut status = TraceStatus::Completed;
    for t in 1..=iters {
        let e = model.e_step_values(&theta)?;
        let mu = fam.mean_map(&theta)?;
        let exact = fam.inverse_mean_map(&e.stats);
        let q_star = match &exact {
            Ok(th) => Some(model.surrogate_from_stats(&e.stats, th)?),
            Err(_) => None,
        };
        let step = match policy {
            GemPolicy::Exact => exact.clone(),
            GemPolicy::Multiplicative { .. } => {
                let j = rng.random_range(0..k);
                block_step(&fam, &theta, &e.stats, j)
            }
            GemPolicy::Additive { epsilons, max_inner } => {
                let eps = epsilons.epsilon(t);
                match (&exact, q_star) {
                    (Ok(th), _) if eps == 0.0 => Ok(th.clone()),
                    (Ok(_), Some(qs)) => match inexact_step(model, &theta, &e.stats, qs, eps, *max_inner) {
                        Err(err @ Error::Certificate { .. }) => return Err(err),
                        other => other,
                    },
                    (Err(err), _) => Err(err.clone()),
                    _ => unreachable!("q_star is set whenever the exact step exists"),
                }
            }
        };
        let next = match step {
            Ok(v) => v,
            Err(err) => {
                status = TraceStatus::Failed { at: t, reason: err.to_string() };
                break;
            }
        };
        let mut rec = IterRecord::new(t, e.nll);
        rec.kl_step = fam.bregman(&theta, &next)?;
        rec.bregman_stat = fam.dual_bregman(&e.stats, &mu)?;
        if let Some(qs) = q_star {
            rec.surrogate_gap = Some(model.surrogate_from_stats(&e.stats, &next)? - qs);
        }
        if opts.natural_decrement {
            rec.natural_decrement = Some(decrement_from_gradient(model, &theta, &(&mu - &e.stats))?);
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
    let final_nll = model.nll_values(&theta)?;
    let mut header = TraceHeader::new("gem");
    header.seed = Some(seed);
    header.config = serde_json::to_value(policy)?;
    Ok(EmTrace {
        header,
        records,
        final_params: theta.iter().copied().collect(),
        final_nll,
        status,
        events: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GemMultiplicativeReport {
    pub seeds: usize,
    pub iterations: usize,
    /// `min_t` of the seed-averaged stationarity measure.
    pub min_mean_stat: f64,
    pub argmin_t: usize,
    /// Seed average of `(1/c)(L_1 - L_{T+1})/T`.
    pub mean_bound: f64,
    /// Standard error of the per-seed `bound - stat` difference at `argmin_t`.
    pub standard_error: f64,
    /// Seed average of `min_t` of the per-seed stationarity measure.
    pub mean_of_min: f64,
    pub pass: bool,
}

/// In-expectation check over an ensemble of seeds, with `z` standard errors of slack.
pub fn check_gem_multiplicative(traces: &[EmTrace], c: f64, z: f64) -> Result<GemMultiplicativeReport> {
    if traces.is_empty() {
        return Err(Error::InvalidInput("no traces".into()));
    }
    let len = traces[0].records.len();
    if len == 0 || traces.iter().any(|tr| tr.records.len() != len) {
        return Err(Error::InvalidInput("traces must be non-empty and of equal length".into()));
    }
    let m = traces.len() as f64;
    let mut mean_stat = vec![0.0; len];
    for tr in traces {
        for (acc, r) in mean_stat.iter_mut().zip(&tr.records) {
            *acc += r.bregman_stat / m;
        }
    }
    let (argmin, &min_mean_stat) = mean_stat
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let bounds: Vec<f64> = traces.iter().map(|tr| (tr.records[0].nll - tr.final_nll) / (c * len as f64)).collect();
    let diffs: Vec<f64> = traces.iter().zip(&bounds).map(|(tr, b)| b - tr.records[argmin].bregman_stat).collect();
    let mean_diff = diffs.iter().sum::<f64>() / m;
    let var = if traces.len() > 1 {
        diffs.iter().map(|d| (d - mean_diff).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    let se = (var / m).sqrt();
    let mean_of_min = traces.iter().map(|tr| tr.min_bregman_stat()).sum::<f64>() / m;
    Ok(GemMultiplicativeReport {
        seeds: traces.len(),
        iterations: len,
        min_mean_stat,
        argmin_t: traces[0].records[argmin].t,
        mean_bound: bounds.iter().sum::<f64>() / m,
        standard_error: se,
        mean_of_min,
        pass: mean_diff >= -z * se,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GemAdditiveReport {
    pub min_stat: f64,
    /// `(L_1 - L_{T+1})/T + (1/T) Σ ε_t`.
    pub bound: f64,
    /// Steps whose certificate exceeded `ε_t`.
    pub certificate_violations: Vec<usize>,
    pub pass: bool,
}

pub fn check_gem_additive(trace: &EmTrace, epsilons: &EpsilonSchedule, slack: f64) -> GemAdditiveReport {
    let len = trace.records.len();
    let min_stat = trace.min_bregman_stat();
    let bound = if len > 0 {
        (trace.records[0].nll - trace.final_nll + epsilons.total(len)) / len as f64
    } else {
        f64::NAN
    };
    let certificate_violations: Vec<usize> = trace
        .records
        .iter()
        .filter(|r| r.surrogate_gap.is_some_and(|g| g > epsilons.epsilon(r.t) + slack))
        .map(|r| r.t)
        .collect();
    GemAdditiveReport {
        min_stat,
        bound,
        pass: len > 0 && min_stat <= bound + slack && certificate_violations.is_empty(),
        certificate_violations,
    }
}
