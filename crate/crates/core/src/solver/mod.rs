//! EM as mirror descent with mirror map `A`: `∇A(θ_{t+1}) = ∇A(θ_t) - ∇L(θ_t)`,
//! which is moment matching `θ_{t+1} = ∇A*(s(θ_t))`.

mod bounds;
mod estep;
mod gem;
mod map;
mod online;
mod trace;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expfam::NaturalParams;
use crate::models::LatentModel;
use crate::numeric::{max_abs_matrix, symmetrize};

pub use bounds::{
    basin_tail, check_local_linear_rate, check_rate_bounds, LinearRateReport, RateBoundReport, LINEAR_RATE_NOISE_FLOOR,
};
pub use estep::{check_estep_bound, mean_row_kl, run_estep_analysis, EstepBoundReport};
pub use gem::{
    check_gem_additive, check_gem_multiplicative, run_generalized_em, EpsilonSchedule, GemAdditiveReport,
    GemMultiplicativeReport, GemPolicy,
};
pub use map::{run_map_em, Prior};
pub use online::{online_indices, run_online_em, run_online_em_updates, OnlineOptions, StepSchedule};
pub use trace::{EmTrace, IterRecord, TraceHeader, TraceStatus};

/// Options for the exact EM loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    /// Stop once `bregman_stat < tol`. Zero disables early stopping.
    pub tol: f64,
    pub natural_decrement: bool,
    /// Record `λ_max` of the missing-information matrix from this iteration on.
    pub missing_info_from: Option<usize>,
    pub store_params: bool,
}

impl EmOptions {
    pub(crate) fn should_stop(&self, stat: f64) -> bool {
        self.tol > 0.0 && stat < self.tol
    }
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions { tol: 1e-12, natural_decrement: true, missing_info_from: None, store_params: false }
    }
}

/// `∇A*(∇A(θ) - ∇L(θ))`.
pub fn mirror_step(model: &LatentModel, theta: &NaturalParams) -> Result<NaturalParams> {
    let fam = model.family()?;
    let mu = fam.mean_map(theta.values())?;
    let grad = model.nll_gradient(theta)?;
    model.natural(fam.inverse_mean_map(&(mu - grad))?)
}

/// `D_{A*}(s(θ), ∇A(θ))`; `+∞` when `s(θ)` lies on the mean-domain boundary.
pub fn bregman_stationarity(model: &LatentModel, theta: &NaturalParams) -> Result<f64> {
    let s = model.expected_stats(theta)?;
    stationarity_from_stats(model, theta.values(), &s)
}

pub(crate) fn stationarity_from_stats(model: &LatentModel, theta: &DVector<f64>, s: &DVector<f64>) -> Result<f64> {
    let fam = model.family()?;
    if !fam.in_mean_domain(s) {
        return Ok(f64::INFINITY);
    }
    let mu = fam.mean_map(theta)?;
    fam.dual_bregman(s, &mu)
}

/// `∇Lᵀ (∇²A)⁻¹ ∇L`.
pub fn natural_decrement(model: &LatentModel, theta: &NaturalParams) -> Result<f64> {
    let g = model.nll_gradient(theta)?;
    decrement_from_gradient(model, theta.values(), &g)
}

pub(crate) fn decrement_from_gradient(model: &LatentModel, theta: &DVector<f64>, g: &DVector<f64>) -> Result<f64> {
    let f = model.family()?.fisher(theta)?;
    let chol = Cholesky::new(f).ok_or_else(|| Error::Solve("Fisher information is not positive-definite".into()))?;
    Ok(g.dot(&chol.solve(g)))
}

/// Missing-information diagnostics at one point.
#[derive(Debug, Clone)]
pub struct MissingInformation {
    /// `M = (∇²A)⁻¹ I_{z|x}`.
    pub matrix: DMatrix<f64>,
    pub lambda_max: f64,
    /// `I_{z|x} = ∇²A - ∇²L`.
    pub conditional: DMatrix<f64>,
    /// Symmetrized finite-difference `∇²L`.
    pub hessian: DMatrix<f64>,
    pub fisher: DMatrix<f64>,
    /// Largest entry of `|H - Hᵀ|` before symmetrization.
    pub asymmetry: f64,
    /// Set when the asymmetry exceeds the conditioning threshold.
    pub warning: Option<String>,
}

/// Central finite differences of the analytic gradient, step
/// `h·(1 + |θ_i|)`, halved while a probe leaves the domain.
pub fn nll_hessian_fd(model: &LatentModel, theta: &DVector<f64>, h: f64) -> Result<(DMatrix<f64>, f64)> {
    let d = theta.len();
    let fam = model.family()?;
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..d {
        let mut step = h * (1.0 + theta[i].abs());
        let mut tries = 0;
        loop {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[i] += step;
            minus[i] -= step;
            if fam.in_natural_domain(&plus) && fam.in_natural_domain(&minus) {
                let gp = model.nll_gradient_values(&plus)?;
                let gm = model.nll_gradient_values(&minus)?;
                hess.set_column(i, &((gp - gm) / (2.0 * step)));
                break;
            }
            tries += 1;
            if tries > 30 {
                return Err(Error::domain(fam.name(), "finite-difference probe cannot stay in the domain"));
            }
            step *= 0.5;
        }
    }
    let asym = max_abs_matrix(&(&hess - hess.transpose()));
    Ok((symmetrize(&hess), asym))
}

pub fn missing_information(model: &LatentModel, theta: &NaturalParams) -> Result<MissingInformation> {
    missing_information_values(model, theta.values())
}

pub(crate) fn missing_information_values(model: &LatentModel, theta: &DVector<f64>) -> Result<MissingInformation> {
    let fisher = model.family()?.fisher(theta)?;
    let (hessian, asymmetry) = nll_hessian_fd(model, theta, 1e-5)?;
    let conditional = &fisher - &hessian;
    let chol = Cholesky::new(fisher.clone())
        .ok_or_else(|| Error::Solve("Fisher information is not positive-definite".into()))?;
    let matrix = chol.solve(&conditional);
    let l = chol.l();
    let linv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(l.nrows(), l.nrows()))
        .ok_or_else(|| Error::Solve("triangular solve failed".into()))?;
    let whitened = symmetrize(&(&linv * &conditional * linv.transpose()));
    let lambda_max = SymmetricEigen::new(whitened).eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let warning = (asymmetry > crate::Tolerances::DEFAULT.hessian_asymmetry)
        .then(|| format!("finite-difference Hessian asymmetry {asymmetry:.3e} exceeds threshold"));
    Ok(MissingInformation { matrix, lambda_max, conditional, hessian, fisher, asymmetry, warning })
}

/// Exact EM for `iters` iterations from `theta0`.
pub fn run_em(model: &LatentModel, theta0: &NaturalParams, iters: usize, opts: &EmOptions) -> Result<EmTrace> {
    if iters == 0 {
        return Err(Error::InvalidInput("need at least one iteration".into()));
    }
    let fam = model.family()?.clone();
    let mut theta = model.natural(theta0.values().clone())?.into_values();
    let mut records = Vec::with_capacity(iters);
    let mut status = TraceStatus::Completed;
    for t in 1..=iters {
        let e = model.e_step_values(&theta)?;
        let mu = fam.mean_map(&theta)?;
        let next = match fam.inverse_mean_map(&e.stats) {
            Ok(v) => v,
            Err(err) => {
                status = TraceStatus::Failed { at: t, reason: err.to_string() };
                break;
            }
        };
        let mut rec = IterRecord::new(t, e.nll);
        rec.kl_step = fam.bregman(&theta, &next)?;
        rec.bregman_stat = fam.dual_bregman(&e.stats, &mu)?;
        if opts.natural_decrement {
            rec.natural_decrement = Some(decrement_from_gradient(model, &theta, &(&mu - &e.stats))?);
        }
        if opts.missing_info_from.is_some_and(|t0| t >= t0) {
            rec.lambda_max_missing = Some(missing_information_values(model, &theta)?.lambda_max);
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
    Ok(EmTrace {
        header: TraceHeader::new("em"),
        records,
        final_params: theta.iter().copied().collect(),
        final_nll,
        status,
        events: Vec::new(),
    })
}

#[cfg(test)]
mod tests;
