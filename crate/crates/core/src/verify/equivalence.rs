//! Cross-algorithm checks: online EM against explicit stochastic mirror
//! descent, and EM run in two coordinate systems.

use nalgebra::{DMatrix, DVector};

use super::independent::decode;
use super::{Direction, OracleReport};
use crate::baseline::{gd_step_mean_coords, gd_step_natural};
use crate::error::{Error, Result};
use crate::models::LatentModel;
use crate::solver::{online_indices, run_em, run_online_em_updates, EmOptions, OnlineOptions, StepSchedule};
use crate::tolerances::Tolerances;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// `E[S(x_i, z) | x_i]` from the usual-parameter posterior.
fn single_sample_stats(model: &LatentModel, theta: &DVector<f64>, i: usize) -> Result<DVector<f64>> {
    let dec = decode(model, theta)?;
    let x = model.data().row(i);
    let mut s = DVector::zeros(dec.stat_len());
    for (j, r) in dec.posterior(x).into_iter().enumerate() {
        dec.add_complete_stats(x, j, r, &mut s);
    }
    Ok(s)
}

/// Online EM against `∇A(θ_{t+1}) = ∇A(θ_t) - γ_t ∇L_{i_t}(θ_t)` on the same
/// index sequence; compares the iterates at every step.
pub fn smd_equivalence(
    model: &LatentModel,
    theta0: &DVector<f64>,
    updates: usize,
    schedule: StepSchedule,
    seed: u64,
) -> Result<OracleReport> {
    let fam = model.family()?.clone();
    let opts = OnlineOptions { full_diagnostics: false, store_params: true };
    let trace = run_online_em_updates(model, &model.natural(theta0.clone())?, updates, schedule, seed, &opts)?;
    let mut report = OracleReport::new("smd_equivalence", "reparam", Tolerances::DEFAULT.reparam, Direction::Below);
    if trace.failed() {
        report.note = Some(format!("online run stopped early: {:?}", trace.status));
    }
    let mut online: Vec<Vec<f64>> = trace.records.iter().filter_map(|r| r.params.clone()).collect();
    online.push(trace.final_params.clone());

    let mut theta = theta0.clone();
    for (t, &i) in online_indices(model.n(), updates, seed).iter().enumerate() {
        report.observe_slice(&online[t], theta.as_slice());
        if t + 1 >= online.len() {
            break;
        }
        let mu = fam.mean_map(&theta)?;
        let grad_i = &mu - single_sample_stats(model, &theta, i)?;
        let target = mu - grad_i * schedule.gamma(t + 1);
        theta = fam.inverse_mean_map(&target)?;
    }
    if online.len() == updates + 1 {
        report.observe_slice(&online[updates], theta.as_slice());
    } else {
        report.pass = false;
    }
    Ok(report.finish())
}

/// Jacobian of `∇A*` at `μ` by central differences, i.e. `∇²A*(μ)`.
fn dual_hessian_fd(model: &LatentModel, mu: &DVector<f64>) -> Result<DMatrix<f64>> {
    let fam = model.family()?;
    let d = mu.len();
    let mut jac = DMatrix::zeros(d, d);
    for i in 0..d {
        let mut h = 1e-6 * (1.0 + mu[i].abs());
        let mut tries = 0;
        loop {
            let mut plus = mu.clone();
            let mut minus = mu.clone();
            plus[i] += h;
            minus[i] -= h;
            if fam.in_mean_domain(&plus) && fam.in_mean_domain(&minus) {
                let col = (fam.inverse_mean_map(&plus)? - fam.inverse_mean_map(&minus)?) / (2.0 * h);
                jac.set_column(i, &col);
                break;
            }
            tries += 1;
            if tries > 30 {
                return Err(Error::InvalidInput("dual Hessian probe cannot stay in the mean domain".into()));
            }
            h *= 0.5;
        }
    }
    Ok((&jac + jac.transpose()) * 0.5)
}

/// Paired-iterate results of [`reparam_invariance`].
#[derive(Debug, Clone)]
pub struct ReparamReport {
    /// Complete-data KL between paired iterates.
    pub iterates: OracleReport,
    /// Natural decrement from the natural and the mean coordinates.
    pub decrement: OracleReport,
}

/// EM with loop state `θ` against EM with loop state `μ`, both for `iters` steps.
pub fn reparam_invariance(model: &LatentModel, theta0: &DVector<f64>, iters: usize) -> Result<ReparamReport> {
    let fam = model.family()?.clone();
    let opts = EmOptions { tol: 0.0, natural_decrement: true, missing_info_from: None, store_params: true };
    let trace = run_em(model, &model.natural(theta0.clone())?, iters, &opts)?;
    let mut iterates =
        OracleReport::new("reparam_invariance_em", "reparam", Tolerances::DEFAULT.reparam, Direction::Below);
    let mut decrement =
        OracleReport::new("reparam_natural_decrement", "reparam_decrement", REPARAM_DECREMENT_REL, Direction::Below);
    if trace.failed() {
        iterates.note = Some(format!("natural-coordinate run stopped early: {:?}", trace.status));
        iterates.pass = false;
    }
    let mut natural: Vec<(DVector<f64>, f64)> = trace
        .records
        .iter()
        .filter_map(|r| r.params.as_ref().map(|p| (DVector::from_column_slice(p), r.natural_decrement.unwrap_or(f64::NAN))))
        .collect();
    natural.push((DVector::from_column_slice(&trace.final_params), f64::NAN));

    let mut mu = fam.mean_map(theta0)?;
    for (theta_nat, dec_nat) in &natural {
        let theta_mean = fam.inverse_mean_map(&mu)?;
        let kl = model.complete_data_kl(&model.natural(theta_nat.clone())?, &model.natural(theta_mean.clone())?)?;
        iterates.observe_value(kl.abs(), kl.abs());
        if dec_nat.is_finite() {
            let g = model.nll_gradient_values(&theta_mean)?;
            let jac = dual_hessian_fd(model, &mu)?;
            let dec_mean = g.dot(&(&jac * &g));
            decrement.observe_value((dec_nat - dec_mean).abs(), rel(*dec_nat, dec_mean));
        }
        let dec = decode(model, &theta_mean)?;
        let mut next = DVector::zeros(dec.stat_len());
        let n = model.n() as f64;
        for x in model.data().rows() {
            for (j, r) in dec.posterior(x).into_iter().enumerate() {
                dec.add_complete_stats(x, j, r / n, &mut next);
            }
        }
        mu = next;
    }
    Ok(ReparamReport { iterates: iterates.finish(), decrement: decrement.finish() })
}

/// Relative agreement required between the two natural-decrement paths; the
/// mean-coordinate path uses a finite-difference `∇²A*`.
pub const REPARAM_DECREMENT_REL: f64 = 1e-6;

/// Required complete-data KL between natural- and mean-coordinate GD iterates.
pub const GD_CONTROL_MIN_KL: f64 = 1e-3;

/// Plain gradient descent in natural and in mean coordinates from the same
/// start; reports the complete-data KL between the iterates after `steps`.
pub fn gd_reparam_control(model: &LatentModel, theta0: &DVector<f64>, steps: usize, step: f64) -> Result<OracleReport> {
    let fam = model.family()?.clone();
    let mut theta = theta0.clone();
    let mut mu = fam.mean_map(theta0)?;
    for _ in 0..steps {
        theta = gd_step_natural(model, &theta, step)?;
        mu = gd_step_mean_coords(model, &mu, step)?;
    }
    let other = fam.inverse_mean_map(&mu)?;
    let kl = model.complete_data_kl(&model.natural(theta)?, &model.natural(other)?)?;
    let mut report = OracleReport::new("gd_reparam_control", "gd_control_min_kl", GD_CONTROL_MIN_KL, Direction::Above);
    report.observe_value(kl, kl);
    Ok(report.finish())
}
