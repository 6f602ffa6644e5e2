//! Plain gradient descent on the NLL in natural coordinates, with a
//! constant step chosen by grid search, and an empirical smoothness probe.

use nalgebra::{Cholesky, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expfam::{gaussian_natural, NaturalParams};
use crate::models::{LatentModel, ModelKind};
use crate::solver::{EmTrace, IterRecord, TraceHeader, TraceStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainGuard {
    /// Mark the run diverged on the first step that leaves the domain.
    Reject,
    /// Halve the step until the iterate is back inside.
    #[default]
    Backtrack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdConfig {
    pub step_size: f64,
    pub iters: usize,
    pub grid: Vec<f64>,
    pub domain_guard: DomainGuard,
}

/// `count` log-spaced values from `max` down to `min`.
pub fn log_grid(max: f64, min: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![max];
    }
    let (a, b) = (max.log10(), min.log10());
    (0..count).map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64)).collect()
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig { step_size: 0.1, iters: 50, grid: log_grid(1.0, 1e-6, 13), domain_guard: DomainGuard::Backtrack }
    }
}

impl GdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() || self.grid.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidInput("grid must be non-empty with positive steps".into()));
        }
        if !(self.step_size >= 0.0) || !self.step_size.is_finite() {
            return Err(Error::InvalidInput("step size must be finite and non-negative".into()));
        }
        if self.iters == 0 {
            return Err(Error::InvalidInput("need at least one iteration".into()));
        }
        Ok(())
    }
}

const MAX_HALVINGS: usize = 60;

/// `θ_{t+1} = θ_t - step · ∇L(θ_t)`. Divergence ends the run with a
/// `Failed` status; it is not an error.
pub fn run_gd(model: &LatentModel, theta0: &NaturalParams, config: &GdConfig) -> Result<EmTrace> {
    config.validate()?;
    let fam = model.family()?.clone();
    let mut theta = model.natural(theta0.values().clone())?.into_values();
    let mut records = Vec::with_capacity(config.iters);
    let mut events = Vec::new();
    let mut status = TraceStatus::Completed;
    let mut final_nll = f64::NAN;
    for t in 1..=config.iters {
        let e = model.e_step_values(&theta)?;
        if !e.nll.is_finite() {
            status = TraceStatus::Failed { at: t, reason: "objective is not finite".into() };
            break;
        }
        let grad = fam.mean_map(&theta)? - &e.stats;
        let mut step = config.step_size;
        let mut halvings = 0;
        let next = loop {
            let cand = &theta - &grad * step;
            match fam.check_natural(&cand) {
                Ok(()) => break Some(cand),
                Err(err) => match config.domain_guard {
                    DomainGuard::Reject => {
                        events.push(format!("t={t}: step left the domain: {err}"));
                        break None;
                    }
                    DomainGuard::Backtrack if halvings < MAX_HALVINGS => {
                        halvings += 1;
                        step *= 0.5;
                    }
                    DomainGuard::Backtrack => break None,
                },
            }
        };
        if halvings > 0 {
            events.push(format!("t={t}: domain guard halved the step {halvings} times"));
        }
        let Some(next) = next else {
            status = TraceStatus::Failed { at: t, reason: "iterate left the natural domain".into() };
            final_nll = e.nll;
            records.push(IterRecord { kl_step: f64::NAN, ..IterRecord::new(t, e.nll) });
            break;
        };
        let mut rec = IterRecord::new(t, e.nll);
        rec.kl_step = fam.bregman(&theta, &next)?;
        rec.bregman_stat = crate::solver::stationarity_from_stats(model, &theta, &e.stats)?;
        records.push(rec);
        theta = next;
    }
    if matches!(status, TraceStatus::Completed) {
        final_nll = model.nll_values(&theta)?;
        if !final_nll.is_finite() {
            status = TraceStatus::Failed { at: config.iters + 1, reason: "objective is not finite".into() };
        }
    } else if final_nll.is_nan() {
        final_nll = f64::INFINITY;
    }
    let mut header = TraceHeader::new("gd");
    header.config = serde_json::json!({ "step_size": config.step_size, "domain_guard": config.domain_guard });
    Ok(EmTrace { header, records, final_params: theta.iter().copied().collect(), final_nll, status, events })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCandidate {
    pub step: f64,
    pub final_nll: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best_step: f64,
    pub best_trace: EmTrace,
    pub candidates: Vec<GridCandidate>,
}

/// Runs every grid step; the best run has the lowest final objective among
/// runs that did not diverge, ties going to the smaller step.
pub fn grid_search_gd(model: &LatentModel, theta0: &NaturalParams, config: &GdConfig) -> Result<GridResult> {
    config.validate()?;
    let mut best: Option<(f64, EmTrace)> = None;
    let mut candidates = Vec::with_capacity(config.grid.len());
    for &step in &config.grid {
        let tr = run_gd(model, theta0, &GdConfig { step_size: step, ..config.clone() })?;
        let diverged = tr.failed();
        candidates.push(GridCandidate { step, final_nll: tr.final_nll, diverged });
        if diverged {
            continue;
        }
        let better = match &best {
            None => true,
            Some((s, b)) => tr.final_nll < b.final_nll || (tr.final_nll == b.final_nll && step < *s),
        };
        if better {
            best = Some((step, tr));
        }
    }
    let (best_step, best_trace) = best.ok_or(Error::AllDiverged)?;
    Ok(GridResult { best_step, best_trace, candidates })
}

/// One gradient step taken in mean coordinates: `μ' = μ - γ (∇²A)⁻¹ ∇_θ L`.
pub fn gd_step_mean_coords(model: &LatentModel, mu: &DVector<f64>, step: f64) -> Result<DVector<f64>> {
    let fam = model.family()?;
    let theta = fam.inverse_mean_map(mu)?;
    let g = model.nll_gradient_values(&theta)?;
    let chol = Cholesky::new(fam.fisher(&theta)?)
        .ok_or_else(|| Error::Solve("Fisher information is not positive-definite".into()))?;
    let next = mu - chol.solve(&g) * step;
    fam.check_mean(&next)?;
    Ok(next)
}

/// One gradient step taken in natural coordinates.
pub fn gd_step_natural(model: &LatentModel, theta: &DVector<f64>, step: f64) -> Result<DVector<f64>> {
    let fam = model.family()?;
    let next = theta - model.nll_gradient_values(theta)? * step;
    fam.check_natural(&next)?;
    Ok(next)
}

/// Coordinates in which gradients are differenced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothnessCoords {
    Natural,
    /// `(mean, variance)` for univariate Gaussian models.
    MeanVariance,
}

/// Box of univariate Gaussian parameters to sample pairs from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionSampler {
    pub mean: (f64, f64),
    pub variance: (f64, f64),
}

impl RegionSampler {
    /// Means within `±half_width` of `centre`, variances in `[v/2, 2v]`.
    pub fn around(centre: f64, half_width: f64, v: f64) -> Self {
        RegionSampler { mean: (centre - half_width, centre + half_width), variance: (0.5 * v, 2.0 * v) }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let u = |rng: &mut ChaCha8Rng, (a, b): (f64, f64)| if a == b { a } else { rng.random_range(a..b) };
        (u(rng, self.mean), u(rng, self.variance))
    }
}

fn point(model: &LatentModel, m: f64, v: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    match model.kind() {
        ModelKind::SingleGaussian if model.data().p() == 1 => {
            Ok((DVector::from_vec(vec![m, v]), gaussian_natural(m, v)))
        }
        ModelKind::UnitVarianceGaussian => Ok((DVector::from_element(1, m), DVector::from_element(1, m))),
        other => Err(Error::Unsupported(format!("smoothness probe on {other:?}"))),
    }
}

/// Gradient of the NLL in the requested coordinates.
fn gradient(model: &LatentModel, psi: &DVector<f64>, theta: &DVector<f64>, coords: SmoothnessCoords) -> Result<DVector<f64>> {
    let g = model.nll_gradient_values(theta)?;
    if coords == SmoothnessCoords::Natural || psi.len() == 1 {
        return Ok(g);
    }
    let (m, v) = (psi[0], psi[1]);
    // chain rule through θ = (m/v, -1/(2v))
    Ok(DVector::from_vec(vec![g[0] / v, -m * g[0] / (v * v) + g[1] / (2.0 * v * v)]))
}

/// `max ‖∇L(a) - ∇L(b)‖ / ‖a - b‖` over `pairs` random pairs from `region`.
pub fn empirical_smoothness(
    model: &LatentModel,
    region: &RegionSampler,
    pairs: usize,
    seed: u64,
    coords: SmoothnessCoords,
) -> Result<f64> {
    if region.variance.0 <= 0.0 {
        return Err(Error::domain("gaussian", "sampled variances must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    let mut done = 0;
    while done < pairs {
        let (ma, va) = region.draw(&mut rng);
        let (mb, vb) = region.draw(&mut rng);
        let (pa, ta) = point(model, ma, va)?;
        let (pb, tb) = point(model, mb, vb)?;
        let (xa, xb) = match coords {
            SmoothnessCoords::Natural => (&ta, &tb),
            SmoothnessCoords::MeanVariance => (&pa, &pb),
        };
        let dist = (xa - xb).norm();
        if dist == 0.0 {
            continue;
        }
        let ga = gradient(model, &pa, &ta, coords)?;
        let gb = gradient(model, &pb, &tb, coords)?;
        best = best.max((ga - gb).norm() / dist);
        done += 1;
    }
    Ok(best)
}

#[cfg(test)]
mod tests;
