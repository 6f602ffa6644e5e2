//! Latent-variable models: a complete-data family bound to a dataset.
//!
//! All objectives are per-sample averages: `L(θ) = -(1/n) Σ log p(x_i | θ)`,
//! `s(θ) = (1/n) Σ E[S(x_i, z_i) | x_i, θ]`.

mod data;
mod init;
mod laplace;
mod params;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expfam::{self, FamilySpec, MeanParams, NaturalParams};
use crate::numeric::{logsumexp, sigmoid};

pub use data::{faithful, Dataset, FAITHFUL_CSV};
pub use init::{init_laplace, init_params, InitMethod};
pub use laplace::{weighted_lower_median, LaplaceParams};
pub use params::{ComponentParams, MixtureParams};

/// Which latent-variable model to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    GaussianMixture { k: usize },
    BernoulliMixture { k: usize },
    /// One Gaussian, no latent variable.
    SingleGaussian,
    /// One unit-variance univariate Gaussian; smooth in its natural parameter.
    UnitVarianceGaussian,
    /// Univariate Laplace mixture; not an exponential family.
    LaplaceMixture { k: usize },
}

impl ModelKind {
    pub fn k(&self) -> usize {
        match self {
            ModelKind::GaussianMixture { k } | ModelKind::BernoulliMixture { k } | ModelKind::LaplaceMixture { k } => *k,
            _ => 1,
        }
    }

    pub fn is_exponential_family(&self) -> bool {
        !matches!(self, ModelKind::LaplaceMixture { .. })
    }
}

/// Posterior label probabilities, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities(DMatrix<f64>);

impl Responsibilities {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        for i in 0..m.nrows() {
            let s: f64 = m.row(i).sum();
            if (s - 1.0).abs() > 1e-12 || m.row(i).iter().any(|&r| !(0.0..=1.0).contains(&r)) {
                return Err(Error::InvalidInput(format!("row {i} is not a probability vector")));
            }
        }
        Ok(Responsibilities(m))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn k(&self) -> usize {
        self.0.ncols()
    }

    pub fn max_row_sum_error(&self) -> f64 {
        (0..self.n()).map(|i| (self.0.row(i).sum() - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Everything one pass over the data produces.
#[derive(Debug, Clone)]
pub struct EStep {
    pub resp: Responsibilities,
    /// `s(θ)` in the complete family's mean coordinates.
    pub stats: DVector<f64>,
    pub nll: f64,
}

/// A latent-variable model bound to its data.
#[derive(Debug, Clone)]
pub struct LatentModel {
    kind: ModelKind,
    family: Option<Arc<FamilySpec>>,
    component: Option<FamilySpec>,
    data: Arc<Dataset>,
    /// `T(x_i)` of the component family, one row per sample.
    stats: DMatrix<f64>,
    log_base: Vec<f64>,
    mean_log_base: f64,
}

impl LatentModel {
    pub fn new(kind: ModelKind, data: Dataset) -> Result<Self> {
        Self::with_shared_data(kind, Arc::new(data))
    }

    pub fn with_shared_data(kind: ModelKind, data: Arc<Dataset>) -> Result<Self> {
        let p = data.p();
        let component = match kind {
            ModelKind::GaussianMixture { k } | ModelKind::BernoulliMixture { k } | ModelKind::LaplaceMixture { k }
                if k == 0 =>
            {
                return Err(Error::InvalidInput("mixture needs k >= 1".into()))
            }
            ModelKind::GaussianMixture { .. } | ModelKind::SingleGaussian => {
                if p == 1 {
                    Some(FamilySpec::Gaussian)
                } else {
                    Some(FamilySpec::mv_gaussian(p)?)
                }
            }
            ModelKind::BernoulliMixture { .. } => {
                if let Some(i) = (0..data.n()).find(|&i| data.row(i).iter().any(|&v| v != 0.0 && v != 1.0)) {
                    return Err(Error::InvalidInput(format!("bernoulli mixture needs 0/1 data, row {i} is not")));
                }
                if p == 1 {
                    Some(FamilySpec::Bernoulli)
                } else {
                    Some(FamilySpec::product(vec![FamilySpec::Bernoulli; p])?)
                }
            }
            ModelKind::UnitVarianceGaussian | ModelKind::LaplaceMixture { .. } => {
                if p != 1 {
                    return Err(Error::InvalidInput(format!("{kind:?} needs univariate data, got {p} columns")));
                }
                if kind == ModelKind::UnitVarianceGaussian {
                    Some(FamilySpec::UnitVarianceGaussian)
                } else {
                    None
                }
            }
        };
        let family = match (&kind, &component) {
            (ModelKind::GaussianMixture { k }, Some(c)) | (ModelKind::BernoulliMixture { k }, Some(c)) => {
                Some(Arc::new(FamilySpec::mixture(c.clone(), *k)?))
            }
            (_, Some(c)) => Some(Arc::new(c.clone())),
            _ => None,
        };
        let n = data.n();
        let (stats, log_base) = match &component {
            Some(c) => {
                let d = c.dim();
                let mut t = DMatrix::zeros(n, d);
                let mut lb = Vec::with_capacity(n);
                for (i, x) in data.rows().enumerate() {
                    let s = c.sufficient_stats(x)?;
                    t.row_mut(i).copy_from(&s.transpose());
                    lb.push(c.log_base_measure(x));
                }
                (t, lb)
            }
            None => (DMatrix::zeros(n, 0), vec![0.0; n]),
        };
        let mean_log_base = log_base.iter().sum::<f64>() / n as f64;
        Ok(LatentModel { kind, family, component, data, stats, log_base, mean_log_base })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn shared_data(&self) -> Arc<Dataset> {
        self.data.clone()
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn k(&self) -> usize {
        self.kind.k()
    }

    /// Complete-data family; absent for Laplace mixtures.
    pub fn family(&self) -> Result<&Arc<FamilySpec>> {
        self.family
            .as_ref()
            .ok_or_else(|| Error::Unsupported("laplace mixture has no complete-data exponential family".into()))
    }

    /// Per-component family (equal to the complete family without latent labels).
    pub fn component_family(&self) -> Result<&FamilySpec> {
        self.component
            .as_ref()
            .ok_or_else(|| Error::Unsupported("laplace mixture has no exponential-family components".into()))
    }

    /// Family of the posterior over labels: the object the E-step analysis
    /// runs its Bregman machinery on.
    pub fn responsibility_family(&self) -> Result<FamilySpec> {
        FamilySpec::categorical(self.k())
    }

    pub fn dim(&self) -> Result<usize> {
        Ok(self.family()?.dim())
    }

    fn is_mixture(&self) -> bool {
        matches!(self.kind, ModelKind::GaussianMixture { .. } | ModelKind::BernoulliMixture { .. })
    }

    /// Validate and wrap a raw natural parameter vector for this model.
    pub fn natural(&self, values: DVector<f64>) -> Result<NaturalParams> {
        NaturalParams::new(self.family()?.clone(), values)
    }

    pub fn mean(&self, values: DVector<f64>) -> Result<MeanParams> {
        MeanParams::new(self.family()?.clone(), values)
    }

    fn check_params(&self, theta: &NaturalParams) -> Result<()> {
        let fam = self.family()?;
        if theta.family().as_ref() != fam.as_ref() {
            return Err(Error::InvalidInput(format!(
                "parameters belong to {}, model uses {}",
                theta.family().name(),
                fam.name()
            )));
        }
        Ok(())
    }

    /// Per-row complete-data log terms `⟨S(x_i, j), θ⟩` (n × k).
    fn terms(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let fam = self.family()?;
        fam.check_natural(theta)?;
        if !self.is_mixture() {
            let t = &self.stats * theta;
            return Ok(DMatrix::from_column_slice(t.len(), 1, t.as_slice()));
        }
        let k = self.k();
        let d = self.component_family()?.dim();
        let mut eta = DMatrix::zeros(d, k);
        for j in 0..k {
            eta.column_mut(j).copy_from(&fam.mixture_block(theta, j)?);
        }
        let mut t = &self.stats * eta;
        for j in 0..k - 1 {
            t.column_mut(j).add_scalar_mut(theta[j]);
        }
        Ok(t)
    }

    /// E-step on a raw natural parameter vector: responsibilities, `s(θ)` and `L(θ)`.
    pub fn e_step_values(&self, theta: &DVector<f64>) -> Result<EStep> {
        let fam = self.family()?;
        let terms = self.terms(theta)?;
        let a = fam.log_partition(theta)?;
        let n = self.n();
        let k = terms.ncols();
        let mut resp = DMatrix::zeros(n, k);
        let mut total = 0.0;
        let mut buf = vec![0.0; k];
        for i in 0..n {
            for j in 0..k {
                buf[j] = terms[(i, j)];
            }
            let lse = logsumexp(&buf);
            if !lse.is_finite() {
                return Err(Error::Numerical(format!("row {i}: log-likelihood is not finite")));
            }
            for j in 0..k {
                resp[(i, j)] = (buf[j] - lse).exp();
            }
            total += lse;
        }
        let nll = a - total / n as f64 - self.mean_log_base;
        let inv_n = 1.0 / n as f64;
        let stats = if self.is_mixture() {
            let d = self.component_family()?.dim();
            let blocks = self.stats.transpose() * &resp;
            let mut s = DVector::zeros(fam.dim());
            for j in 0..k - 1 {
                s[j] = resp.column(j).sum() * inv_n;
            }
            for j in 0..k {
                s.rows_mut(k - 1 + j * d, d).copy_from(&(blocks.column(j) * inv_n));
            }
            s
        } else {
            self.stats.row_sum().transpose() * inv_n
        };
        Ok(EStep { resp: Responsibilities(resp), stats, nll })
    }

    /// `E[S(x_i, z) | x_i, θ]` for a single sample.
    pub fn sample_stats(&self, theta: &DVector<f64>, i: usize) -> Result<DVector<f64>> {
        let fam = self.family()?;
        fam.check_natural(theta)?;
        if i >= self.n() {
            return Err(Error::InvalidInput(format!("sample {i} out of range")));
        }
        let t = self.stats.row(i).transpose();
        if !self.is_mixture() {
            return Ok(t);
        }
        let k = self.k();
        let d = t.len();
        let terms: Vec<f64> = (0..k)
            .map(|j| {
                let w = if j < k - 1 { theta[j] } else { 0.0 };
                w + theta.rows(k - 1 + j * d, d).dot(&t)
            })
            .collect();
        let lse = logsumexp(&terms);
        let mut s = DVector::zeros(fam.dim());
        for j in 0..k {
            let r = (terms[j] - lse).exp();
            if j < k - 1 {
                s[j] = r;
            }
            s.rows_mut(k - 1 + j * d, d).copy_from(&(&t * r));
        }
        Ok(s)
    }

    pub fn e_step(&self, theta: &NaturalParams) -> Result<EStep> {
        self.check_params(theta)?;
        self.e_step_values(theta.values())
    }

    /// `p(z_i = j | x_i, θ)`.
    pub fn responsibilities(&self, theta: &NaturalParams) -> Result<Responsibilities> {
        Ok(self.e_step(theta)?.resp)
    }

    /// `s(θ)`, the averaged expected complete-data sufficient statistics, in
    /// the complete family's mean coordinates. May sit on the boundary of the
    /// mean domain (an empty or collapsed cluster); `m_step` rejects that.
    pub fn expected_stats(&self, theta: &NaturalParams) -> Result<DVector<f64>> {
        Ok(self.e_step(theta)?.stats)
    }

    pub fn nll_values(&self, theta: &DVector<f64>) -> Result<f64> {
        let fam = self.family()?;
        let terms = self.terms(theta)?;
        let a = fam.log_partition(theta)?;
        let mut buf = vec![0.0; terms.ncols()];
        let mut total = 0.0;
        for i in 0..terms.nrows() {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = terms[(i, j)];
            }
            total += logsumexp(&buf);
        }
        Ok(a - total / self.n() as f64 - self.mean_log_base)
    }

    /// `L(θ) = -(1/n) Σ log p(x_i | θ)`.
    pub fn nll(&self, theta: &NaturalParams) -> Result<f64> {
        self.check_params(theta)?;
        self.nll_values(theta.values())
    }

    pub fn nll_gradient_values(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let e = self.e_step_values(theta)?;
        Ok(self.family()?.mean_map(theta)? - e.stats)
    }

    /// `∇L(θ) = ∇A(θ) - s(θ)`.
    pub fn nll_gradient(&self, theta: &NaturalParams) -> Result<DVector<f64>> {
        self.check_params(theta)?;
        self.nll_gradient_values(theta.values())
    }

    /// Moment matching: `∇A*(s)`.
    pub fn m_step(&self, s: &DVector<f64>) -> Result<NaturalParams> {
        let fam = self.family()?;
        self.natural(fam.inverse_mean_map(s)?)
    }

    /// `Q_θ(φ) = A(φ) - ⟨s(θ), φ⟩ - (1/n) Σ log h(x_i)`, the expected
    /// complete-data NLL under the posterior at `θ`.
    pub fn surrogate_value(&self, theta: &NaturalParams, phi: &NaturalParams) -> Result<f64> {
        self.check_params(phi)?;
        let s = self.e_step(theta)?.stats;
        self.surrogate_from_stats(&s, phi.values())
    }

    pub fn surrogate_from_stats(&self, s: &DVector<f64>, phi: &DVector<f64>) -> Result<f64> {
        Ok(self.family()?.log_partition(phi)? - s.dot(phi) - self.mean_log_base)
    }

    /// Mean of `log h(x_i)`; the constant part of the surrogate.
    pub fn mean_log_base_measure(&self) -> f64 {
        self.mean_log_base
    }

    pub fn log_base_measure(&self, i: usize) -> f64 {
        self.log_base[i]
    }

    /// `KL(p(x, z | θ) ‖ p(x, z | φ))` by the chain rule over weights and components.
    pub fn complete_data_kl(&self, theta: &NaturalParams, phi: &NaturalParams) -> Result<f64> {
        self.check_params(theta)?;
        self.check_params(phi)?;
        self.to_standard(theta)?.kl(&self.to_standard(phi)?)
    }

    /// Natural parameters to weights and per-component parameters.
    pub fn to_standard(&self, theta: &NaturalParams) -> Result<MixtureParams> {
        self.check_params(theta)?;
        self.standard_from_values(theta.values())
    }

    pub(crate) fn standard_from_values(&self, theta: &DVector<f64>) -> Result<MixtureParams> {
        let fam = self.family()?;
        let comp = self.component_family()?;
        let (weights, blocks) = if self.is_mixture() {
            let w = fam.mixture_weights(theta)?;
            let b = (0..self.k()).map(|j| fam.mixture_block(theta, j)).collect::<Result<Vec<_>>>()?;
            (w, b)
        } else {
            fam.check_natural(theta)?;
            (vec![1.0], vec![theta.clone()])
        };
        let components = blocks
            .iter()
            .map(|b| component_standard(comp, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(MixtureParams { weights, components })
    }

    /// Weights and per-component parameters to natural parameters.
    pub fn from_standard(&self, params: &MixtureParams) -> Result<NaturalParams> {
        let fam = self.family()?;
        let comp = self.component_family()?;
        if params.k() != self.k() || params.components.len() != self.k() {
            return Err(Error::Dimension { expected: self.k(), got: params.k() });
        }
        let blocks = params
            .components
            .iter()
            .map(|c| component_natural(comp, c))
            .collect::<Result<Vec<_>>>()?;
        let values = if self.is_mixture() {
            fam.mixture_assemble(&params.weights, &blocks)?
        } else {
            blocks.into_iter().next().expect("k = 1")
        };
        self.natural(values)
    }
}

fn component_standard(comp: &FamilySpec, eta: &DVector<f64>) -> Result<ComponentParams> {
    Ok(match comp {
        FamilySpec::Gaussian => {
            let (m, v) = expfam::gaussian_moments(eta);
            ComponentParams::univariate_gaussian(m, v)
        }
        FamilySpec::UnitVarianceGaussian => ComponentParams::univariate_gaussian(eta[0], 1.0),
        FamilySpec::MvGaussian { p } => {
            let (m, s) = expfam::mv_gaussian_moments(eta, *p)?;
            ComponentParams::gaussian(&m, &s)
        }
        FamilySpec::Bernoulli | FamilySpec::Product { .. } => {
            ComponentParams::Bernoulli { p: eta.iter().map(|&t| sigmoid(t)).collect() }
        }
        _ => return Err(Error::Unsupported(format!("component family {}", comp.name()))),
    })
}

fn component_natural(comp: &FamilySpec, c: &ComponentParams) -> Result<DVector<f64>> {
    let eta = match (comp, c) {
        (FamilySpec::Gaussian, ComponentParams::Gaussian { .. }) => {
            let (m, s) = c.gaussian_parts()?;
            expfam::gaussian_natural(m[0], s[(0, 0)])
        }
        (FamilySpec::UnitVarianceGaussian, ComponentParams::Gaussian { mean, .. }) => DVector::from_element(1, mean[0]),
        (FamilySpec::MvGaussian { .. }, ComponentParams::Gaussian { .. }) => {
            let (m, s) = c.gaussian_parts()?;
            expfam::mv_gaussian_natural(&m, &s)?
        }
        (FamilySpec::Bernoulli | FamilySpec::Product { .. }, ComponentParams::Bernoulli { p }) => {
            DVector::from_iterator(p.len(), p.iter().map(|&q| (q / (1.0 - q)).ln()))
        }
        _ => return Err(Error::InvalidInput(format!("component parameters do not fit {}", comp.name()))),
    };
    comp.check_natural(&eta)?;
    Ok(eta)
}

#[cfg(test)]
mod tests;
