//! Exponential families: log-partition, the dual maps `∇A` / `∇A*`, Fisher
//! information and Bregman divergences, each with a closed form.
//!
//! Every family is minimal, so `∇A` is a bijection from the natural domain
//! onto the interior of the mean domain.

mod mixture;
pub(crate) mod mvn;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{logsumexp, sigmoid, softmax_into, softplus};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// A concrete exponential family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilySpec {
    /// `A(θ) = log(1 + e^θ)`, statistic `x ∈ {0, 1}`.
    Bernoulli,
    /// `k` outcomes with `k - 1` logits measured against the last outcome.
    /// Observations are the outcome index as a float.
    Categorical { k: usize },
    /// Univariate Gaussian, `θ = (m/v, -1/(2v))`, statistic `(x, x²)`.
    Gaussian,
    /// Univariate Gaussian with unit variance, `A(θ) = θ²/2`.
    UnitVarianceGaussian,
    /// `p`-variate Gaussian with full covariance.
    MvGaussian { p: usize },
    /// Independent product; the observation is the concatenation of the
    /// factors' observations.
    Product { factors: Vec<FamilySpec> },
    /// Complete-data family `p(x, z)` of a `k`-component mixture.
    Mixture { k: usize, component: Box<FamilySpec> },
}

impl FamilySpec {
    pub fn categorical(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidInput(format!("categorical needs k >= 2, got {k}")));
        }
        Ok(FamilySpec::Categorical { k })
    }

    pub fn mv_gaussian(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidInput("multivariate gaussian needs p >= 1".into()));
        }
        Ok(FamilySpec::MvGaussian { p })
    }

    pub fn product(factors: Vec<FamilySpec>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidInput("product family needs at least one factor".into()));
        }
        if factors.iter().any(|f| matches!(f, FamilySpec::Mixture { .. })) {
            return Err(Error::Unsupported("mixture factor inside a product".into()));
        }
        Ok(FamilySpec::Product { factors })
    }

    pub fn mixture(component: FamilySpec, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("mixture needs k >= 1".into()));
        }
        if matches!(component, FamilySpec::Mixture { .. }) {
            return Err(Error::Unsupported("nested mixture".into()));
        }
        Ok(FamilySpec::Mixture { k, component: Box::new(component) })
    }

    /// Dimension of the sufficient statistic.
    pub fn dim(&self) -> usize {
        match self {
            FamilySpec::Bernoulli | FamilySpec::UnitVarianceGaussian => 1,
            FamilySpec::Categorical { k } => k - 1,
            FamilySpec::Gaussian => 2,
            FamilySpec::MvGaussian { p } => p + mvn::packed_len(*p),
            FamilySpec::Product { factors } => factors.iter().map(|f| f.dim()).sum(),
            FamilySpec::Mixture { k, component } => k - 1 + k * component.dim(),
        }
    }

    /// Number of observed coordinates per sample.
    pub fn obs_dim(&self) -> usize {
        match self {
            FamilySpec::MvGaussian { p } => *p,
            FamilySpec::Product { factors } => factors.iter().map(|f| f.obs_dim()).sum(),
            FamilySpec::Mixture { component, .. } => component.obs_dim(),
            _ => 1,
        }
    }

    pub fn name(&self) -> String {
        match self {
            FamilySpec::Bernoulli => "bernoulli".into(),
            FamilySpec::Categorical { k } => format!("categorical(k={k})"),
            FamilySpec::Gaussian => "gaussian".into(),
            FamilySpec::UnitVarianceGaussian => "unit_variance_gaussian".into(),
            FamilySpec::MvGaussian { p } => format!("mv_gaussian(p={p})"),
            FamilySpec::Product { factors } => {
                let names: Vec<String> = factors.iter().map(|f| f.name()).collect();
                format!("product({})", names.join(", "))
            }
            FamilySpec::Mixture { k, component } => format!("mixture(k={k}, {})", component.name()),
        }
    }

    fn check_shape(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: v.len() });
        }
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::domain(self.name(), format!("coordinate {i} must be finite")));
        }
        Ok(())
    }

    /// Membership in the (open) natural domain, with the violated predicate on failure.
    pub fn check_natural(&self, theta: &DVector<f64>) -> Result<()> {
        self.check_shape(theta)?;
        match self {
            FamilySpec::Bernoulli | FamilySpec::Categorical { .. } | FamilySpec::UnitVarianceGaussian => Ok(()),
            FamilySpec::Gaussian => {
                if theta[1] < 0.0 {
                    Ok(())
                } else {
                    Err(Error::domain(self.name(), "second natural coordinate must be negative"))
                }
            }
            FamilySpec::MvGaussian { p } => mvn::check_natural(theta, *p),
            FamilySpec::Product { factors } => {
                for (f, b) in factors.iter().zip(split_blocks(factors, theta)) {
                    f.check_natural(&b)?;
                }
                Ok(())
            }
            FamilySpec::Mixture { k, component } => mixture::check_natural(component, *k, theta),
        }
    }

    /// Membership in the interior of the mean domain.
    pub fn check_mean(&self, mu: &DVector<f64>) -> Result<()> {
        self.check_shape(mu)?;
        match self {
            FamilySpec::Bernoulli => {
                if mu[0] > 0.0 && mu[0] < 1.0 {
                    Ok(())
                } else {
                    Err(Error::domain(self.name(), "mean must lie strictly inside (0, 1)"))
                }
            }
            FamilySpec::Categorical { .. } => {
                let rest = 1.0 - mu.sum();
                if mu.iter().all(|&m| m > 0.0) && rest > 0.0 {
                    Ok(())
                } else {
                    Err(Error::domain(self.name(), "probabilities must be strictly positive"))
                }
            }
            FamilySpec::UnitVarianceGaussian => Ok(()),
            FamilySpec::Gaussian => {
                if mu[1] - mu[0] * mu[0] > 0.0 {
                    Ok(())
                } else {
                    Err(Error::domain(self.name(), "implied variance E[x²] - E[x]² must be positive"))
                }
            }
            FamilySpec::MvGaussian { p } => mvn::check_mean(mu, *p),
            FamilySpec::Product { factors } => {
                for (f, b) in factors.iter().zip(split_blocks(factors, mu)) {
                    f.check_mean(&b)?;
                }
                Ok(())
            }
            FamilySpec::Mixture { k, component } => mixture::check_mean(component, *k, mu),
        }
    }

    pub fn in_natural_domain(&self, theta: &DVector<f64>) -> bool {
        self.check_natural(theta).is_ok()
    }

    pub fn in_mean_domain(&self, mu: &DVector<f64>) -> bool {
        self.check_mean(mu).is_ok()
    }

    /// `A(θ)`.
    pub fn log_partition(&self, theta: &DVector<f64>) -> Result<f64> {
        self.check_natural(theta)?;
        Ok(match self {
            FamilySpec::Bernoulli => softplus(theta[0]),
            FamilySpec::Categorical { .. } => {
                let mut v: Vec<f64> = theta.iter().copied().collect();
                v.push(0.0);
                logsumexp(&v)
            }
            FamilySpec::Gaussian => -theta[0] * theta[0] / (4.0 * theta[1]) - 0.5 * (-2.0 * theta[1]).ln(),
            FamilySpec::UnitVarianceGaussian => 0.5 * theta[0] * theta[0],
            FamilySpec::MvGaussian { p } => mvn::log_partition(theta, *p)?,
            FamilySpec::Product { factors } => {
                let mut total = 0.0;
                for (f, b) in factors.iter().zip(split_blocks(factors, theta)) {
                    total += f.log_partition(&b)?;
                }
                total
            }
            FamilySpec::Mixture { k, component } => mixture::log_partition(component, *k, theta)?,
        })
    }

    /// `∇A(θ)`.
    pub fn mean_map(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_natural(theta)?;
        Ok(match self {
            FamilySpec::Bernoulli => DVector::from_element(1, sigmoid(theta[0])),
            FamilySpec::Categorical { k } => {
                let mut v: Vec<f64> = theta.iter().copied().collect();
                v.push(0.0);
                let mut p = vec![0.0; *k];
                softmax_into(&v, &mut p);
                DVector::from_iterator(k - 1, p.into_iter().take(k - 1))
            }
            FamilySpec::Gaussian => {
                let v = -0.5 / theta[1];
                let m = theta[0] * v;
                DVector::from_vec(vec![m, m * m + v])
            }
            FamilySpec::UnitVarianceGaussian => theta.clone(),
            FamilySpec::MvGaussian { p } => mvn::mean_map(theta, *p)?,
            FamilySpec::Product { factors } => {
                let parts = factors
                    .iter()
                    .zip(split_blocks(factors, theta))
                    .map(|(f, b)| f.mean_map(&b))
                    .collect::<Result<Vec<_>>>()?;
                concat(&parts)
            }
            FamilySpec::Mixture { k, component } => mixture::mean_map(component, *k, theta)?,
        })
    }

    /// `∇A*(μ)`, the inverse of [`FamilySpec::mean_map`].
    pub fn inverse_mean_map(&self, mu: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_mean(mu)?;
        Ok(match self {
            FamilySpec::Bernoulli => DVector::from_element(1, (mu[0] / (1.0 - mu[0])).ln()),
            FamilySpec::Categorical { .. } => {
                let last = (1.0 - mu.sum()).ln();
                mu.map(|m| m.ln() - last)
            }
            FamilySpec::Gaussian => {
                let v = mu[1] - mu[0] * mu[0];
                DVector::from_vec(vec![mu[0] / v, -0.5 / v])
            }
            FamilySpec::UnitVarianceGaussian => mu.clone(),
            FamilySpec::MvGaussian { p } => mvn::inverse_mean_map(mu, *p)?,
            FamilySpec::Product { factors } => {
                let parts = factors
                    .iter()
                    .zip(split_blocks(factors, mu))
                    .map(|(f, b)| f.inverse_mean_map(&b))
                    .collect::<Result<Vec<_>>>()?;
                concat(&parts)
            }
            FamilySpec::Mixture { k, component } => mixture::inverse_mean_map(component, *k, mu)?,
        })
    }

    /// `∇²A(θ)`, the Fisher information of the family.
    pub fn fisher(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_natural(theta)?;
        Ok(match self {
            FamilySpec::Bernoulli => {
                let s = sigmoid(theta[0]);
                DMatrix::from_element(1, 1, s * (1.0 - s))
            }
            FamilySpec::Categorical { .. } => {
                let mu = self.mean_map(theta)?;
                DMatrix::from_diagonal(&mu) - &mu * mu.transpose()
            }
            FamilySpec::Gaussian => {
                let v = -0.5 / theta[1];
                let m = theta[0] * v;
                DMatrix::from_row_slice(2, 2, &[v, 2.0 * m * v, 2.0 * m * v, 2.0 * v * v + 4.0 * m * m * v])
            }
            FamilySpec::UnitVarianceGaussian => DMatrix::identity(1, 1),
            FamilySpec::MvGaussian { p } => mvn::fisher(theta, *p)?,
            FamilySpec::Product { factors } => {
                let d = self.dim();
                let mut f = DMatrix::zeros(d, d);
                let mut o = 0;
                for (fac, b) in factors.iter().zip(split_blocks(factors, theta)) {
                    let h = fac.fisher(&b)?;
                    let n = h.nrows();
                    f.view_mut((o, o), (n, n)).copy_from(&h);
                    o += n;
                }
                f
            }
            FamilySpec::Mixture { k, component } => mixture::fisher(component, *k, theta)?,
        })
    }

    /// `A*(μ) = ⟨∇A*(μ), μ⟩ - A(∇A*(μ))`.
    pub fn conjugate(&self, mu: &DVector<f64>) -> Result<f64> {
        let theta = self.inverse_mean_map(mu)?;
        Ok(theta.dot(mu) - self.log_partition(&theta)?)
    }

    /// `D_A(φ, θ) = A(φ) - A(θ) - ⟨∇A(θ), φ - θ⟩`, which is `KL(p_θ ‖ p_φ)`.
    pub fn bregman(&self, phi: &DVector<f64>, theta: &DVector<f64>) -> Result<f64> {
        let a_phi = self.log_partition(phi)?;
        let a_theta = self.log_partition(theta)?;
        let mu = self.mean_map(theta)?;
        Ok(a_phi - a_theta - mu.dot(&(phi - theta)))
    }

    /// `D_{A*}(μ₁, μ₂) = A*(μ₁) - A*(μ₂) - ⟨∇A*(μ₂), μ₁ - μ₂⟩`.
    pub fn dual_bregman(&self, mu1: &DVector<f64>, mu2: &DVector<f64>) -> Result<f64> {
        let c1 = self.conjugate(mu1)?;
        let c2 = self.conjugate(mu2)?;
        let theta2 = self.inverse_mean_map(mu2)?;
        Ok(c1 - c2 - theta2.dot(&(mu1 - mu2)))
    }

    /// `T(x)` for a single observation. Mixtures need the latent label; use
    /// [`FamilySpec::complete_stats`].
    pub fn sufficient_stats(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.obs_dim() {
            return Err(Error::Dimension { expected: self.obs_dim(), got: x.len() });
        }
        Ok(match self {
            FamilySpec::Bernoulli | FamilySpec::UnitVarianceGaussian => DVector::from_element(1, x[0]),
            FamilySpec::Categorical { k } => {
                let c = x[0];
                if c < 0.0 || c.fract() != 0.0 || c >= *k as f64 {
                    return Err(Error::InvalidInput(format!("category {c} outside 0..{k}")));
                }
                let mut s = DVector::zeros(k - 1);
                if (c as usize) < k - 1 {
                    s[c as usize] = 1.0;
                }
                s
            }
            FamilySpec::Gaussian => DVector::from_vec(vec![x[0], x[0] * x[0]]),
            FamilySpec::MvGaussian { p } => mvn::sufficient_stats(x, *p),
            FamilySpec::Product { factors } => {
                let mut parts = Vec::with_capacity(factors.len());
                let mut o = 0;
                for f in factors {
                    let n = f.obs_dim();
                    parts.push(f.sufficient_stats(&x[o..o + n])?);
                    o += n;
                }
                concat(&parts)
            }
            FamilySpec::Mixture { .. } => {
                return Err(Error::Unsupported("mixture statistics without a latent label".into()))
            }
        })
    }

    /// `S(x, z = j)` for the complete-data mixture family.
    pub fn complete_stats(&self, x: &[f64], j: usize) -> Result<DVector<f64>> {
        match self {
            FamilySpec::Mixture { k, component } if j < *k => mixture::complete_stats(component, *k, x, j),
            FamilySpec::Mixture { k, .. } => Err(Error::InvalidInput(format!("label {j} outside 0..{k}"))),
            _ => self.sufficient_stats(x),
        }
    }

    /// `log h(x)`.
    pub fn log_base_measure(&self, x: &[f64]) -> f64 {
        match self {
            FamilySpec::Bernoulli | FamilySpec::Categorical { .. } => 0.0,
            FamilySpec::Gaussian => -HALF_LN_2PI,
            FamilySpec::UnitVarianceGaussian => -HALF_LN_2PI - 0.5 * x[0] * x[0],
            FamilySpec::MvGaussian { p } => -(*p as f64) * HALF_LN_2PI,
            FamilySpec::Product { factors } => {
                let mut o = 0;
                let mut total = 0.0;
                for f in factors {
                    let n = f.obs_dim();
                    total += f.log_base_measure(&x[o..o + n]);
                    o += n;
                }
                total
            }
            FamilySpec::Mixture { component, .. } => component.log_base_measure(x),
        }
    }

    /// `log p(x | θ)` for a non-mixture family.
    pub fn log_density(&self, theta: &DVector<f64>, x: &[f64]) -> Result<f64> {
        let t = self.sufficient_stats(x)?;
        Ok(t.dot(theta) - self.log_partition(theta)? + self.log_base_measure(x))
    }

    /// Mixture weights `π` implied by joint natural parameters.
    pub fn mixture_weights(&self, theta: &DVector<f64>) -> Result<Vec<f64>> {
        match self {
            FamilySpec::Mixture { k, component } => {
                self.check_natural(theta)?;
                mixture::weights(component, *k, theta)
            }
            _ => Err(Error::Unsupported(format!("mixture weights of {}", self.name()))),
        }
    }

    /// Joint natural parameters from weights and component natural blocks.
    pub fn mixture_assemble(&self, weights: &[f64], blocks: &[DVector<f64>]) -> Result<DVector<f64>> {
        match self {
            FamilySpec::Mixture { k, component } => {
                if weights.len() != *k || blocks.len() != *k {
                    return Err(Error::Dimension { expected: *k, got: weights.len().min(blocks.len()) });
                }
                if let Some(j) = weights.iter().position(|&w| !(w > 0.0)) {
                    return Err(Error::domain(self.name(), format!("weight of component {j} must be positive")));
                }
                for b in blocks {
                    component.check_natural(b)?;
                }
                let total: f64 = weights.iter().sum();
                let pi: Vec<f64> = weights.iter().map(|w| w / total).collect();
                mixture::assemble(component, &pi, blocks)
            }
            _ => Err(Error::Unsupported(format!("mixture assembly for {}", self.name()))),
        }
    }

    /// Component natural block `j` of a mixture parameter vector.
    pub fn mixture_block(&self, v: &DVector<f64>, j: usize) -> Result<DVector<f64>> {
        match self {
            FamilySpec::Mixture { k, component } if j < *k => Ok(mixture::Layout::new(component, *k).block(v, j)),
            _ => Err(Error::Unsupported(format!("block {j} of {}", self.name()))),
        }
    }
}

fn split_blocks(factors: &[FamilySpec], v: &DVector<f64>) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(factors.len());
    let mut o = 0;
    for f in factors {
        let d = f.dim();
        out.push(v.rows(o, d).into_owned());
        o += d;
    }
    out
}

fn concat(parts: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(parts.iter().map(|p| p.len()).sum(), parts.iter().flat_map(|p| p.iter().copied()))
}

/// Natural coordinates of a univariate Gaussian with mean `m` and variance `v`.
pub fn gaussian_natural(m: f64, v: f64) -> DVector<f64> {
    DVector::from_vec(vec![m / v, -0.5 / v])
}

/// Mean and variance from univariate Gaussian natural coordinates.
pub fn gaussian_moments(theta: &DVector<f64>) -> (f64, f64) {
    let v = -0.5 / theta[1];
    (theta[0] * v, v)
}

/// Natural coordinates of a multivariate Gaussian from its mean and covariance.
pub fn mv_gaussian_natural(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<DVector<f64>> {
    mvn::from_moments(mean, cov)
}

/// Mean and covariance from multivariate Gaussian natural coordinates.
pub fn mv_gaussian_moments(theta: &DVector<f64>, p: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    mvn::moments(theta, p)
}

/// Natural parameters tagged with their family; domain-checked at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalParams {
    family: Arc<FamilySpec>,
    values: DVector<f64>,
}

/// Mean parameters tagged with their family; domain-checked at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanParams {
    family: Arc<FamilySpec>,
    values: DVector<f64>,
}

impl NaturalParams {
    pub fn new(family: Arc<FamilySpec>, values: DVector<f64>) -> Result<Self> {
        family.check_natural(&values)?;
        Ok(NaturalParams { family, values })
    }

    pub fn family(&self) -> &Arc<FamilySpec> {
        &self.family
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    pub fn log_partition(&self) -> f64 {
        self.family.log_partition(&self.values).unwrap_or(f64::NAN)
    }

    pub fn to_mean(&self) -> Result<MeanParams> {
        MeanParams::new(self.family.clone(), self.family.mean_map(&self.values)?)
    }

    pub fn fisher(&self) -> Result<DMatrix<f64>> {
        self.family.fisher(&self.values)
    }
}

impl MeanParams {
    pub fn new(family: Arc<FamilySpec>, values: DVector<f64>) -> Result<Self> {
        family.check_mean(&values)?;
        Ok(MeanParams { family, values })
    }

    pub fn family(&self) -> &Arc<FamilySpec> {
        &self.family
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    pub fn to_natural(&self) -> Result<NaturalParams> {
        NaturalParams::new(self.family.clone(), self.family.inverse_mean_map(&self.values)?)
    }

    pub fn conjugate(&self) -> Result<f64> {
        self.family.conjugate(&self.values)
    }
}

fn same_family(a: &FamilySpec, b: &FamilySpec) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("family mismatch: {} vs {}", a.name(), b.name())))
    }
}

pub fn log_partition(theta: &NaturalParams) -> Result<f64> {
    theta.family.log_partition(&theta.values)
}

pub fn mean_map(theta: &NaturalParams) -> Result<MeanParams> {
    theta.to_mean()
}

pub fn inverse_mean_map(mu: &MeanParams) -> Result<NaturalParams> {
    mu.to_natural()
}

pub fn fisher_information(theta: &NaturalParams) -> Result<DMatrix<f64>> {
    theta.fisher()
}

pub fn bregman_divergence(phi: &NaturalParams, theta: &NaturalParams) -> Result<f64> {
    same_family(&phi.family, &theta.family)?;
    phi.family.bregman(&phi.values, &theta.values)
}

pub fn dual_bregman_divergence(mu1: &MeanParams, mu2: &MeanParams) -> Result<f64> {
    same_family(&mu1.family, &mu2.family)?;
    mu1.family.dual_bregman(&mu1.values, &mu2.values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn bernoulli_at_zero() {
        let f = FamilySpec::Bernoulli;
        assert!((f.log_partition(&v(&[0.0])).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(f.mean_map(&v(&[0.0])).unwrap()[0], 0.5);
        assert_eq!(f.inverse_mean_map(&v(&[0.5])).unwrap()[0], 0.0);
        assert_eq!(f.fisher(&v(&[0.0])).unwrap()[(0, 0)], 0.25);
    }

    #[test]
    fn gaussian_log_partition_examples() {
        let f = FamilySpec::Gaussian;
        assert!(f.log_partition(&v(&[0.0, -0.5])).unwrap().abs() < 1e-15);
        // m = 1, v = 2: m²/(2v) + ½ log v
        let a = f.log_partition(&v(&[0.5, -0.25])).unwrap();
        assert!((a - 0.596_573_590_279_972_6).abs() < 1e-12);
        let mu = f.mean_map(&v(&[0.5, -0.25])).unwrap();
        assert!((mu[0] - 1.0).abs() < 1e-15 && (mu[1] - 3.0).abs() < 1e-15);
        let th = f.inverse_mean_map(&v(&[1.0, 3.0])).unwrap();
        assert!((th[0] - 0.5).abs() < 1e-15 && (th[1] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn gaussian_zero_variance_is_a_domain_error() {
        let err = FamilySpec::Gaussian.inverse_mean_map(&v(&[1.0, 1.0])).unwrap_err();
        assert!(err.is_domain());
        assert!(FamilySpec::Gaussian.log_partition(&v(&[0.0, 0.0])).unwrap_err().is_domain());
    }

    #[test]
    fn categorical_symmetric_logits() {
        let f = FamilySpec::categorical(3).unwrap();
        let mu = f.mean_map(&v(&[0.0, 0.0])).unwrap();
        assert!((mu[0] - 1.0 / 3.0).abs() < 1e-15 && (mu[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_bregman_is_kl() {
        let f = FamilySpec::Gaussian;
        let p = gaussian_natural(0.0, 1.0);
        let q = gaussian_natural(1.0, 1.0);
        // KL(N(0,1) ‖ N(1,1)) = ½
        assert!((f.bregman(&q, &p).unwrap() - 0.5).abs() < 1e-14);
        let (mp, mq) = (f.mean_map(&p).unwrap(), f.mean_map(&q).unwrap());
        assert!((f.dual_bregman(&mp, &mq).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn bernoulli_bregman_two_term_sum() {
        let f = FamilySpec::Bernoulli;
        let d = f.bregman(&v(&[3f64.ln()]), &v(&[0.0])).unwrap();
        let direct = 0.5 * (0.5f64 / 0.75).ln() + 0.5 * (0.5f64 / 0.25).ln();
        assert!((d - direct).abs() < 1e-15);
        assert!((d - 0.143_841_036_225_890_2).abs() < 1e-12);
    }

    #[test]
    fn product_fisher_is_block_diagonal() {
        let f = FamilySpec::product(vec![FamilySpec::Bernoulli, FamilySpec::Gaussian]).unwrap();
        let theta = v(&[0.3, 0.2, -0.7]);
        let h = f.fisher(&theta).unwrap();
        assert_eq!(h[(0, 1)], 0.0);
        assert_eq!(h[(2, 0)], 0.0);
        let hb = FamilySpec::Gaussian.fisher(&v(&[0.2, -0.7])).unwrap();
        assert_eq!(h.view((1, 1), (2, 2)), hb);
    }

    #[test]
    fn mvn_precision_must_be_positive_definite() {
        let f = FamilySpec::mv_gaussian(2).unwrap();
        // Λ = [[1, 2], [2, 1]] is indefinite.
        let theta = v(&[0.0, 0.0, -0.5, -2.0, -0.5]);
        assert!(f.log_partition(&theta).unwrap_err().is_domain());
    }

    #[test]
    fn mvn_matches_univariate_for_p1() {
        let f = FamilySpec::mv_gaussian(1).unwrap();
        let g = FamilySpec::Gaussian;
        let theta = v(&[0.4, -0.8]);
        assert!((f.log_partition(&theta).unwrap() - g.log_partition(&theta).unwrap()).abs() < 1e-14);
        assert!((f.fisher(&theta).unwrap() - g.fisher(&theta).unwrap()).abs().max() < 1e-14);
    }

    #[test]
    fn mixture_with_one_component_reduces_to_component() {
        let f = FamilySpec::mixture(FamilySpec::Gaussian, 1).unwrap();
        let theta = v(&[0.4, -0.8]);
        let a = f.log_partition(&theta).unwrap();
        assert!((a - FamilySpec::Gaussian.log_partition(&theta).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn mixture_weights_round_trip() {
        let f = FamilySpec::mixture(FamilySpec::Gaussian, 3).unwrap();
        let blocks = vec![gaussian_natural(-1.0, 0.5), gaussian_natural(0.0, 1.0), gaussian_natural(2.0, 2.0)];
        let theta = f.mixture_assemble(&[0.2, 0.3, 0.5], &blocks).unwrap();
        let pi = f.mixture_weights(&theta).unwrap();
        for (a, b) in pi.iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 1e-14);
        }
        let back = f.inverse_mean_map(&f.mean_map(&theta).unwrap()).unwrap();
        assert!((back - theta).amax() < 1e-12);
    }

    #[test]
    fn typed_params_reject_out_of_domain_values() {
        let fam = Arc::new(FamilySpec::Gaussian);
        assert!(NaturalParams::new(fam.clone(), v(&[0.0, 0.1])).is_err());
        assert!(MeanParams::new(fam.clone(), v(&[1.0, 0.5])).is_err());
        let th = NaturalParams::new(fam, v(&[0.5, -0.25])).unwrap();
        assert_eq!(mean_map(&th).unwrap().values()[1], 3.0);
    }
}
