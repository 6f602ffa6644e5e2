//! Mixture parameters in their usual (weights, moments, probabilities) form,
//! plus closed-form KL divergences between components.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ComponentParams {
    /// Mean vector and row-major covariance.
    Gaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    /// Independent success probabilities, one per feature.
    Bernoulli { p: Vec<f64> },
    Laplace { loc: f64, scale: f64 },
}

impl ComponentParams {
    pub fn gaussian(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Self {
        ComponentParams::Gaussian {
            mean: mean.iter().copied().collect(),
            cov: (0..cov.nrows()).map(|i| cov.row(i).iter().copied().collect()).collect(),
        }
    }

    pub fn univariate_gaussian(mean: f64, var: f64) -> Self {
        ComponentParams::Gaussian { mean: vec![mean], cov: vec![vec![var]] }
    }

    pub(crate) fn gaussian_parts(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        match self {
            ComponentParams::Gaussian { mean, cov } => {
                let p = mean.len();
                if cov.len() != p || cov.iter().any(|r| r.len() != p) {
                    return Err(Error::Dimension { expected: p, got: cov.len() });
                }
                let flat: Vec<f64> = cov.iter().flatten().copied().collect();
                Ok((DVector::from_column_slice(mean), DMatrix::from_row_slice(p, p, &flat)))
            }
            _ => Err(Error::InvalidInput("expected gaussian component".into())),
        }
    }

    /// `KL(self ‖ other)` for two components of the same type.
    pub fn kl(&self, other: &ComponentParams) -> Result<f64> {
        match (self, other) {
            (ComponentParams::Gaussian { .. }, ComponentParams::Gaussian { .. }) => {
                let (m0, s0) = self.gaussian_parts()?;
                let (m1, s1) = other.gaussian_parts()?;
                gaussian_kl(&m0, &s0, &m1, &s1)
            }
            (ComponentParams::Bernoulli { p: a }, ComponentParams::Bernoulli { p: b }) => {
                if a.len() != b.len() {
                    return Err(Error::Dimension { expected: a.len(), got: b.len() });
                }
                Ok(a.iter().zip(b).map(|(&x, &y)| bernoulli_kl(x, y)).sum())
            }
            (ComponentParams::Laplace { loc: m0, scale: b0 }, ComponentParams::Laplace { loc: m1, scale: b1 }) => {
                let d = (m0 - m1).abs();
                Ok((b1 / b0).ln() + (b0 * (-d / b0).exp() + d) / b1 - 1.0)
            }
            _ => Err(Error::InvalidInput("KL between components of different types".into())),
        }
    }
}

pub(crate) fn bernoulli_kl(p: f64, q: f64) -> f64 {
    let term = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
    term(p, q) + term(1.0 - p, 1.0 - q)
}

/// `KL(N(m0, S0) ‖ N(m1, S1))`.
pub(crate) fn gaussian_kl(m0: &DVector<f64>, s0: &DMatrix<f64>, m1: &DVector<f64>, s1: &DMatrix<f64>) -> Result<f64> {
    let p = m0.len() as f64;
    let c0 = Cholesky::new(s0.clone()).ok_or_else(|| Error::Numerical("covariance not positive-definite".into()))?;
    let c1 = Cholesky::new(s1.clone()).ok_or_else(|| Error::Numerical("covariance not positive-definite".into()))?;
    let logdet = |c: &Cholesky<f64, nalgebra::Dyn>| 2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let trace = c1.solve(s0).trace();
    let dm = m1 - m0;
    let maha = dm.dot(&c1.solve(&dm));
    Ok(0.5 * (trace + maha - p + logdet(&c1) - logdet(&c0)))
}

/// Mixture weights with one parameter set per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub weights: Vec<f64>,
    pub components: Vec<ComponentParams>,
}

impl MixtureParams {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// Chain rule: `KL(π ‖ π') + Σ_j π_j KL(c_j ‖ c'_j)`.
    pub fn kl(&self, other: &MixtureParams) -> Result<f64> {
        if self.k() != other.k() || self.components.len() != self.k() || other.components.len() != other.k() {
            return Err(Error::Dimension { expected: self.k(), got: other.k() });
        }
        let mut total = 0.0;
        for j in 0..self.k() {
            let (a, b) = (self.weights[j], other.weights[j]);
            if a > 0.0 {
                total += a * (a / b).ln() + a * self.components[j].kl(&other.components[j])?;
            }
        }
        Ok(total)
    }
}
