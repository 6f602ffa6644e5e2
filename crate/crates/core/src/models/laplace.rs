//! Univariate Laplace mixtures. The components sit outside the exponential
//! family, so only the E-step is shared with the rest of the crate.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{LatentModel, ModelKind, Responsibilities};
use crate::error::{Error, Result};
use crate::numeric::logsumexp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceParams {
    pub weights: Vec<f64>,
    pub locs: Vec<f64>,
    pub scales: Vec<f64>,
}

impl LaplaceParams {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if self.locs.len() != k || self.scales.len() != k || k == 0 {
            return Err(Error::Dimension { expected: k, got: self.locs.len().min(self.scales.len()) });
        }
        if self.weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::domain("laplace_mixture", "weights must be positive"));
        }
        if self.scales.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return Err(Error::domain("laplace_mixture", "scales must be positive"));
        }
        if self.locs.iter().any(|m| !m.is_finite()) {
            return Err(Error::domain("laplace_mixture", "locations must be finite"));
        }
        if (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::domain("laplace_mixture", "weights must sum to one"));
        }
        Ok(())
    }

    fn log_joint(&self, x: f64, j: usize) -> f64 {
        let b = self.scales[j];
        self.weights[j].ln() - (2.0 * b).ln() - (x - self.locs[j]).abs() / b
    }
}

/// Smallest `x` whose cumulative weight reaches half the total.
pub fn weighted_lower_median(values: &[f64], weights: &[f64]) -> Option<f64> {
    let total: f64 = weights.iter().sum();
    if values.is_empty() || !(total > 0.0) {
        return None;
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut acc = 0.0;
    for &i in &idx {
        acc += weights[i];
        if acc >= 0.5 * total {
            return Some(values[i]);
        }
    }
    idx.last().map(|&i| values[i])
}

impl LatentModel {
    fn require_laplace(&self) -> Result<usize> {
        match self.kind {
            ModelKind::LaplaceMixture { k } => Ok(k),
            other => Err(Error::Unsupported(format!("laplace operation on {other:?}"))),
        }
    }

    fn laplace_terms(&self, params: &LaplaceParams) -> Result<DMatrix<f64>> {
        let k = self.require_laplace()?;
        params.validate()?;
        if params.k() != k {
            return Err(Error::Dimension { expected: k, got: params.k() });
        }
        let x = self.data.column(0);
        Ok(DMatrix::from_fn(x.len(), k, |i, j| params.log_joint(x[i], j)))
    }

    pub fn laplace_nll(&self, params: &LaplaceParams) -> Result<f64> {
        let t = self.laplace_terms(params)?;
        let total: f64 = (0..t.nrows())
            .map(|i| logsumexp(&t.row(i).iter().copied().collect::<Vec<_>>()))
            .sum();
        Ok(-total / t.nrows() as f64)
    }

    pub fn laplace_responsibilities(&self, params: &LaplaceParams) -> Result<Responsibilities> {
        let mut t = self.laplace_terms(params)?;
        for i in 0..t.nrows() {
            let lse = logsumexp(&t.row(i).iter().copied().collect::<Vec<_>>());
            if !lse.is_finite() {
                return Err(Error::Numerical(format!("row {i}: all components underflow")));
            }
            for j in 0..t.ncols() {
                t[(i, j)] = (t[(i, j)] - lse).exp();
            }
        }
        Ok(Responsibilities(t))
    }

    /// `-(1/n) Σ_i Σ_j r_ij log(π_j Lap(x_i | m_j, b_j))`.
    pub fn laplace_surrogate(&self, resp: &Responsibilities, params: &LaplaceParams) -> Result<f64> {
        let t = self.laplace_terms(params)?;
        if resp.n() != t.nrows() || resp.k() != t.ncols() {
            return Err(Error::Dimension { expected: t.ncols(), got: resp.k() });
        }
        Ok(-resp.matrix().component_mul(&t).sum() / t.nrows() as f64)
    }

    /// Weighted lower median for locations, weighted mean absolute deviation
    /// for scales, mean responsibility for weights.
    pub fn laplace_m_step(&self, resp: &Responsibilities) -> Result<LaplaceParams> {
        let k = self.require_laplace()?;
        if resp.k() != k || resp.n() != self.n() {
            return Err(Error::Dimension { expected: k, got: resp.k() });
        }
        let x = self.data.column(0);
        let n = x.len() as f64;
        let r = resp.matrix();
        let mut out = LaplaceParams { weights: vec![0.0; k], locs: vec![0.0; k], scales: vec![0.0; k] };
        for j in 0..k {
            let w: Vec<f64> = r.column(j).iter().copied().collect();
            let total: f64 = w.iter().sum();
            if total < 1e-12 {
                return Err(Error::ZeroWeightComponent { component: j });
            }
            let m = weighted_lower_median(&x, &w).expect("positive total weight");
            let dev: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * (xi - m).abs()).sum();
            let b = dev / total;
            if !(b > 0.0) {
                return Err(Error::domain("laplace_mixture", format!("scale of component {j} collapsed to zero")));
            }
            out.weights[j] = total / n;
            out.locs[j] = m;
            out.scales[j] = b;
        }
        let s: f64 = out.weights.iter().sum();
        for w in out.weights.iter_mut() {
            *w /= s;
        }
        Ok(out)
    }
}
