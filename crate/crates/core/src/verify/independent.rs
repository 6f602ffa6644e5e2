//! Model quantities recomputed from usual (weights, moments, probabilities)
//! parameters with textbook formulas. Nothing here calls into `expfam` or the
//! model E-step.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::models::{LatentModel, ModelKind};

#[derive(Debug, Clone)]
pub(crate) enum Component {
    Normal { mean: DVector<f64>, prec: DMatrix<f64>, log_det: f64 },
    UnitNormal { mean: f64 },
    Coins { p: Vec<f64> },
}

/// A latent-variable model decoded from its natural parameter vector.
#[derive(Debug, Clone)]
pub(crate) struct Decoded {
    pub weights: Vec<f64>,
    pub components: Vec<Component>,
    /// Whether the statistic vector leads with `k - 1` label indicators.
    pub labelled: bool,
    /// Dimension of one component block.
    pub block: usize,
    pub p: usize,
}

fn block_len(kind: ModelKind, p: usize) -> usize {
    match kind {
        ModelKind::BernoulliMixture { .. } => p,
        ModelKind::UnitVarianceGaussian => 1,
        _ => p + p * (p + 1) / 2,
    }
}

fn normal_from_block(b: &[f64], p: usize) -> Result<Component> {
    let mut prec = DMatrix::zeros(p, p);
    let mut idx = p;
    for i in 0..p {
        for j in i..p {
            if i == j {
                prec[(i, i)] = -2.0 * b[idx];
            } else {
                prec[(i, j)] = -b[idx];
                prec[(j, i)] = -b[idx];
            }
            idx += 1;
        }
    }
    let lu = prec.clone().lu();
    let det = lu.determinant();
    if !(det > 0.0) || (0..p).any(|i| prec[(i, i)] <= 0.0) {
        return Err(Error::InvalidInput("oracle: precision is not positive-definite".into()));
    }
    let cov = lu.try_inverse().ok_or_else(|| Error::Solve("oracle: singular precision".into()))?;
    let h = DVector::from_column_slice(&b[..p]);
    let mean = &cov * h;
    Ok(Component::Normal { mean, prec, log_det: -det.ln() })
}

fn component_from_block(kind: ModelKind, b: &[f64], p: usize) -> Result<Component> {
    match kind {
        ModelKind::BernoulliMixture { .. } => Ok(Component::Coins { p: b.iter().map(|&e| 1.0 / (1.0 + (-e).exp())).collect() }),
        ModelKind::UnitVarianceGaussian => Ok(Component::UnitNormal { mean: b[0] }),
        _ => normal_from_block(b, p),
    }
}

/// `log ∫ exp(⟨η, T(x)⟩) dx` up to a constant shared by every component.
fn relative_log_normalizer(c: &Component) -> f64 {
    match c {
        Component::Normal { mean, prec, log_det, .. } => 0.5 * (mean.transpose() * prec * mean)[(0, 0)] + 0.5 * log_det,
        Component::UnitNormal { mean } => 0.5 * mean * mean,
        Component::Coins { p } => p.iter().map(|&q| -(1.0 - q).ln()).sum(),
    }
}

pub(crate) fn decode(model: &LatentModel, theta: &DVector<f64>) -> Result<Decoded> {
    let kind = model.kind();
    let p = model.data().p();
    let block = block_len(kind, p);
    let (labelled, k) = match kind {
        ModelKind::GaussianMixture { k } | ModelKind::BernoulliMixture { k } => (true, k),
        ModelKind::SingleGaussian | ModelKind::UnitVarianceGaussian => (false, 1),
        ModelKind::LaplaceMixture { .. } => {
            return Err(Error::Unsupported("oracle: laplace mixtures have no natural parameters".into()))
        }
    };
    let lead = if labelled { k - 1 } else { 0 };
    if theta.len() != lead + k * block {
        return Err(Error::Dimension { expected: lead + k * block, got: theta.len() });
    }
    let components = (0..k)
        .map(|j| component_from_block(kind, &theta.as_slice()[lead + j * block..lead + (j + 1) * block], p))
        .collect::<Result<Vec<_>>>()?;
    let logits: Vec<f64> = (0..k)
        .map(|j| {
            let w = if j < lead { theta[j] } else { 0.0 };
            w + relative_log_normalizer(&components[j])
        })
        .collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = raw.iter().sum();
    Ok(Decoded { weights: raw.iter().map(|r| r / z).collect(), components, labelled, block, p })
}

impl Decoded {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn stat_len(&self) -> usize {
        let lead = if self.labelled { self.k() - 1 } else { 0 };
        lead + self.k() * self.block
    }

    /// `log π_j + log p(x | component j)`.
    pub fn log_joint(&self, x: &[f64], j: usize) -> f64 {
        let lp = match &self.components[j] {
            Component::Normal { mean, prec, log_det, .. } => {
                let d = DVector::from_column_slice(x) - mean;
                let q = (d.transpose() * prec * &d)[(0, 0)];
                -0.5 * (self.p as f64) * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det - 0.5 * q
            }
            Component::UnitNormal { mean } => {
                -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * (x[0] - mean) * (x[0] - mean)
            }
            Component::Coins { p } => {
                x.iter().zip(p).map(|(&v, &q)| if v == 1.0 { q.ln() } else { (1.0 - q).ln() }).sum()
            }
        };
        self.weights[j].ln() + lp
    }

    /// Complete-data statistic `S(x, j)`, written into `out` (added with weight `w`).
    pub fn add_complete_stats(&self, x: &[f64], j: usize, w: f64, out: &mut DVector<f64>) {
        let lead = if self.labelled { self.k() - 1 } else { 0 };
        if j < lead {
            out[j] += w;
        }
        let o = lead + j * self.block;
        match &self.components[j] {
            Component::Normal { .. } => {
                let p = self.p;
                for a in 0..p {
                    out[o + a] += w * x[a];
                }
                let mut idx = o + p;
                for a in 0..p {
                    for b in a..p {
                        out[idx] += w * x[a] * x[b];
                        idx += 1;
                    }
                }
            }
            Component::UnitNormal { .. } => out[o] += w * x[0],
            Component::Coins { .. } => {
                for a in 0..self.p {
                    out[o + a] += w * x[a];
                }
            }
        }
    }

    /// Per-row posterior over labels.
    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let lj: Vec<f64> = (0..self.k()).map(|j| self.log_joint(x, j)).collect();
        let top = lj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = lj.iter().map(|l| (l - top).exp()).collect();
        let z: f64 = raw.iter().sum();
        raw.iter().map(|r| r / z).collect()
    }
}

/// Average per-row covariance of `S(x_i, z)` under `p(z | x_i, θ)`: the
/// conditional (missing) information.
pub fn conditional_information(model: &LatentModel, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
    let dec = decode(model, theta)?;
    let d = dec.stat_len();
    let n = model.n();
    let mut total = DMatrix::zeros(d, d);
    for x in model.data().rows() {
        let r = dec.posterior(x);
        let mut mean = DVector::zeros(d);
        let mut second = DMatrix::zeros(d, d);
        for (j, &rj) in r.iter().enumerate() {
            let mut s = DVector::zeros(d);
            dec.add_complete_stats(x, j, 1.0, &mut s);
            mean.axpy(rj, &s, 1.0);
            second += &s * s.transpose() * rj;
        }
        total += second - &mean * mean.transpose();
    }
    Ok(total / n as f64)
}

/// Average negative log-likelihood from usual-parameter densities.
pub fn direct_nll(model: &LatentModel, theta: &DVector<f64>) -> Result<f64> {
    let dec = decode(model, theta)?;
    let mut total = 0.0;
    for x in model.data().rows() {
        let lj: Vec<f64> = (0..dec.k()).map(|j| dec.log_joint(x, j)).collect();
        let top = lj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        total += top + lj.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
    }
    Ok(-total / model.n() as f64)
}
