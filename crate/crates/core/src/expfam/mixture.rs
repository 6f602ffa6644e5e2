//! Complete-data family of a finite mixture.
//!
//! Coordinates are `(ω_1..ω_{k-1}, η_1..η_k)`: weight logits (ω_k = 0) then one
//! natural block per component. With `a_j = ω_j + A_c(η_j)` the joint density
//! is `exp(a_j - A_c(η_j) + ⟨η_j, T(x)⟩ - A(θ)) h(x)` at `z = j`, so
//! `A(θ) = logsumexp(a)` and `π = softmax(a)`.

use nalgebra::{DMatrix, DVector};

use super::FamilySpec;
use crate::error::{Error, Result};
use crate::numeric::{logsumexp, softmax_into};

pub(crate) struct Layout {
    pub k: usize,
    pub block: usize,
}

impl Layout {
    pub fn new(component: &FamilySpec, k: usize) -> Self {
        Layout { k, block: component.dim() }
    }

    pub fn weights(&self) -> usize {
        self.k - 1
    }

    pub fn offset(&self, j: usize) -> usize {
        self.weights() + j * self.block
    }

    pub fn dim(&self) -> usize {
        self.weights() + self.k * self.block
    }

    pub fn block(&self, v: &DVector<f64>, j: usize) -> DVector<f64> {
        v.rows(self.offset(j), self.block).into_owned()
    }
}

/// Per-component logits `a_j = ω_j + A_c(η_j)` and the component log-partitions.
pub(crate) fn logits(component: &FamilySpec, k: usize, theta: &DVector<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let lay = Layout::new(component, k);
    let mut a = Vec::with_capacity(k);
    let mut ac = Vec::with_capacity(k);
    for j in 0..k {
        let aj = component.log_partition(&lay.block(theta, j))?;
        let w = if j < k - 1 { theta[j] } else { 0.0 };
        ac.push(aj);
        a.push(w + aj);
    }
    Ok((a, ac))
}

pub(crate) fn weights(component: &FamilySpec, k: usize, theta: &DVector<f64>) -> Result<Vec<f64>> {
    let (a, _) = logits(component, k, theta)?;
    let mut pi = vec![0.0; k];
    softmax_into(&a, &mut pi);
    Ok(pi)
}

pub(crate) fn check_natural(component: &FamilySpec, k: usize, theta: &DVector<f64>) -> Result<()> {
    let lay = Layout::new(component, k);
    for j in 0..k {
        component.check_natural(&lay.block(theta, j))?;
    }
    Ok(())
}

/// Mixture weights and per-component mean parameters implied by `mu`.
pub(crate) fn split_mean(component: &FamilySpec, k: usize, mu: &DVector<f64>) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    let lay = Layout::new(component, k);
    let mut pi: Vec<f64> = (0..k - 1).map(|j| mu[j]).collect();
    let last = 1.0 - pi.iter().sum::<f64>();
    pi.push(last);
    if let Some(j) = pi.iter().position(|&p| !(p > 0.0)) {
        return Err(Error::domain(
            format!("mixture(k={k})"),
            format!("weight of component {j} must be positive, got {}", pi[j]),
        ));
    }
    let nus = (0..k).map(|j| lay.block(mu, j) / pi[j]).collect();
    Ok((pi, nus))
}

pub(crate) fn check_mean(component: &FamilySpec, k: usize, mu: &DVector<f64>) -> Result<()> {
    let (_, nus) = split_mean(component, k, mu)?;
    for nu in &nus {
        component.check_mean(nu)?;
    }
    Ok(())
}

pub(crate) fn log_partition(component: &FamilySpec, k: usize, theta: &DVector<f64>) -> Result<f64> {
    let (a, _) = logits(component, k, theta)?;
    Ok(logsumexp(&a))
}

pub(crate) fn mean_map(component: &FamilySpec, k: usize, theta: &DVector<f64>) -> Result<DVector<f64>> {
    let lay = Layout::new(component, k);
    let pi = weights(component, k, theta)?;
    let mut mu = DVector::zeros(lay.dim());
    for j in 0..k - 1 {
        mu[j] = pi[j];
    }
    for (j, &w) in pi.iter().enumerate() {
        let g = component.mean_map(&lay.block(theta, j))?;
        mu.rows_mut(lay.offset(j), lay.block).copy_from(&(g * w));
    }
    Ok(mu)
}

/// Joint natural parameters from weights and per-component natural blocks.
pub(crate) fn assemble(component: &FamilySpec, pi: &[f64], etas: &[DVector<f64>]) -> Result<DVector<f64>> {
    let k = pi.len();
    let lay = Layout::new(component, k);
    let mut theta = DVector::zeros(lay.dim());
    let ac: Vec<f64> = etas.iter().map(|e| component.log_partition(e)).collect::<Result<_>>()?;
    let base = pi[k - 1].ln() - ac[k - 1];
    for j in 0..k - 1 {
        theta[j] = pi[j].ln() - ac[j] - base;
    }
    for (j, eta) in etas.iter().enumerate() {
        theta.rows_mut(lay.offset(j), lay.block).copy_from(eta);
    }
    Ok(theta)
}

pub(crate) fn inverse_mean_map(component: &FamilySpec, k: usize, mu: &DVector<f64>) -> Result<DVector<f64>> {
    let (pi, nus) = split_mean(component, k, mu)?;
    let etas: Vec<DVector<f64>> = nus.iter().map(|nu| component.inverse_mean_map(nu)).collect::<Result<_>>()?;
    assemble(component, &pi, &etas)
}

/// `Σ_j π_j (g_j g_jᵀ + blockdiag ∇²A_c(η_j)) - ḡḡᵀ` where `g_j` is the
/// complete statistic's conditional mean given `z = j`.
pub(crate) fn fisher(component: &FamilySpec, k: usize, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
    let lay = Layout::new(component, k);
    let d = lay.dim();
    let pi = weights(component, k, theta)?;
    let mut f = DMatrix::zeros(d, d);
    let mut gbar = DVector::zeros(d);
    for j in 0..k {
        let eta = lay.block(theta, j);
        let mut g = DVector::zeros(d);
        if j < k - 1 {
            g[j] = 1.0;
        }
        g.rows_mut(lay.offset(j), lay.block).copy_from(&component.mean_map(&eta)?);
        f += &g * g.transpose() * pi[j];
        let h = component.fisher(&eta)? * pi[j];
        let o = lay.offset(j);
        let mut view = f.view_mut((o, o), (lay.block, lay.block));
        view += h;
        gbar += g * pi[j];
    }
    f -= &gbar * gbar.transpose();
    Ok(f)
}

/// Complete-data sufficient statistic `S(x, z=j)`.
pub(crate) fn complete_stats(component: &FamilySpec, k: usize, x: &[f64], j: usize) -> Result<DVector<f64>> {
    let lay = Layout::new(component, k);
    let mut s = DVector::zeros(lay.dim());
    if j < k - 1 {
        s[j] = 1.0;
    }
    s.rows_mut(lay.offset(j), lay.block).copy_from(&component.sufficient_stats(x)?);
    Ok(s)
}
