//! Multivariate Gaussian with unknown mean and full covariance.
//!
//! Natural coordinates are `(Λm, t)` where `t` packs the upper triangle of
//! `-½Λ` row by row with the off-diagonal entries doubled, so that
//! `⟨θ, T(x)⟩ = xᵀΛm - ½xᵀΛx` for `T(x) = (x, x_i x_j for i ≤ j)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub(crate) fn packed_len(p: usize) -> usize {
    p * (p + 1) / 2
}

/// `(i, j)` pairs with `i ≤ j`, in packing order.
pub(crate) fn pairs(p: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(packed_len(p));
    for i in 0..p {
        for j in i..p {
            out.push((i, j));
        }
    }
    out
}

fn name(p: usize) -> String {
    format!("mv_gaussian(p={p})")
}

pub(crate) fn precision(theta: &DVector<f64>, p: usize) -> DMatrix<f64> {
    let mut lambda = DMatrix::zeros(p, p);
    for (idx, &(i, j)) in pairs(p).iter().enumerate() {
        let t = theta[p + idx];
        if i == j {
            lambda[(i, i)] = -2.0 * t;
        } else {
            lambda[(i, j)] = -t;
            lambda[(j, i)] = -t;
        }
    }
    lambda
}

fn precision_cholesky(theta: &DVector<f64>, p: usize) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(precision(theta, p))
        .ok_or_else(|| Error::domain(name(p), "precision matrix must be symmetric positive-definite"))
}

pub(crate) fn check_natural(theta: &DVector<f64>, p: usize) -> Result<()> {
    precision_cholesky(theta, p).map(|_| ())
}

/// Mean vector and second-moment matrix from mean coordinates.
fn unpack_mean(mu: &DVector<f64>, p: usize) -> (DVector<f64>, DMatrix<f64>) {
    let m = mu.rows(0, p).into_owned();
    let mut second = DMatrix::zeros(p, p);
    for (idx, &(i, j)) in pairs(p).iter().enumerate() {
        second[(i, j)] = mu[p + idx];
        second[(j, i)] = mu[p + idx];
    }
    (m, second)
}

fn covariance_cholesky(mu: &DVector<f64>, p: usize) -> Result<(DVector<f64>, Cholesky<f64, Dyn>)> {
    let (m, second) = unpack_mean(mu, p);
    let cov = second - &m * m.transpose();
    let chol = Cholesky::new(cov).ok_or_else(|| {
        Error::domain(name(p), "covariance E[xxᵀ] - E[x]E[x]ᵀ must be positive-definite")
    })?;
    Ok((m, chol))
}

pub(crate) fn check_mean(mu: &DVector<f64>, p: usize) -> Result<()> {
    covariance_cholesky(mu, p).map(|_| ())
}

/// Mean and covariance of the distribution with natural parameters `theta`.
pub(crate) fn moments(theta: &DVector<f64>, p: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let chol = precision_cholesky(theta, p)?;
    let m = chol.solve(&theta.rows(0, p).into_owned());
    Ok((m, chol.inverse()))
}

pub(crate) fn log_partition(theta: &DVector<f64>, p: usize) -> Result<f64> {
    let chol = precision_cholesky(theta, p)?;
    let eta = theta.rows(0, p).into_owned();
    let m = chol.solve(&eta);
    let half_log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum();
    Ok(0.5 * eta.dot(&m) - half_log_det)
}

pub(crate) fn mean_map(theta: &DVector<f64>, p: usize) -> Result<DVector<f64>> {
    let (m, cov) = moments(theta, p)?;
    let mut out = DVector::zeros(p + packed_len(p));
    out.rows_mut(0, p).copy_from(&m);
    for (idx, &(i, j)) in pairs(p).iter().enumerate() {
        out[p + idx] = cov[(i, j)] + m[i] * m[j];
    }
    Ok(out)
}

pub(crate) fn inverse_mean_map(mu: &DVector<f64>, p: usize) -> Result<DVector<f64>> {
    let (m, chol) = covariance_cholesky(mu, p)?;
    let lambda = chol.inverse();
    let mut out = DVector::zeros(p + packed_len(p));
    out.rows_mut(0, p).copy_from(&(&lambda * &m));
    for (idx, &(i, j)) in pairs(p).iter().enumerate() {
        out[p + idx] = if i == j { -0.5 * lambda[(i, i)] } else { -lambda[(i, j)] };
    }
    Ok(out)
}

/// Covariance of `T(x)` under the model (Isserlis' theorem with a mean shift).
pub(crate) fn fisher(theta: &DVector<f64>, p: usize) -> Result<DMatrix<f64>> {
    let (m, s) = moments(theta, p)?;
    let pr = pairs(p);
    let d = p + pr.len();
    let mut f = DMatrix::zeros(d, d);
    for a in 0..p {
        for b in 0..p {
            f[(a, b)] = s[(a, b)];
        }
        for (idx, &(i, j)) in pr.iter().enumerate() {
            let v = m[i] * s[(a, j)] + m[j] * s[(a, i)];
            f[(a, p + idx)] = v;
            f[(p + idx, a)] = v;
        }
    }
    for (r, &(i, j)) in pr.iter().enumerate() {
        for (c, &(k, l)) in pr.iter().enumerate() {
            f[(p + r, p + c)] = s[(i, k)] * s[(j, l)]
                + s[(i, l)] * s[(j, k)]
                + m[i] * m[k] * s[(j, l)]
                + m[i] * m[l] * s[(j, k)]
                + m[j] * m[k] * s[(i, l)]
                + m[j] * m[l] * s[(i, k)];
        }
    }
    Ok(f)
}

pub(crate) fn sufficient_stats(x: &[f64], p: usize) -> DVector<f64> {
    let mut out = DVector::zeros(p + packed_len(p));
    for i in 0..p {
        out[i] = x[i];
    }
    for (idx, &(i, j)) in pairs(p).iter().enumerate() {
        out[p + idx] = x[i] * x[j];
    }
    out
}

/// Natural parameters from a mean vector and covariance matrix.
pub(crate) fn from_moments(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<DVector<f64>> {
    let p = mean.len();
    let mut mu = DVector::zeros(p + packed_len(p));
    mu.rows_mut(0, p).copy_from(mean);
    for (idx, &(i, j)) in pairs(p).iter().enumerate() {
        mu[p + idx] = cov[(i, j)] + mean[i] * mean[j];
    }
    inverse_mean_map(&mu, p)
}
