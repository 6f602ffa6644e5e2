//! Exact `s(θ)` by summing over every joint label assignment.

use nalgebra::DVector;

use super::independent::decode;
use crate::error::{Error, Result};
use crate::models::LatentModel;

pub const MAX_ENUMERATION_N: usize = 8;
pub const MAX_ENUMERATION_K: usize = 3;

/// `E[(1/n) Σ_i S(x_i, z_i) | x, θ]` over all `k^n` joint assignments `z`.
pub fn enumerate_posterior_stats(model: &LatentModel, theta: &DVector<f64>) -> Result<DVector<f64>> {
    let n = model.n();
    let dec = decode(model, theta)?;
    let k = dec.k();
    if n > MAX_ENUMERATION_N || k > MAX_ENUMERATION_K {
        return Err(Error::TooLarge { terms: (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX) });
    }
    let rows: Vec<&[f64]> = model.data().rows().collect();
    let table: Vec<Vec<f64>> = rows.iter().map(|x| (0..k).map(|j| dec.log_joint(x, j)).collect()).collect();
    let total = k.pow(n as u32);
    let mut log_w = Vec::with_capacity(total);
    let mut labels = vec![0usize; n];
    for code in 0..total {
        let mut c = code;
        let mut lw = 0.0;
        for i in 0..n {
            labels[i] = c % k;
            c /= k;
            lw += table[i][labels[i]];
        }
        log_w.push(lw);
    }
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = log_w.iter().map(|l| (l - top).exp()).sum();
    let mut out = DVector::zeros(dec.stat_len());
    for (code, lw) in log_w.iter().enumerate() {
        let w = (lw - top).exp() / z / n as f64;
        let mut c = code;
        for x in &rows {
            dec.add_complete_stats(x, c % k, w, &mut out);
            c /= k;
        }
    }
    Ok(out)
}
