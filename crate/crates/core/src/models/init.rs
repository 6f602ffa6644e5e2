//! Seeded starting points.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ComponentParams, LaplaceParams, LatentModel, MixtureParams, ModelKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMethod {
    /// Centres at `k` distinct random rows.
    #[default]
    Random,
    /// Centres by k-means++ seeding (squared-distance sampling).
    Kmeanspp,
}

fn centres(model: &LatentModel, method: InitMethod, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let data = model.data();
    let (n, k) = (data.n(), model.k());
    if k > n {
        return Err(Error::InvalidInput(format!("k = {k} exceeds the {n} available rows")));
    }
    let idx: Vec<usize> = match method {
        InitMethod::Random => rand::seq::index::sample(rng, n, k).into_vec(),
        InitMethod::Kmeanspp => {
            let mut chosen = vec![rng.random_range(0..n)];
            while chosen.len() < k {
                let d2: Vec<f64> = data
                    .rows()
                    .map(|x| {
                        chosen
                            .iter()
                            .map(|&c| x.iter().zip(data.row(c)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                            .fold(f64::INFINITY, f64::min)
                    })
                    .collect();
                let next = match WeightedIndex::new(&d2) {
                    Ok(w) => w.sample(rng),
                    // all remaining rows coincide with a centre
                    Err(_) => (0..n).find(|i| !chosen.contains(i)).expect("k <= n"),
                };
                chosen.push(next);
            }
            chosen
        }
    };
    Ok(idx.into_iter().map(|i| data.row(i).to_vec()).collect())
}

fn data_covariance(model: &LatentModel) -> DMatrix<f64> {
    let data = model.data();
    let x = data.to_matrix();
    let mean = DVector::from_vec(data.column_means());
    let mut c = DMatrix::zeros(data.p(), data.p());
    for i in 0..data.n() {
        let d = x.row(i).transpose() - &mean;
        c += &d * d.transpose();
    }
    let c = c / data.n() as f64;
    // degenerate data (one row, constant column) gets an identity start
    if c.clone().cholesky().is_some() {
        c
    } else {
        DMatrix::identity(data.p(), data.p())
    }
}

/// Starting parameters for an exponential-family model.
pub fn init_params(model: &LatentModel, method: InitMethod, seed: u64) -> Result<MixtureParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = model.k();
    let weights = vec![1.0 / k as f64; k];
    let components = match model.kind() {
        ModelKind::GaussianMixture { .. } | ModelKind::SingleGaussian => {
            let cov = data_covariance(model);
            let c = centres(model, method, &mut rng)?;
            c.iter().map(|m| ComponentParams::gaussian(&DVector::from_column_slice(m), &cov)).collect()
        }
        ModelKind::UnitVarianceGaussian => {
            let c = centres(model, method, &mut rng)?;
            vec![ComponentParams::univariate_gaussian(c[0][0], 1.0)]
        }
        ModelKind::BernoulliMixture { .. } => match method {
            InitMethod::Random => {
                let p = model.data().p();
                (0..k)
                    .map(|_| ComponentParams::Bernoulli { p: (0..p).map(|_| rng.random_range(0.25..0.75)).collect() })
                    .collect()
            }
            InitMethod::Kmeanspp => centres(model, method, &mut rng)?
                .into_iter()
                .map(|r| ComponentParams::Bernoulli { p: r.iter().map(|v| 0.25 + 0.5 * v).collect() })
                .collect(),
        },
        ModelKind::LaplaceMixture { .. } => {
            return Err(Error::Unsupported("use init_laplace for laplace mixtures".into()))
        }
    };
    Ok(MixtureParams { weights, components })
}

/// Starting parameters for a Laplace mixture: centres from the data, common
/// scale equal to the mean absolute deviation about the median.
pub fn init_laplace(model: &LatentModel, method: InitMethod, seed: u64) -> Result<LaplaceParams> {
    if !matches!(model.kind(), ModelKind::LaplaceMixture { .. }) {
        return Err(Error::Unsupported("init_laplace on an exponential-family model".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = model.k();
    let x = model.data().column(0);
    let med = super::weighted_lower_median(&x, &vec![1.0; x.len()]).expect("non-empty");
    let mad = x.iter().map(|v| (v - med).abs()).sum::<f64>() / x.len() as f64;
    let scale = if mad > 0.0 { mad } else { 1.0 };
    let locs = centres(model, method, &mut rng)?.into_iter().map(|r| r[0]).collect();
    Ok(LaplaceParams { weights: vec![1.0 / k as f64; k], locs, scales: vec![scale; k] })
}
