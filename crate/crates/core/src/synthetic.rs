//! Seeded draws from known mixtures.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ComponentParams, Dataset, LaplaceParams, MixtureParams};
use crate::numeric::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticFamily {
    Gaussian,
    Bernoulli,
    Laplace,
}

/// Equal-weight mixture with `k` components in `dim` dimensions.
///
/// Gaussian and Laplace components have unit scale and centres spaced
/// `separation` apart along the first axis. Bernoulli components have
/// probabilities `sigmoid(separation · u)` with `u` standard normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub family: SyntheticFamily,
    pub k: usize,
    pub dim: usize,
    pub separation: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroundTruth {
    Mixture(MixtureParams),
    Laplace(LaplaceParams),
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 || self.dim == 0 {
            return Err(Error::InvalidInput("synthetic spec needs n, k and dim >= 1".into()));
        }
        if !(self.separation >= 0.0) || !self.separation.is_finite() {
            return Err(Error::InvalidInput("separation must be finite and non-negative".into()));
        }
        if self.family == SyntheticFamily::Laplace && self.dim != 1 {
            return Err(Error::InvalidInput("laplace mixtures are univariate".into()));
        }
        Ok(())
    }

    fn centre(&self, j: usize) -> f64 {
        (j as f64 - (self.k as f64 - 1.0) / 2.0) * self.separation
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (k, p) = (spec.k, spec.dim);
    let weights = vec![1.0 / k as f64; k];
    let truth = match spec.family {
        SyntheticFamily::Gaussian => GroundTruth::Mixture(MixtureParams {
            weights: weights.clone(),
            components: (0..k)
                .map(|j| {
                    let mut mean = vec![0.0; p];
                    mean[0] = spec.centre(j);
                    let cov = (0..p).map(|a| (0..p).map(|b| if a == b { 1.0 } else { 0.0 }).collect()).collect();
                    ComponentParams::Gaussian { mean, cov }
                })
                .collect(),
        }),
        SyntheticFamily::Bernoulli => GroundTruth::Mixture(MixtureParams {
            weights: weights.clone(),
            components: (0..k)
                .map(|_| ComponentParams::Bernoulli {
                    p: (0..p)
                        .map(|_| {
                            let u: f64 = StandardNormal.sample(&mut rng);
                            sigmoid(spec.separation * u)
                        })
                        .collect(),
                })
                .collect(),
        }),
        SyntheticFamily::Laplace => GroundTruth::Laplace(LaplaceParams {
            weights: weights.clone(),
            locs: (0..k).map(|j| spec.centre(j)).collect(),
            scales: vec![1.0; k],
        }),
    };
    let mut values = Vec::with_capacity(spec.n * p);
    for _ in 0..spec.n {
        let j = rng.random_range(0..k);
        match &truth {
            GroundTruth::Mixture(m) => match &m.components[j] {
                ComponentParams::Gaussian { mean, .. } => {
                    for &c in mean {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        values.push(c + z);
                    }
                }
                ComponentParams::Bernoulli { p } => {
                    for &q in p {
                        values.push(if rng.random::<f64>() < q { 1.0 } else { 0.0 });
                    }
                }
                ComponentParams::Laplace { .. } => unreachable!("laplace truth is stored separately"),
            },
            GroundTruth::Laplace(l) => {
                let e: f64 = Exp1.sample(&mut rng);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                values.push(l.locs[j] + sign * l.scales[j] * e);
            }
        }
    }
    Ok((Dataset::from_flat(values, p, None)?, truth))
}
