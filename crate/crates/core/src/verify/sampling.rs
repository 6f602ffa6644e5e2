//! Random in-domain parameters and small random model instances.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::expfam::{gaussian_natural, mv_gaussian_natural, FamilySpec};
use crate::models::{Dataset, LatentModel, ModelKind};

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// A random covariance `BBᵀ + ½I` with entries of `B` uniform on `[-1, 1]`.
pub fn random_covariance(p: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let b = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(p, p) * 0.5
}

/// A random point well inside the natural domain of `family`.
pub fn random_natural(family: &FamilySpec, rng: &mut impl Rng) -> Result<DVector<f64>> {
    Ok(match family {
        FamilySpec::Bernoulli | FamilySpec::UnitVarianceGaussian => DVector::from_element(1, rng.random_range(-3.0..3.0)),
        FamilySpec::Categorical { k } => DVector::from_fn(k - 1, |_, _| rng.random_range(-2.0..2.0)),
        FamilySpec::Gaussian => gaussian_natural(rng.random_range(-2.0..2.0), rng.random_range(0.3..3.0)),
        FamilySpec::MvGaussian { p } => {
            let m = DVector::from_fn(*p, |_, _| rng.random_range(-1.0..1.0));
            mv_gaussian_natural(&m, &random_covariance(*p, rng))?
        }
        FamilySpec::Product { factors } => {
            let parts = factors.iter().map(|f| random_natural(f, rng)).collect::<Result<Vec<_>>>()?;
            let mut v = Vec::new();
            for part in parts {
                v.extend(part.iter());
            }
            DVector::from_vec(v)
        }
        FamilySpec::Mixture { k, component } => {
            let w: Vec<f64> = (0..*k).map(|_| rng.random_range(0.5..1.5)).collect();
            let blocks = (0..*k).map(|_| random_natural(component, rng)).collect::<Result<Vec<_>>>()?;
            family.mixture_assemble(&w, &blocks)?
        }
    })
}

/// Every family used by the models, at small sizes.
pub fn reference_families() -> Vec<FamilySpec> {
    let mixture = |c: FamilySpec, k| FamilySpec::mixture(c, k).expect("valid mixture");
    vec![
        FamilySpec::Bernoulli,
        FamilySpec::categorical(3).expect("k = 3"),
        FamilySpec::Gaussian,
        FamilySpec::UnitVarianceGaussian,
        FamilySpec::mv_gaussian(2).expect("p = 2"),
        FamilySpec::product(vec![FamilySpec::Bernoulli; 3]).expect("three factors"),
        mixture(FamilySpec::Gaussian, 2),
        mixture(FamilySpec::mv_gaussian(2).expect("p = 2"), 3),
        mixture(FamilySpec::product(vec![FamilySpec::Bernoulli; 3]).expect("three factors"), 2),
    ]
}

/// Random data of the right type for `kind`, plus a random parameter.
pub fn random_instance(kind: ModelKind, n: usize, p: usize, rng: &mut impl Rng) -> Result<(LatentModel, DVector<f64>)> {
    let p = if matches!(kind, ModelKind::UnitVarianceGaussian) { 1 } else { p };
    let values: Vec<f64> = match kind {
        ModelKind::BernoulliMixture { .. } => (0..n * p).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect(),
        _ => {
            let shift: Vec<f64> = (0..kind.k().max(1)).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut v = Vec::with_capacity(n * p);
            for _ in 0..n {
                let c = shift[rng.random_range(0..shift.len())];
                for _ in 0..p {
                    v.push(c + normal(rng));
                }
            }
            v
        }
    };
    let model = LatentModel::new(kind, Dataset::from_flat(values, p, None)?)?;
    let theta = random_natural(model.family()?, rng)?;
    Ok((model, theta))
}
