//! Fixtures shared by the benchmarks in `benches/`.

use mirror_em::models::{faithful, init_params, InitMethod};
use mirror_em::synthetic::{generate_synthetic, SyntheticFamily, SyntheticSpec};
use mirror_em::{LatentModel, ModelKind, NaturalParams};

/// Standardized Old Faithful with a `k`-component Gaussian mixture and a
/// seeded random start.
pub fn faithful_fixture(k: usize) -> (LatentModel, NaturalParams) {
    let (data, _, _) = faithful().standardize();
    let model = LatentModel::new(ModelKind::GaussianMixture { k }, data).expect("faithful model");
    let theta = model.from_standard(&init_params(&model, InitMethod::Random, 0).expect("init")).expect("start");
    (model, theta)
}

/// Synthetic Gaussian mixture of the given size.
pub fn gmm_fixture(k: usize, dim: usize, n: usize) -> (LatentModel, NaturalParams) {
    let spec = SyntheticSpec { family: SyntheticFamily::Gaussian, k, dim, separation: 3.0, n };
    let (data, _) = generate_synthetic(&spec, 0).expect("synthetic data");
    let model = LatentModel::new(ModelKind::GaussianMixture { k }, data).expect("model");
    let theta = model.from_standard(&init_params(&model, InitMethod::Kmeanspp, 0).expect("init")).expect("start");
    (model, theta)
}
