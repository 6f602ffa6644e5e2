use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mirror_em::solver::{run_em, run_online_em, EmOptions, OnlineOptions, StepSchedule};
use mirror_em::verify::{random_instance, random_natural, reference_families};
use mirror_em::{Dataset, LatentModel, ModelKind};

fn family_index() -> impl Strategy<Value = usize> {
    0..reference_families().len()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mean_map_round_trips(idx in family_index(), seed in any::<u64>()) {
        let fam = &reference_families()[idx];
        let theta = random_natural(fam, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let back = fam.inverse_mean_map(&fam.mean_map(&theta).unwrap()).unwrap();
        prop_assert!((back - &theta).amax() < 1e-9);
    }

    #[test]
    fn bregman_is_non_negative_and_zero_on_the_diagonal(idx in family_index(), seed in any::<u64>()) {
        let fam = &reference_families()[idx];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_natural(fam, &mut rng).unwrap();
        let b = random_natural(fam, &mut rng).unwrap();
        prop_assert!(fam.bregman(&a, &b).unwrap() >= -1e-12);
        prop_assert!(fam.bregman(&a, &a).unwrap().abs() < 1e-12);
    }

    #[test]
    fn fisher_is_symmetric_positive_definite(idx in family_index(), seed in any::<u64>()) {
        let fam = &reference_families()[idx];
        let theta = random_natural(fam, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let f = fam.fisher(&theta).unwrap();
        prop_assert!((&f - f.transpose()).amax() < 1e-12);
        prop_assert!(f.cholesky().is_some());
    }

    #[test]
    fn em_never_increases_the_objective(seed in any::<u64>(), k in 1usize..4, p in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (model, theta) = random_instance(ModelKind::GaussianMixture { k }, 40, p, &mut rng).unwrap();
        let trace = run_em(&model, &model.natural(theta).unwrap(), 15, &EmOptions::default()).unwrap();
        let path = trace.objective_path();
        for w in path.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-10, "{} -> {}", w[0], w[1]);
        }
        for r in &trace.records {
            prop_assert!(r.kl_step >= -1e-12);
        }
    }

    #[test]
    fn responsibilities_are_distributions(seed in any::<u64>(), k in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (model, theta) = random_instance(ModelKind::BernoulliMixture { k }, 25, 3, &mut rng).unwrap();
        let r = model.responsibilities(&model.natural(theta).unwrap()).unwrap();
        prop_assert!(r.max_row_sum_error() < 1e-12);
        prop_assert!(r.matrix().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn chain_rule_kl_equals_bregman(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (model, a) = random_instance(ModelKind::GaussianMixture { k: 2 }, 10, 2, &mut rng).unwrap();
        let b = random_natural(model.family().unwrap(), &mut rng).unwrap();
        let chain = model.complete_data_kl(&model.natural(a.clone()).unwrap(), &model.natural(b.clone()).unwrap()).unwrap();
        let breg = model.family().unwrap().bregman(&b, &a).unwrap();
        prop_assert!((chain - breg).abs() < 1e-9 * breg.abs().max(1.0));
    }

    #[test]
    fn online_em_with_inverse_t_steps_is_a_running_mean(xs in prop::collection::vec(-5.0f64..5.0, 1..30)) {
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let model = LatentModel::new(ModelKind::UnitVarianceGaussian, Dataset::from_rows(&rows, None).unwrap()).unwrap();
        let theta0 = model.natural(DVector::from_element(1, 0.0)).unwrap();
        let opts = OnlineOptions { full_diagnostics: false, store_params: false };
        let trace = run_online_em(&model, &theta0, 1, StepSchedule::InverseT { offset: 0.0 }, 4, &opts).unwrap();
        let idx = mirror_em::solver::online_indices(xs.len(), xs.len(), 4);
        let mean = idx.iter().map(|&i| xs[i]).sum::<f64>() / xs.len() as f64;
        prop_assert!((trace.final_params[0] - mean).abs() < 1e-12);
    }
}
