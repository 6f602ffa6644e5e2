use nalgebra::DVector;

use super::*;
use crate::expfam::FamilySpec;
use crate::expfam::gaussian_natural;
use crate::models::{ComponentParams, Dataset, LaplaceParams, MixtureParams, ModelKind};
use crate::synthetic::{generate_synthetic, SyntheticFamily, SyntheticSpec};

fn univariate(xs: &[f64]) -> Dataset {
    Dataset::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>(), None).unwrap()
}

fn gmm_model(seed: u64, k: usize, n: usize) -> (LatentModel, NaturalParams) {
    let spec = SyntheticSpec { family: SyntheticFamily::Gaussian, k, dim: 1, separation: 3.0, n };
    let (data, _) = generate_synthetic(&spec, seed).unwrap();
    let model = LatentModel::new(ModelKind::GaussianMixture { k }, data).unwrap();
    let params = MixtureParams {
        weights: vec![1.0 / k as f64; k],
        components: (0..k).map(|j| ComponentParams::univariate_gaussian(j as f64 - 0.7, 1.5)).collect(),
    };
    let theta = model.from_standard(&params).unwrap();
    (model, theta)
}

fn no_stop() -> EmOptions {
    EmOptions { tol: 0.0, ..EmOptions::default() }
}

#[test]
fn single_gaussian_converges_in_one_step() {
    let xs = [0.5, 1.5, -2.0, 4.0];
    let model = LatentModel::new(ModelKind::SingleGaussian, univariate(&xs)).unwrap();
    let theta0 = model.natural(gaussian_natural(10.0, 0.1)).unwrap();
    let tr = run_em(&model, &theta0, 5, &EmOptions::default()).unwrap();
    assert_eq!(tr.status, TraceStatus::Converged { at: 2 });
    let mean = xs.iter().sum::<f64>() / 4.0;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 4.0;
    let expected = gaussian_natural(mean, var);
    assert!((DVector::from_vec(tr.final_params.clone()) - expected).amax() < 1e-12);
    assert!(tr.records[1].bregman_stat.abs() < 1e-14);
}

#[test]
fn symmetric_saddle_is_a_fixed_point() {
    let xs = [-2.0, -1.0, 1.0, 2.0];
    let model = LatentModel::new(ModelKind::GaussianMixture { k: 2 }, univariate(&xs)).unwrap();
    let c = ComponentParams::univariate_gaussian(0.0, 2.5);
    let theta = model.from_standard(&MixtureParams { weights: vec![0.5, 0.5], components: vec![c.clone(), c] }).unwrap();
    assert!(bregman_stationarity(&model, &theta).unwrap().abs() < 1e-15);
    let tr = run_em(&model, &theta, 3, &no_stop()).unwrap();
    let last = model.to_standard(&model.natural(DVector::from_vec(tr.final_params)).unwrap()).unwrap();
    assert!((last.weights[0] - 0.5).abs() < 1e-14);
    assert_eq!(last.components[0], last.components[1]);
}

#[test]
fn mirror_step_matches_moment_matching() {
    for seed in 0..5 {
        let (model, theta) = gmm_model(seed, 2, 30);
        let a = mirror_step(&model, &theta).unwrap();
        let b = model.m_step(&model.expected_stats(&theta).unwrap()).unwrap();
        assert!((a.values() - b.values()).amax() < 1e-12);
    }
}

#[test]
fn stationarity_equals_kl_to_the_next_iterate() {
    let (model, theta) = gmm_model(3, 3, 40);
    let next = mirror_step(&model, &theta).unwrap();
    let stat = bregman_stationarity(&model, &theta).unwrap();
    let breg = crate::expfam::bregman_divergence(&theta, &next).unwrap();
    let chain = model.complete_data_kl(&next, &theta).unwrap();
    assert!((stat - breg).abs() < 1e-10, "{stat} {breg}");
    assert!((stat - chain).abs() < 1e-10, "{stat} {chain}");
}

#[test]
fn single_gaussian_one_step_from_optimum_matches_gaussian_kl() {
    let xs = [0.0, 1.0, 2.0, 5.0];
    let model = LatentModel::new(ModelKind::SingleGaussian, univariate(&xs)).unwrap();
    let (m, v) = (2.0, 3.5); // data moments: mean 2, variance 3.5
    let theta = model.natural(gaussian_natural(1.0, 2.0)).unwrap();
    let stat = bregman_stationarity(&model, &theta).unwrap();
    // KL(N(m, v) ‖ N(1, 2))
    let kl = 0.5 * ((2.0f64 / v).ln() + (v + (m - 1.0) * (m - 1.0)) / 2.0 - 1.0);
    assert!((stat - kl).abs() < 1e-13);
}

#[test]
fn natural_decrement_vanishes_at_a_fixed_point() {
    let xs = [0.5, 1.5, -2.0, 4.0];
    let model = LatentModel::new(ModelKind::SingleGaussian, univariate(&xs)).unwrap();
    let fixed = mirror_step(&model, &model.natural(gaussian_natural(0.0, 1.0)).unwrap()).unwrap();
    assert!(natural_decrement(&model, &fixed).unwrap() < 1e-20);
}

#[test]
fn no_missing_information_without_latent_variables() {
    let xs = [0.5, 1.5, -2.0, 4.0, 0.1];
    let model = LatentModel::new(ModelKind::SingleGaussian, univariate(&xs)).unwrap();
    let mi = missing_information(&model, &model.natural(gaussian_natural(0.3, 1.2)).unwrap()).unwrap();
    assert!(mi.lambda_max.abs() < 1e-6, "{}", mi.lambda_max);
    assert!(mi.matrix.amax() < 1e-6);
}

#[test]
fn rate_checks_pass_on_exact_traces_and_flag_corruption() {
    let (model, theta) = gmm_model(5, 2, 60);
    let tr = run_em(&model, &theta, 30, &no_stop()).unwrap();
    let rep = check_rate_bounds(&tr, 1e-9, 1e-10, 1e-8);
    assert!(rep.pass, "{rep:?}");

    let one = run_em(&model, &theta, 1, &no_stop()).unwrap();
    let r1 = check_rate_bounds(&one, 1e-9, 1e-10, 1e-8);
    assert!(r1.pass);
    assert!((r1.average_decrease - (one.records[0].nll - one.final_nll)).abs() < 1e-15);

    let mut bad = tr.clone();
    bad.records[7].nll += 1.0;
    let rb = check_rate_bounds(&bad, 1e-9, 1e-10, 1e-8);
    assert!(!rb.pass);
    // L_8 went up, so the step from t = 7 is the offender
    assert_eq!(rb.monotone_violations, vec![7]);
}

#[test]
fn linear_rate_needs_a_tail() {
    let (model, theta) = gmm_model(5, 2, 60);
    let opts = EmOptions { missing_info_from: Some(8), ..no_stop() };
    let tr = run_em(&model, &theta, 10, &opts).unwrap();
    let err = check_local_linear_rate(&tr, tr.final_nll, 1e-9, 1e-6).unwrap_err();
    assert_eq!(err, Error::InsufficientTail { required: 5, got: 3 });
}

#[test]
fn multiplicative_gem_with_one_component_is_exact_em() {
    let (model, theta) = gmm_model(2, 1, 20);
    let exact = run_em(&model, &theta, 5, &no_stop()).unwrap();
    let gem = run_generalized_em(&model, &theta, 5, &GemPolicy::Multiplicative { c: 1.0 }, 4, &no_stop()).unwrap();
    assert_eq!(exact.final_params, gem.final_params);
}

#[test]
fn additive_gem_with_zero_tolerance_is_exact_em() {
    let (model, theta) = gmm_model(2, 2, 20);
    let exact = run_em(&model, &theta, 5, &no_stop()).unwrap();
    let policy = GemPolicy::Additive { epsilons: EpsilonSchedule::Constant { epsilon: 0.0 }, max_inner: 10 };
    let gem = run_generalized_em(&model, &theta, 5, &policy, 4, &no_stop()).unwrap();
    assert_eq!(exact.final_params, gem.final_params);
}

#[test]
fn additive_gem_meets_its_certificates() {
    let (model, theta) = gmm_model(8, 2, 50);
    let eps = EpsilonSchedule::InverseSquare { scale: 1.0 };
    let policy = GemPolicy::Additive { epsilons: eps.clone(), max_inner: 100_000 };
    let tr = run_generalized_em(&model, &theta, 20, &policy, 0, &no_stop()).unwrap();
    let rep = check_gem_additive(&tr, &eps, 1e-9);
    assert!(rep.pass, "{rep:?}");
    assert!(tr.records.iter().all(|r| r.surrogate_gap.unwrap() >= -1e-12));
}

#[test]
fn tiny_inner_cap_raises_a_certificate_error() {
    let (model, theta) = gmm_model(8, 2, 50);
    let policy = GemPolicy::Additive { epsilons: EpsilonSchedule::Constant { epsilon: 1e-14 }, max_inner: 2 };
    let err = run_generalized_em(&model, &theta, 3, &policy, 0, &no_stop()).unwrap_err();
    assert!(matches!(err, Error::Certificate { .. }));
}

#[test]
fn online_em_on_one_sample_is_batch_em() {
    let model = LatentModel::new(ModelKind::UnitVarianceGaussian, univariate(&[1.7])).unwrap();
    let theta0 = model.natural(DVector::from_element(1, -3.0)).unwrap();
    let online = run_online_em(&model, &theta0, 1, StepSchedule::default(), 5, &OnlineOptions::default()).unwrap();
    let batch = run_em(&model, &theta0, 1, &no_stop()).unwrap();
    assert_eq!(online.final_params, batch.final_params);
}

#[test]
fn unit_step_online_update_is_a_one_sample_m_step() {
    let spec = SyntheticSpec { family: SyntheticFamily::Bernoulli, k: 2, dim: 4, separation: 2.0, n: 30 };
    let model = LatentModel::new(ModelKind::BernoulliMixture { k: 2 }, generate_synthetic(&spec, 1).unwrap().0).unwrap();
    let theta0 = model.from_standard(&crate::models::init_params(&model, Default::default(), 3).unwrap()).unwrap();
    let opts = OnlineOptions { full_diagnostics: false, store_params: false };
    let tr = run_online_em(&model, &theta0, 1, StepSchedule::Constant { gamma: 1.0 }, 9, &opts).unwrap();
    // one-sample statistics sit on the boundary for Bernoulli components
    assert!(tr.failed());
}

#[test]
fn map_em_regularizes_a_single_point() {
    let model = LatentModel::new(ModelKind::SingleGaussian, univariate(&[2.0])).unwrap();
    let theta0 = model.natural(gaussian_natural(0.0, 1.0)).unwrap();
    let mle = run_em(&model, &theta0, 3, &no_stop()).unwrap();
    assert!(mle.failed());
    let fam = model.family().unwrap();
    let prior = Prior::new(fam, DVector::from_vec(vec![0.0, 1.0]), 1.0).unwrap();
    let map = run_map_em(&model, &theta0, 5, &prior, &EmOptions::default()).unwrap();
    assert!(!map.failed());
    let (m, v) = crate::expfam::gaussian_moments(&DVector::from_vec(map.final_params.clone()));
    assert!((m - 1.0).abs() < 1e-12 && v.is_finite() && v > 0.0);
}

#[test]
fn improper_priors_are_rejected() {
    let fam = FamilySpec::Gaussian;
    assert!(matches!(
        Prior::new(&fam, DVector::from_vec(vec![1.0, 1.0]), 1.0),
        Err(Error::ImproperPrior(_))
    ));
    assert!(matches!(Prior::new(&fam, DVector::from_vec(vec![0.0, 1.0]), 0.0), Err(Error::ImproperPrior(_))));
}

#[test]
fn strong_prior_dominates() {
    let model = LatentModel::new(ModelKind::SingleGaussian, univariate(&[2.0, 3.0, 7.0])).unwrap();
    let m0 = DVector::from_vec(vec![-1.0, 3.0]);
    let prior = Prior::new(model.family().unwrap(), m0.clone(), 1e12).unwrap();
    let theta0 = model.natural(gaussian_natural(0.0, 1.0)).unwrap();
    let tr = run_map_em(&model, &theta0, 2, &prior, &no_stop()).unwrap();
    let target = FamilySpec::Gaussian.inverse_mean_map(&m0).unwrap();
    assert!((DVector::from_vec(tr.final_params) - target).amax() < 1e-9);
}

#[test]
fn estep_analysis_stays_put_at_a_fixed_point() {
    let xs = [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0];
    let model = LatentModel::new(ModelKind::LaplaceMixture { k: 2 }, univariate(&xs)).unwrap();
    let p0 = LaplaceParams { weights: vec![0.5, 0.5], locs: vec![-2.0, 2.0], scales: vec![1.0, 1.0] };
    let tr = run_estep_analysis(&model, &p0, 30).unwrap();
    let rep = check_estep_bound(&tr, 1e-9, 1e-10);
    assert!(rep.pass, "{rep:?}");
    let last = tr.records.last().unwrap();
    assert!(last.kl_step < 1e-12);
    // symmetric data and start: locations stay mirror images
    let k = 2;
    let p = &tr.final_params;
    assert!((p[k] + p[k + 1]).abs() < 1e-12);
}

#[test]
fn trace_jsonl_round_trip() {
    let (model, theta) = gmm_model(1, 2, 20);
    let tr = run_em(&model, &theta, 4, &EmOptions { store_params: true, ..no_stop() }).unwrap();
    let mut buf = Vec::new();
    tr.write_jsonl(&mut buf).unwrap();
    let back = EmTrace::read_jsonl(buf.as_slice()).unwrap();
    assert_eq!(back, tr);
    let mut csv = Vec::new();
    tr.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
}
