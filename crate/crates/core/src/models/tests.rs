use super::*;
use crate::expfam::gaussian_natural;

fn univariate(xs: &[f64]) -> Dataset {
    let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    Dataset::from_rows(&rows, None).unwrap()
}

fn gmm1(xs: &[f64], w: &[f64], m: &[f64], v: &[f64]) -> (LatentModel, NaturalParams) {
    let model = LatentModel::new(ModelKind::GaussianMixture { k: w.len() }, univariate(xs)).unwrap();
    let params = MixtureParams {
        weights: w.to_vec(),
        components: m.iter().zip(v).map(|(&a, &b)| ComponentParams::univariate_gaussian(a, b)).collect(),
    };
    let theta = model.from_standard(&params).unwrap();
    (model, theta)
}

fn normal_logpdf(x: f64, m: f64, v: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (x - m) * (x - m) / (2.0 * v)
}

#[test]
fn symmetric_mixture_splits_the_origin_evenly() {
    let (model, theta) = gmm1(&[0.0], &[0.5, 0.5], &[-1.5, 1.5], &[0.7, 0.7]);
    let r = model.responsibilities(&theta).unwrap();
    assert!((r.matrix()[(0, 0)] - 0.5).abs() < 1e-15);
    assert!((r.matrix()[(0, 1)] - 0.5).abs() < 1e-15);
    let s = model.expected_stats(&theta).unwrap();
    // weight block 0.5, then each component block 0.5·(x, x²) = 0
    assert!((s[0] - 0.5).abs() < 1e-15);
    assert!(s.rows(1, 4).iter().all(|v| v.abs() < 1e-15));
}

#[test]
fn one_component_mixture_is_the_single_gaussian() {
    let xs = [0.3, -1.2, 2.5, 0.9];
    let (mix, theta) = gmm1(&xs, &[1.0], &[0.4], &[1.7]);
    let r = mix.responsibilities(&theta).unwrap();
    assert!(r.matrix().iter().all(|&v| v == 1.0));
    let single = LatentModel::new(ModelKind::SingleGaussian, univariate(&xs)).unwrap();
    let th = single.natural(gaussian_natural(0.4, 1.7)).unwrap();
    assert_eq!(mix.nll(&theta).unwrap(), single.nll(&th).unwrap());
}

#[test]
fn separated_components_follow_bayes_rule() {
    let (model, theta) = gmm1(&[0.0, 10.0], &[0.5, 0.5], &[0.0, 10.0], &[1.0, 1.0]);
    let r = model.responsibilities(&theta).unwrap();
    // p(z=2 | x=0) / p(z=1 | x=0) = exp(-50)
    let ratio = r.matrix()[(0, 1)] / r.matrix()[(0, 0)];
    assert!((ratio / (-50f64).exp() - 1.0).abs() < 1e-10);
    assert!((r.matrix()[(0, 0)] - 1.0).abs() < 1e-20);
}

#[test]
fn single_gaussian_statistics_and_nll_at_mle() {
    let xs = [1.0, 2.0, 4.0, 7.0];
    let model = LatentModel::new(ModelKind::SingleGaussian, univariate(&xs)).unwrap();
    let mean = xs.iter().sum::<f64>() / 4.0;
    let sq = xs.iter().map(|x| x * x).sum::<f64>() / 4.0;
    let var = sq - mean * mean;
    let any = model.natural(gaussian_natural(-3.0, 0.2)).unwrap();
    let s = model.expected_stats(&any).unwrap();
    assert!((s[0] - mean).abs() < 1e-14 && (s[1] - sq).abs() < 1e-13);
    let mle = model.natural(gaussian_natural(mean, var)).unwrap();
    let expected = 0.5 * (2.0 * std::f64::consts::PI * var).ln() + 0.5;
    assert!((model.nll(&mle).unwrap() - expected).abs() < 1e-13);
}

#[test]
fn single_gaussian_gradient_is_the_moment_residual() {
    let xs = [1.0, -2.0, 0.5];
    let model = LatentModel::new(ModelKind::SingleGaussian, univariate(&xs)).unwrap();
    let (m, v) = (0.3, 2.2);
    let g = model.nll_gradient(&model.natural(gaussian_natural(m, v)).unwrap()).unwrap();
    let mean = xs.iter().sum::<f64>() / 3.0;
    let sq = xs.iter().map(|x| x * x).sum::<f64>() / 3.0;
    assert!((g[0] - (m - mean)).abs() < 1e-14);
    assert!((g[1] - (m * m + v - sq)).abs() < 1e-13);
}

#[test]
fn nll_matches_naive_density_sum() {
    let xs = [-1.0, 0.2, 0.8, 3.1, 2.2];
    let (w, m, v) = ([0.3, 0.7], [-0.5, 2.0], [0.6, 1.4]);
    let (model, theta) = gmm1(&xs, &w, &m, &v);
    let naive: f64 = -xs
        .iter()
        .map(|&x| (0..2).map(|j| w[j] * normal_logpdf(x, m[j], v[j]).exp()).sum::<f64>().ln())
        .sum::<f64>()
        / 5.0;
    assert!((model.nll(&theta).unwrap() - naive).abs() < 1e-13);
}

#[test]
fn m_step_reproduces_textbook_updates() {
    let xs = [-1.0, 0.2, 0.8, 3.1, 2.2, 1.7];
    let (w, m, v) = ([0.4, 0.6], [-0.5, 2.0], [0.6, 1.4]);
    let (model, theta) = gmm1(&xs, &w, &m, &v);
    let next = model.m_step(&model.expected_stats(&theta).unwrap()).unwrap();
    let got = model.to_standard(&next).unwrap();
    // textbook: responsibilities by Bayes rule, then weighted moments
    let mut r = vec![[0.0; 2]; xs.len()];
    for (i, &x) in xs.iter().enumerate() {
        let p: Vec<f64> = (0..2).map(|j| w[j] * normal_logpdf(x, m[j], v[j]).exp()).collect();
        let z = p[0] + p[1];
        r[i] = [p[0] / z, p[1] / z];
    }
    for j in 0..2 {
        let nj: f64 = r.iter().map(|ri| ri[j]).sum();
        let mj: f64 = r.iter().zip(&xs).map(|(ri, x)| ri[j] * x).sum::<f64>() / nj;
        let vj: f64 = r.iter().zip(&xs).map(|(ri, x)| ri[j] * (x - mj) * (x - mj)).sum::<f64>() / nj;
        assert!((got.weights[j] - nj / xs.len() as f64).abs() < 1e-12);
        match &got.components[j] {
            ComponentParams::Gaussian { mean, cov } => {
                assert!((mean[0] - mj).abs() < 1e-12);
                assert!((cov[0][0] - vj).abs() < 1e-12);
            }
            _ => unreachable!(),
        }
    }
}

#[test]
fn hard_assignment_gives_subset_moments() {
    let xs = [0.0, 1.0, 2.0, 100.0, 101.0];
    let (model, theta) = gmm1(&xs, &[0.6, 0.4], &[1.0, 100.5], &[0.5, 0.25]);
    let next = model.to_standard(&model.m_step(&model.expected_stats(&theta).unwrap()).unwrap()).unwrap();
    let ComponentParams::Gaussian { mean, cov } = &next.components[0] else { unreachable!() };
    assert!((mean[0] - 1.0).abs() < 1e-12 && (cov[0][0] - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn zero_variance_cluster_is_a_domain_error() {
    // one point carries all of component 2's weight: its variance estimate is 0
    let (model, theta) = gmm1(&[50.0, 50.1, 0.0], &[0.5, 0.5], &[50.05, 0.0], &[1.0, 1.0]);
    let s = model.expected_stats(&theta).unwrap();
    assert_eq!(model.e_step(&theta).unwrap().resp.matrix()[(2, 1)], 1.0);
    let err = model.m_step(&s).unwrap_err();
    assert!(err.is_domain(), "{err}");
}

#[test]
fn chain_rule_kl_matches_bregman() {
    let xs = [0.0, 1.0];
    let (model, a) = gmm1(&xs, &[0.3, 0.7], &[-1.0, 1.0], &[0.5, 2.0]);
    let b = model
        .from_standard(&MixtureParams {
            weights: vec![0.6, 0.4],
            components: vec![ComponentParams::univariate_gaussian(0.2, 1.1), ComponentParams::univariate_gaussian(2.0, 0.3)],
        })
        .unwrap();
    let chain = model.complete_data_kl(&a, &b).unwrap();
    let breg = expfam::bregman_divergence(&b, &a).unwrap();
    assert!((chain - breg).abs() < 1e-12, "{chain} vs {breg}");
    assert!(model.complete_data_kl(&a, &a).unwrap().abs() < 1e-15);
}

#[test]
fn laplace_model_has_no_complete_family() {
    let model = LatentModel::new(ModelKind::LaplaceMixture { k: 2 }, univariate(&[0.0, 1.0])).unwrap();
    assert!(matches!(model.family(), Err(Error::Unsupported(_))));
    assert_eq!(model.responsibility_family().unwrap(), FamilySpec::Categorical { k: 2 });
}

#[test]
fn bernoulli_mixture_rejects_non_binary_data() {
    let d = Dataset::from_rows(&[vec![0.0, 1.0], vec![0.5, 1.0]], None).unwrap();
    assert!(LatentModel::new(ModelKind::BernoulliMixture { k: 2 }, d).is_err());
}

#[test]
fn init_on_degenerate_data_uses_identity_covariance() {
    let model = LatentModel::new(ModelKind::SingleGaussian, Dataset::from_rows(&[vec![1.3]], None).unwrap()).unwrap();
    let p = init_params(&model, InitMethod::Random, 0).unwrap();
    assert!(model.from_standard(&p).is_ok());
}
