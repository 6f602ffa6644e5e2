use super::*;
use crate::models::{Dataset, ModelKind};

fn single(xs: &[f64]) -> LatentModel {
    let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    LatentModel::new(ModelKind::SingleGaussian, Dataset::from_rows(&rows, None).unwrap()).unwrap()
}

const XS: [f64; 6] = [-1.3, -0.4, 0.1, 0.5, 0.9, 1.8];

#[test]
fn zero_step_keeps_the_trace_constant() {
    let model = single(&XS);
    let theta = model.natural(gaussian_natural(0.5, 2.0)).unwrap();
    let tr = run_gd(&model, &theta, &GdConfig { step_size: 0.0, iters: 5, ..GdConfig::default() }).unwrap();
    assert!(tr.records.iter().all(|r| r.nll == tr.records[0].nll));
    assert_eq!(tr.final_nll, tr.records[0].nll);
}

#[test]
fn small_variance_start_overshoots_the_domain() {
    let wide: Vec<f64> = XS.iter().map(|x| 10.0 * x).collect();
    let model = single(&wide);
    // σ² = 0.01 against data with E[x²] ≈ 100: the variance coordinate θ₂ = -50
    // receives a push of about +100 and lands at θ₂ > 0
    let theta = model.natural(gaussian_natural(0.0, 0.01)).unwrap();
    let cfg = GdConfig { step_size: 1.0, iters: 10, domain_guard: DomainGuard::Reject, ..GdConfig::default() };
    let tr = run_gd(&model, &theta, &cfg).unwrap();
    assert!(tr.failed());
    assert!(tr.events.iter().any(|e| e.contains("second natural coordinate")));
    let guarded = run_gd(&model, &theta, &GdConfig { domain_guard: DomainGuard::Backtrack, ..cfg }).unwrap();
    assert!(!guarded.failed());
    assert!(guarded.events.iter().any(|e| e.contains("halved")));
}

#[test]
fn tiny_steps_near_the_optimum_decrease_monotonically() {
    let model = single(&XS);
    let theta = model.natural(gaussian_natural(0.3, 1.0)).unwrap();
    let tr = run_gd(&model, &theta, &GdConfig { step_size: 1e-3, iters: 20, ..GdConfig::default() }).unwrap();
    let path = tr.objective_path();
    assert!(path.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn grid_of_one_returns_that_step() {
    let model = single(&XS);
    let theta = model.natural(gaussian_natural(0.3, 1.0)).unwrap();
    let res = grid_search_gd(&model, &theta, &GdConfig { grid: vec![0.05], iters: 5, ..GdConfig::default() }).unwrap();
    assert_eq!(res.best_step, 0.05);
}

#[test]
fn best_candidate_has_the_lowest_final_objective() {
    let model = single(&XS);
    let theta = model.natural(gaussian_natural(2.0, 0.2)).unwrap();
    let res = grid_search_gd(&model, &theta, &GdConfig { iters: 30, ..GdConfig::default() }).unwrap();
    for c in res.candidates.iter().filter(|c| !c.diverged) {
        assert!(res.best_trace.final_nll <= c.final_nll);
    }
}

#[test]
fn every_step_diverging_is_reported() {
    let model = single(&[0.0, 100.0]);
    let theta = model.natural(gaussian_natural(0.0, 1e-3)).unwrap();
    let cfg = GdConfig { grid: vec![1.0, 0.5], iters: 3, domain_guard: DomainGuard::Reject, ..GdConfig::default() };
    assert_eq!(grid_search_gd(&model, &theta, &cfg).unwrap_err(), Error::AllDiverged);
}

#[test]
fn log_grid_endpoints() {
    let g = log_grid(1.0, 1e-6, 13);
    assert_eq!(g.len(), 13);
    assert_eq!(g[0], 1.0);
    assert!((g[12] - 1e-6).abs() < 1e-18);
    assert!((g[2] - 0.1).abs() < 1e-15);
}

#[test]
fn fixed_variance_family_is_uniformly_smooth() {
    let rows: Vec<Vec<f64>> = XS.iter().map(|&x| vec![x]).collect();
    let model = LatentModel::new(ModelKind::UnitVarianceGaussian, Dataset::from_rows(&rows, None).unwrap()).unwrap();
    for v in [1.0, 0.1, 0.01, 0.001] {
        let l = empirical_smoothness(&model, &RegionSampler::around(0.0, 1.0, v), 200, 1, SmoothnessCoords::MeanVariance)
            .unwrap();
        assert!((l - 1.0).abs() < 1e-9, "{l}");
    }
}

#[test]
fn mean_coordinate_step_differs_from_natural_step() {
    let model = single(&XS);
    let theta = gaussian_natural(0.7, 1.6);
    let fam = model.family().unwrap();
    let a = gd_step_natural(&model, &theta, 0.1).unwrap();
    let b = fam.inverse_mean_map(&gd_step_mean_coords(&model, &fam.mean_map(&theta).unwrap(), 0.1).unwrap()).unwrap();
    assert!(fam.bregman(&a, &b).unwrap() > 1e-6);
}
