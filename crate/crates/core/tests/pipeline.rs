use std::io::BufReader;

use mirror_em::models::{faithful, init_params, InitMethod};
use mirror_em::solver::{check_rate_bounds, run_em, EmOptions, EmTrace};
use mirror_em::{Dataset, LatentModel, ModelKind, Tolerances};

fn faithful_fit(iters: usize) -> (LatentModel, EmTrace) {
    let (data, _, _) = faithful().standardize();
    let model = LatentModel::new(ModelKind::GaussianMixture { k: 2 }, data).unwrap();
    let theta0 = model.from_standard(&init_params(&model, InitMethod::Kmeanspp, 7).unwrap()).unwrap();
    let trace = run_em(&model, &theta0, iters, &EmOptions { store_params: true, ..Default::default() }).unwrap();
    (model, trace)
}

#[test]
fn faithful_two_component_fit_finds_the_two_eruption_modes() {
    let (model, trace) = faithful_fit(200);
    let tol = Tolerances::DEFAULT;
    assert!(check_rate_bounds(&trace, tol.rate_slack, tol.monotone_slack, tol.kl_agreement).pass);
    let params = model.to_standard(&model.natural(trace.final_params.clone().into()).unwrap()).unwrap();
    let mut w = params.weights.clone();
    w.sort_by(f64::total_cmp);
    // the short/long eruption split of the geyser data is roughly 35/65
    assert!(w[0] > 0.3 && w[0] < 0.4, "{w:?}");
    assert!(trace.min_bregman_stat() < 1e-10);
}

#[test]
fn trace_survives_a_jsonl_round_trip() {
    let (_, trace) = faithful_fit(10);
    let mut buf = Vec::new();
    trace.write_jsonl(&mut buf).unwrap();
    let back = EmTrace::read_jsonl(BufReader::new(&buf[..])).unwrap();
    assert_eq!(back, trace);
    let mut csv = Vec::new();
    trace.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), trace.len() + 1);
    assert!(text.starts_with("t,nll,kl_step,bregman_stat"));
}

#[test]
fn csv_data_loads_and_fits() {
    let dir = std::env::temp_dir().join(format!("mirror-em-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bin.csv");
    std::fs::write(&path, "a,b\n0,1\n1,1\n0,0\n1,0\n1,1\n0,0\n").unwrap();
    let data = Dataset::from_csv_path(&path).unwrap();
    assert_eq!((data.n(), data.p()), (6, 2));
    let model = LatentModel::new(ModelKind::BernoulliMixture { k: 2 }, data).unwrap();
    let theta0 = model.from_standard(&init_params(&model, InitMethod::Random, 1).unwrap()).unwrap();
    let trace = run_em(&model, &theta0, 20, &EmOptions::default()).unwrap();
    assert!(trace.final_nll <= trace.records[0].nll);
    std::fs::remove_dir_all(&dir).unwrap();
}
