use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const GOLDEN: &str = "tests/golden/fit_faithful_k2_seed7.jsonl";
const GOLDEN_REL: f64 = 1e-12;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mirror-em"));
    c.env_remove("MIRROR_EM_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn report(dir: &Path, mode: &str) -> Value {
    serde_json::from_str(&read(dir.join(format!("{mode}_report.json")))).unwrap()
}

fn fit_faithful(dir: &Path) -> Output {
    run(&["fit", "--model", "gmm", "--k", "2", "--data", "faithful.csv", "--standardize", "--iters", "50", "--seed", "7", "--out", &out_arg(dir)])
}

fn assert_close(a: &Value, b: &Value, path: &str) {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            let scale = x.abs().max(y.abs()).max(1.0);
            assert!((x - y).abs() <= GOLDEN_REL * scale, "{path}: {x} vs {y}");
        }
        (Value::Array(x), Value::Array(y)) => {
            assert_eq!(x.len(), y.len(), "{path}: length");
            for (i, (u, v)) in x.iter().zip(y).enumerate() {
                assert_close(u, v, &format!("{path}[{i}]"));
            }
        }
        (Value::Object(x), Value::Object(y)) => {
            assert_eq!(x.keys().collect::<Vec<_>>(), y.keys().collect::<Vec<_>>(), "{path}: keys");
            for (k, u) in x {
                assert_close(u, &y[k], &format!("{path}.{k}"));
            }
        }
        _ => assert_eq!(a, b, "{path}"),
    }
}

#[test]
fn help_and_version_exit_zero() {
    let o = run(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in ["fit", "compare", "online", "map", "gem", "estep", "verify", "smoothness", "replay"] {
        assert!(text.contains(sub), "help lacks {sub}");
    }
    assert_eq!(code(&run(&["--version"])), 0);
    let o = run(&["fit", "--help"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("--standardize"));
}

#[test]
fn bad_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    assert_eq!(code(&run(&["fit", "--no-such-flag"])), 1);
    assert_eq!(code(&run(&["fit", "--k", "0", "--out", &out])), 1);
    assert_eq!(code(&run(&["fit", "--data", "/no/such/file.csv", "--out", &out])), 1);
    assert_eq!(code(&run(&["estep", "--model", "gmm", "--out", &out])), 1);
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "itres = 5\n").unwrap();
    let o = run(&["fit", "--config", cfg.to_str().unwrap(), "--out", &out]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("itres"));
}

#[test]
fn fit_matches_golden_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = fit_faithful(dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let golden = read(Path::new(env!("CARGO_MANIFEST_DIR")).join(GOLDEN));
    let fresh = read(dir.path().join("em_seed7.jsonl"));
    let (g, f): (Vec<&str>, Vec<&str>) = (golden.lines().collect(), fresh.lines().collect());
    assert_eq!(g.len(), f.len());
    assert_eq!(f.len(), 52, "header, 50 records, summary");
    for (i, (a, b)) in g.iter().zip(&f).enumerate() {
        let (a, b): (Value, Value) = (serde_json::from_str(a).unwrap(), serde_json::from_str(b).unwrap());
        assert_close(&a, &b, &format!("line {i}"));
    }
    let rep = report(dir.path(), "em");
    assert_eq!(rep["verdicts"][0]["check"], "rate_bounds");
    assert_eq!(rep["verdicts"][0]["pass"], true);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = |d: &Path| {
        vec!["fit".to_string(), "--standardize".into(), "--iters".into(), "20".into(), "--seed-range".into(), "0..6".into(), "--out".into(), out_arg(d)]
    };
    let one = bin().args(args(a.path())).env("MIRROR_EM_THREADS", "1").output().unwrap();
    let four = bin().args(args(b.path())).env("MIRROR_EM_THREADS", "4").output().unwrap();
    assert_eq!(code(&one), 0);
    assert_eq!(code(&four), 0);
    for s in 0..6 {
        for ext in ["jsonl", "csv"] {
            let name = format!("em_seed{s}.{ext}");
            assert_eq!(read(a.path().join(&name)), read(b.path().join(&name)), "{name}");
        }
    }
    assert_eq!(read(a.path().join("em_report.json")), read(b.path().join("em_report.json")));
    // stdout differs only in the report path on its last line
    let body = |o: &Output| {
        let s = String::from_utf8_lossy(&o.stdout).into_owned();
        s.lines().filter(|l| !l.starts_with("report ")).collect::<Vec<_>>().join("\n")
    };
    assert_eq!(body(&one), body(&four));
}

#[test]
fn bad_thread_count_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().args(["fit", "--out", &out_arg(dir.path())]).env("MIRROR_EM_THREADS", "many").output().unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn replay_reproduces_the_trace() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let o = run(&[
        "gem", "--synthetic", "bernoulli", "--synthetic-k", "2", "--dim", "4", "--n", "150", "--data-seed", "3",
        "--model", "bernoulli", "--seed", "5", "--iters", "25", "--out", &out_arg(a.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let trace = a.path().join("gem_seed5.jsonl");
    let header: Value = serde_json::from_str(read(&trace).lines().next().unwrap()).unwrap();
    assert_eq!(header["header"]["seed"], 5);
    assert_eq!(header["header"]["config"]["mode"], "gem");
    let o = run(&["replay", trace.to_str().unwrap(), "--out", &out_arg(b.path())]);
    assert_eq!(code(&o), 0);
    assert_eq!(read(&trace), read(b.path().join("gem_seed5.jsonl")));
    assert_eq!(read(a.path().join("data.csv")), read(b.path().join("data.csv")));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "mode = \"compare\"\niters = 30\nseeds = [1, 2]\n\n[gd]\ngrid_count = 4\n").unwrap();
    let out = out_arg(dir.path());
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--iters", "12", "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep = report(dir.path(), "compare");
    assert_eq!(rep["runs"].as_array().unwrap().len(), 4);
    assert_eq!(rep["runs"][0]["iterations"], 12);
    assert_eq!(rep["details"][0]["candidates"].as_array().unwrap().len(), 4);
    let header: Value = serde_json::from_str(read(dir.path().join("compare_em_seed2.jsonl")).lines().next().unwrap()).unwrap();
    assert_eq!(header["header"]["config"]["standardize"], Value::Null);
    assert_eq!(header["header"]["config"]["seeds"], serde_json::json!([2]));
    let json_cfg = dir.path().join("exp.json");
    std::fs::write(&json_cfg, r#"{"iters": 3, "seeds": [4]}"#).unwrap();
    assert_eq!(code(&run(&["fit", "--config", json_cfg.to_str().unwrap(), "--out", &out])), 0);
    assert_eq!(report(dir.path(), "em")["runs"][0]["seed"], 4);
}

#[test]
fn compare_reports_em_ahead_of_tuned_gd() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["compare", "--seed", "12", "--iters", "50", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 0);
    let rep = report(dir.path(), "compare");
    let d = &rep["details"][0];
    assert!(d["em_final_nll"].as_f64().unwrap() < d["gd_final_nll"].as_f64().unwrap());
    assert!(d["em_reaches_gd_final_at"].as_u64().unwrap() <= 12);
    assert!(dir.path().join("compare_gd_seed12.csv").exists());
    let csv = read(dir.path().join("compare_em_seed12.csv"));
    assert!(csv.starts_with("t,nll,kl_step,bregman_stat"));
    let iterations = rep["runs"][0]["iterations"].as_u64().unwrap() as usize;
    assert_eq!(csv.lines().count(), iterations + 1);
}

#[test]
fn degenerate_mle_exits_two_and_map_recovers() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("one.csv");
    std::fs::write(&data, "x\n1.3\n").unwrap();
    let (d, out) = (data.to_str().unwrap(), out_arg(dir.path()));
    let o = run(&["fit", "--model", "gaussian", "--data", d, "--out", &out]);
    assert_eq!(code(&o), 2);
    assert!(!o.stderr.is_empty());
    let o = run(&["map", "--model", "gaussian", "--data", d, "--prior-mean", "0,1", "--n0", "1", "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let params = report(dir.path(), "map");
    assert_eq!(params["verdicts"][0]["pass"], true);
    assert_eq!(code(&run(&["map", "--model", "gaussian", "--data", d, "--n0", "0", "--out", &out])), 1);
}

#[test]
fn synthetic_runs_save_data_and_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "online", "--synthetic", "gaussian", "--synthetic-k", "2", "--dim", "2", "--n", "120", "--separation", "4",
        "--passes", "2", "--seed", "1", "--out", &out_arg(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(dir.path().join("data.csv")).lines().count(), 121);
    let truth: Value = serde_json::from_str(&read(dir.path().join("ground_truth.json"))).unwrap();
    assert_eq!(truth["weights"].as_array().unwrap().len(), 2);
    assert_eq!(report(dir.path(), "online")["runs"][0]["iterations"], 240);
    assert_eq!(code(&run(&["online", "--synthetic", "gaussian", "--n", "0", "--out", &out_arg(dir.path())])), 1);
}

#[test]
fn bound_checks_pass_for_gem_and_estep() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let o = run(&[
        "gem", "--synthetic", "bernoulli", "--synthetic-k", "3", "--dim", "6", "--n", "300", "--separation", "2",
        "--model", "bernoulli", "--k", "3", "--seed-range", "0..12", "--tol", "0", "--out", &out,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep = report(dir.path(), "gem");
    let v = rep["verdicts"].as_array().unwrap();
    assert_eq!(v.len(), 1);
    assert_eq!(v[0]["check"], "gem_multiplicative");
    assert_eq!(v[0]["detail"]["seeds"], 12);

    let o = run(&["gem", "--policy", "additive", "--standardize", "--seed", "2", "--out", &out]);
    assert_eq!(code(&o), 0);
    assert_eq!(report(dir.path(), "gem")["verdicts"][0]["check"], "gem_additive");

    let o = run(&["estep", "--synthetic", "laplace", "--separation", "6", "--n", "300", "--iters", "60", "--seed", "3", "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(report(dir.path(), "estep")["verdicts"][0]["pass"], true);
}

#[test]
fn verify_exits_zero_with_all_oracles_green() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--seed", "0,3", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let rep = report(dir.path(), "verify");
    let v = rep["verdicts"].as_array().unwrap();
    assert!(v.len() > 20);
    assert!(v.iter().all(|r| r["pass"] == true));
}

#[test]
fn smoothness_estimates_grow_only_for_the_free_variance_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let base = ["--synthetic", "gaussian", "--synthetic-k", "1", "--n", "200", "--out", &out];
    let o = bin().arg("smoothness").args(base).output().unwrap();
    assert_eq!(code(&o), 0);
    let growth = report(dir.path(), "smoothness")["details"][0]["growth"].clone();
    assert!(growth.as_array().unwrap().iter().all(|g| g.as_f64().unwrap() > 10.0), "{growth}");
    let o = bin().args(["smoothness", "--model", "unit-gaussian"]).args(base).output().unwrap();
    assert_eq!(code(&o), 0);
    let growth = report(dir.path(), "smoothness")["details"][0]["growth"].clone();
    assert!(growth.as_array().unwrap().iter().all(|g| (g.as_f64().unwrap() - 1.0).abs() < 1e-9), "{growth}");
}

#[test]
fn gd_fit_records_its_step() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["fit", "--method", "gd", "--step-size", "0.05", "--standardize", "--iters", "10", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 0);
    let header: Value = serde_json::from_str(read(dir.path().join("gd_seed0.jsonl")).lines().next().unwrap()).unwrap();
    assert_eq!(header["header"]["mode"], "gd");
    assert_eq!(header["header"]["config"]["gd"]["step_size"], 0.05);
}

#[test]
fn explicit_start_ignores_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let start = dir.path().join("start.json");
    std::fs::write(
        &start,
        r#"{"weights": [0.4, 0.6], "components": [
            {"type": "gaussian", "mean": [-1.0, -1.0], "cov": [[0.5, 0.0], [0.0, 0.5]]},
            {"type": "gaussian", "mean": [1.0, 1.0], "cov": [[0.5, 0.1], [0.1, 0.5]]}]}"#,
    )
    .unwrap();
    let out = out_arg(dir.path());
    let o = run(&["fit", "--standardize", "--iters", "5", "--init-params", start.to_str().unwrap(), "--seed", "1,2", "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep = report(dir.path(), "em");
    assert_eq!(rep["runs"][0]["final_nll"], rep["runs"][1]["final_nll"]);
    std::fs::write(&start, "{}").unwrap();
    assert_eq!(code(&run(&["fit", "--init-params", start.to_str().unwrap(), "--out", &out])), 1);
}
