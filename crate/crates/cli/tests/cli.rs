use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn mpfair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpfair"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn run_ok(args: &[&str]) -> Output {
    let out = mpfair(args);
    assert_eq!(
        code(&out),
        0,
        "mpfair {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (headers, rows)
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

fn dir_arg(dir: &Path) -> String {
    dir.to_string_lossy().into_owned()
}

const SMALL: [&str; 2] = ["--set", "data.n=200"];

/// Three-group data with a categorical group column and two features.
fn grouped_csv(dir: &Path, n: usize) -> PathBuf {
    let path = dir.join("grouped.csv");
    let mut text = String::from("y,g,a,b\n");
    for i in 0..n {
        let g = i % 3;
        let a = (i as f64 * 1.37).sin();
        let b = (i as f64 * 0.71).cos();
        let y = 2.0 * a - b + 0.5 * g as f64 + 0.1 * (i as f64 * 3.1).sin();
        text.push_str(&format!("{y},{g},{a},{b}\n"));
    }
    fs::write(&path, text).unwrap();
    path
}

fn csv_config(dir: &Path, data: &Path, schema: &str, extra: &str) -> PathBuf {
    let path = dir.join("config.json");
    let text = format!(
        r#"{{
  "data": {{"source": "csv", "path": {}, "schema": {schema}}},
  "methods": [{{"kind": "constant"}}, {{"kind": "unconstrained"}}, {{"kind": "fair"}}]{extra}
}}"#,
        serde_json::to_string(&data.to_string_lossy()).unwrap()
    );
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn fit_eval_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        run_ok(&["fit-eval", SMALL[0], SMALL[1], "--seed", "5", "--out-dir", &dir_arg(d)]);
    }
    assert_eq!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(b.join("metrics.csv")).unwrap());

    let report: serde_json::Value = serde_json::from_slice(&fs::read(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["command"], "fit-eval");
    assert_eq!(report["config"]["seed"], 5);
    assert_eq!(report["assumption1"]["satisfied"], true);
    assert_eq!(report["fair_basis"]["m"], 1);

    let (headers, rows) = read_csv(&a.join("metrics.csv"));
    assert_eq!(headers, ["method", "split", "mse", "smd", "dpd", "cov_norm"]);
    let fair_train = rows.iter().find(|r| r[0] == "fair" && r[1] == "train").unwrap();
    assert!(num(&fair_train[3]) < 1e-8, "fair train smd {}", fair_train[3]);
    let methods: Vec<&str> = rows.iter().step_by(2).map(|r| r[0].as_str()).collect();
    assert_eq!(&methods[..4], ["constant", "fair", "fpr(zeta=10)", "fpr(zeta=1000)"]);
    assert!(rows.chunks(2).all(|p| p[0][1] == "train" && p[1][1] == "test" && p[0][0] == p[1][0]));
}

#[test]
fn tradeoff_endpoints_match_fit_eval() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&["fit-eval", SMALL[0], SMALL[1], "--out-dir", &dir_arg(&a)]);
    run_ok(&["tradeoff", SMALL[0], SMALL[1], "--out-dir", &dir_arg(&a)]);
    run_ok(&["tradeoff", SMALL[0], SMALL[1], "--out-dir", &dir_arg(&b)]);
    assert_eq!(fs::read(a.join("tradeoff.csv")).unwrap(), fs::read(b.join("tradeoff.csv")).unwrap());

    let (headers, rows) = read_csv(&a.join("tradeoff.csv"));
    assert_eq!(headers, ["alpha", "mse_train", "mse_test", "smd_train", "smd_test"]);
    assert_eq!(rows.len(), 51);
    let (_, metrics) = read_csv(&a.join("metrics.csv"));
    let lookup = |method: &str, split: &str| {
        metrics.iter().find(|r| r[0] == method && r[1] == split).unwrap().clone()
    };
    for (row, method) in [(&rows[0], "fair"), (&rows[50], "unconstrained")] {
        let (tr, te) = (lookup(method, "train"), lookup(method, "test"));
        assert_eq!(num(&row[1]), num(&tr[2]), "{method} train mse");
        assert_eq!(num(&row[2]), num(&te[2]), "{method} test mse");
        assert_eq!(num(&row[3]), num(&tr[3]), "{method} train smd");
        assert_eq!(num(&row[4]), num(&te[3]), "{method} test smd");
    }
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("tradeoff_report.json")).unwrap()).unwrap();
    assert_eq!(report["identities"]["asserted"], true);
    assert_eq!(report["identities"]["passed"], true);
}

#[test]
fn check_passes_on_default_instance() {
    let tmp = TempDir::new().unwrap();
    let out = run_ok(&["check", SMALL[0], SMALL[1], "--out-dir", &dir_arg(tmp.path())]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(!stdout.contains("FAIL"), "{stdout}");
    let rows: Vec<serde_json::Value> =
        serde_json::from_slice(&fs::read(tmp.path().join("check.json")).unwrap()).unwrap();
    assert!(rows.iter().all(|r| r["status"] == "pass"), "{rows:?}");
    assert!(rows.len() >= 5);
}

#[test]
fn linear_sensitive_kernel_on_three_groups_fails_rank() {
    let tmp = TempDir::new().unwrap();
    let data = grouped_csv(tmp.path(), 150);
    let cfg = csv_config(
        tmp.path(),
        &data,
        r#"{"target_column": "y", "sensitive_columns": ["g"], "categorical": true}"#,
        "",
    );
    let linear = r#"kernel.sensitive={"kind":"polynomial","degree":1,"offset":0}"#;
    let base = ["--config", cfg.to_str().unwrap(), "--set", linear];
    let out_dir = dir_arg(&tmp.path().join("out"));

    let out = mpfair(&[&["check"], &base[..], &["--out-dir", &out_dir]].concat());
    assert_eq!(code(&out), 1);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout.lines().find(|l| l.starts_with("assumption1_rank")).unwrap();
    assert!(line.contains("FAIL") && line.contains("centered rank 1"), "{line}");

    let out = mpfair(&[&["fit-eval"], &base[..], &["--out-dir", &out_dir]].concat());
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("rank 1"));

    // the default kernel for three groups separates them
    let out = mpfair(&["check", "--config", cfg.to_str().unwrap(), "--out-dir", &out_dir]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn linear_sensitive_kernel_on_code_encoded_pairs_aborts_fit() {
    let tmp = TempDir::new().unwrap();
    let out = mpfair(&[
        "fit-eval",
        SMALL[0],
        SMALL[1],
        "--set",
        "data.e=2",
        "--set",
        "sensitive_encoding=code",
        "--set",
        r#"kernel.sensitive={"kind":"polynomial","degree":1,"offset":0}"#,
        "--out-dir",
        &dir_arg(tmp.path()),
    ]);
    assert_eq!(code(&out), 3);
    assert!(!tmp.path().join("metrics.csv").exists());
}

#[test]
fn single_group_makes_fair_equal_unconstrained() {
    let tmp = TempDir::new().unwrap();
    let data = grouped_csv(tmp.path(), 80);
    let cfg = csv_config(
        tmp.path(),
        &data,
        r#"{"target_column": "y", "sensitive_columns": [], "feature_columns": ["a", "b"]}"#,
        "",
    );
    let out_dir = dir_arg(&tmp.path().join("out"));
    run_ok(&["fit-eval", "--config", cfg.to_str().unwrap(), "--out-dir", &out_dir]);
    let (_, rows) = read_csv(&tmp.path().join("out/metrics.csv"));
    for split in ["train", "test"] {
        let get = |m: &str| rows.iter().find(|r| r[0] == m && r[1] == split).unwrap()[2..].to_vec();
        assert_eq!(get("fair"), get("unconstrained"), "{split}");
    }

    let out = run_ok(&["check", "--config", cfg.to_str().unwrap(), "--out-dir", &out_dir]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("projector_idempotence") && l.contains("skip")), "{stdout}");
}

#[test]
fn input_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let data = grouped_csv(tmp.path(), 30);
    let cfg = csv_config(
        tmp.path(),
        &data,
        r#"{"target_column": "income", "sensitive_columns": ["g"], "categorical": true}"#,
        "",
    );
    let out_dir = dir_arg(&tmp.path().join("out"));
    let out = mpfair(&["fit-eval", "--config", cfg.to_str().unwrap(), "--out-dir", &out_dir]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("income"));

    let out = mpfair(&["fit-eval", "--set", "no_such_field=1", "--out-dir", &out_dir]);
    assert_eq!(code(&out), 2);

    let out = mpfair(&["fit-eval", "--set", "train_fraction=1.5", "--out-dir", &out_dir]);
    assert_eq!(code(&out), 2);

    let broken = tmp.path().join("broken.json");
    fs::write(&broken, "{ not json").unwrap();
    let out = mpfair(&["check", "--config", broken.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn histograms_are_normalized_per_group() {
    let tmp = TempDir::new().unwrap();
    let dir = dir_arg(tmp.path());
    run_ok(&["histograms", SMALL[0], SMALL[1], "--out-dir", &dir]);
    for what in ["y", "yhat"] {
        for split in ["train", "test"] {
            let (headers, rows) = read_csv(&tmp.path().join(format!("hist_{what}_{split}.csv")));
            assert_eq!(headers, ["group", "bin_left", "bin_right", "density"]);
            for g in ["0", "1"] {
                let bins: Vec<&Vec<String>> = rows.iter().filter(|r| r[0] == g).collect();
                assert_eq!(bins.len(), 30);
                let mass: f64 = bins.iter().map(|r| (num(&r[2]) - num(&r[1])) * num(&r[3])).sum();
                assert!((mass - 1.0).abs() < 1e-9, "{what} {split} group {g}: {mass}");
            }
        }
    }
    let out = mpfair(&["histograms", SMALL[0], SMALL[1], "--bins", "1", "--out-dir", &dir]);
    assert_eq!(code(&out), 2);
}

#[test]
fn generated_csv_loads_back() {
    let tmp = TempDir::new().unwrap();
    let gen_dir = tmp.path().join("gen");
    run_ok(&["gen-synthetic", "--set", "data.n=120", "--set", "data.e=2", "--out-dir", &dir_arg(&gen_dir)]);
    let csv_path = gen_dir.join("synthetic.csv");
    let (headers, rows) = read_csv(&csv_path);
    assert_eq!(headers, ["x0", "x1", "x2", "x3", "x4", "s0", "s1", "y"]);
    assert_eq!(rows.len(), 120);

    let cfg = csv_config(
        tmp.path(),
        &csv_path,
        r#"{"target_column": "y", "sensitive_columns": ["s0", "s1"], "binarize": {"s0": 0, "s1": 0}}"#,
        r#", "kernel": {"x": {"kind": "linear"}, "s_in_model": {"kind": "linear"}, "mode": "sum", "sensitive_flavor": "delta"}"#,
    );
    let out_dir = tmp.path().join("out");
    run_ok(&["fit-eval", "--config", cfg.to_str().unwrap(), "--out-dir", &dir_arg(&out_dir)]);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["data"]["k"], 4);
    assert_eq!(report["data"]["n_total"], 120);
    assert_eq!(report["fair_basis"]["m"], 3);
}
