use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wcl::io::{load_generator, load_model, read_csv, CSV_COLUMNS};
use wcl::model::validate_model;
use wcl::opalg::spectral_norm;

fn wcl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wcl")).args(args).output().expect("binary runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn generate_model_is_valid_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for p in [&a, &b] {
        let out = wcl(&["generate-model", "--kind", "random", "--seed", "7", "--n0", "2", "--n1", "8", "-o", s(p)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stderr).contains("ok"));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let m = load_model(&a).unwrap();
    assert!(validate_model(&m).passed());
    assert_eq!((m.n0, m.n1, m.seed), (2, 8, 7));
}

#[test]
fn zero_coupling_scale_gives_zero_a() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("z.json");
    let out = wcl(&["generate-model", "--n0", "2", "--n1", "4", "--coupling-scale", "0", "-o", s(&p)]);
    assert!(out.status.success());
    assert_eq!(load_model(&p).unwrap().a.max_abs(), 0.0);

    // Zero coupling: an explicit T gives the zero matrix, the natural rule has
    // no finite timescale.
    let k = dir.path().join("k.json");
    let out = wcl(&["build-generator", "--model", s(&p), "--kind", "dynavg", "--T", "3", "-o", s(&k)]);
    assert!(out.status.success());
    assert_eq!(load_generator(&k).unwrap().operator().unwrap().max_abs(), 0.0);
    let out = wcl(&["build-generator", "--model", s(&p), "--kind", "dynavg", "--lambda", "0.2"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(wcl(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(wcl(&["generate-model", "--n0", "2"]).status.code(), Some(2));
    assert_eq!(wcl(&["generate-model", "--n0", "0", "--n1", "3"]).status.code(), Some(2));
    let model = configs().join("models/random-small.json");
    assert_eq!(wcl(&["build-generator", "--model", s(&model), "--kind", "davies"]).status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_wcl"))
        .args(["generate-model", "--n0", "1", "--n1", "2"])
        .env("WCL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn time_ordered_matches_q_average_within_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let model = configs().join("models/random-small.json");
    let mut docs = Vec::new();
    for form in ["time-ordered", "q-average"] {
        let p = dir.path().join(format!("{form}.json"));
        let out = wcl(&["build-generator", "--model", s(&model), "--kind", "dynavg", "--T", "20", "--form", form, "-o", s(&p)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        docs.push(load_generator(&p).unwrap());
    }
    let diff = spectral_norm(&(docs[0].operator().unwrap().into_matrix() - docs[1].operator().unwrap().into_matrix()));
    let tol = docs[0].estimates.total + docs[1].estimates.total;
    assert!(diff <= tol, "{diff} > {tol}");
    assert_eq!(docs[0].schema, "wcl-1");
    assert_eq!(docs[0].config["command"], "build-generator");
    assert_eq!(docs[0].t, Some(20.0));
}

#[test]
fn shipped_config_sup_error_decreases() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("qc");
    let cfg = configs().join("quasicontinuum.json");
    let out = wcl(&["convergence", "--config", s(&cfg), "--output", s(&prefix)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(prefix.with_extension("csv")).unwrap();
    assert!(text.starts_with("# schema: wcl-1\n# config: "));
    let (header, rows) = read_csv(&text).unwrap();
    assert_eq!(header, CSV_COLUMNS);
    let errs: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert_eq!(errs.len(), 3);
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(prefix.with_extension("json")).unwrap()).unwrap();
    assert_eq!(json["schema"], "wcl-1");
    assert_eq!(json["config"]["lambda_grid"], serde_json::json!([0.4, 0.2, 0.1]));
    assert_eq!(json["result"]["rows"].as_array().unwrap().len(), 3);
}

fn inline_config(dir: &Path, coupling: f64, grid: &str, transition: &str) -> PathBuf {
    let p = dir.join("run.json");
    write(
        &p,
        &format!(
            r#"{{
                "model": {{"kind": "random", "seed": 7, "n0": 2, "n1": 8, "coupling_scale": {coupling}}},
                "generator": {{"kind": "dynavg", "form": "q-average"{transition}}},
                "lambda_grid": {grid},
                "tau_bar": 0.5,
                "time_nodes": 50,
                "output": "out/run",
                "format": "csv"
            }}"#
        ),
    );
    p
}

#[test]
fn single_lambda_gives_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = inline_config(dir.path(), 1.0, "[0.3]", "");
    let out = wcl(&["convergence", "--config", s(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = read_csv(&std::fs::read_to_string(dir.path().join("out/run.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(!dir.path().join("out/run.json").exists());
}

#[test]
fn zero_coupling_sweep_has_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = inline_config(dir.path(), 0.0, "[0.4, 0.2]", r#", "T": 2.0"#);
    let out = wcl(&["convergence", "--config", s(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = read_csv(&std::fs::read_to_string(dir.path().join("out/run.csv")).unwrap()).unwrap();
    for r in rows {
        assert!(r[2].parse::<f64>().unwrap() <= 1e-10);
    }
    // The natural timescale is infinite here: the sweep itself fails.
    let cfg = inline_config(dir.path(), 0.0, "[0.4]", "");
    assert_eq!(wcl(&["convergence", "--config", s(&cfg)]).status.code(), Some(4));
    let cfg = inline_config(dir.path(), 1.0, "[0.4, 0.0]", "");
    assert_eq!(wcl(&["convergence", "--config", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn contraction_reports_witness() {
    let dir = tempfile::tempdir().unwrap();
    let mut norms = Vec::new();
    for name in ["contraction", "witness"] {
        let prefix = dir.path().join(name);
        let cfg = configs().join(format!("{name}.json"));
        let out = wcl(&["contraction", "--config", s(&cfg), "--output", s(&prefix), "--format", "csv"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let (header, rows) = read_csv(&std::fs::read_to_string(prefix.with_extension("csv")).unwrap()).unwrap();
        assert_eq!(header[2], "max_norm");
        norms.push(rows[0][2].parse::<f64>().unwrap());
        if name == "witness" {
            assert!(String::from_utf8_lossy(&out.stderr).contains("witness"));
        }
    }
    assert!(norms[0] <= 1.0 + 1e-6);
    assert!(norms[1] > 1.0 + 1e-3);
}

#[test]
fn correlations_and_propagate_tables() {
    let dir = tempfile::tempdir().unwrap();
    let model = configs().join("models/random-small.json");
    let p = dir.path().join("a.csv");
    let out = wcl(&["correlations", "--model", s(&model), "--order", "1", "--t-max", "2", "--points", "4", "-o", s(&p)]);
    assert!(out.status.success());
    let (header, rows) = read_csv(&std::fs::read_to_string(&p).unwrap()).unwrap();
    assert_eq!(header, ["t", "a0", "a1"]);
    let a0: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(a0.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(wcl(&["correlations", "--model", s(&model), "--order", "3", "--t-max", "1"]).status.code(), Some(2));

    let k = dir.path().join("k.json");
    let out = wcl(&["build-generator", "--model", s(&model), "--kind", "dynavg", "--lambda", "0.3", "-o", s(&k)]);
    assert!(out.status.success());
    let out = wcl(&["propagate", "--model", s(&model), "--lambda", "0.3", "--t-max", "4", "--nodes", "5", "--generator", s(&k)]);
    assert!(out.status.success());
    let (header, rows) = read_csv(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(header, ["t", "exact_norm", "approx_norm", "error"]);
    assert_eq!(rows.len(), 5);
    assert!(rows[0][3].parse::<f64>().unwrap() < 1e-12);
}
