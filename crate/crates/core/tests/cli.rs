use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fdx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdx")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn analyze_json(input: &Path, kind: &str, extra: &[&str]) -> (Output, Value) {
    let out_path = input.with_extension("json");
    let mut args = vec!["analyze", "--input", input.to_str().unwrap(), "--input-kind", kind, "--output", out_path.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = fdx(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = serde_json::from_str(&std::fs::read_to_string(out_path).unwrap()).unwrap();
    (out, v)
}

#[test]
fn stats_matrix_single_step_and_maxt() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "s.csv", "h1,h2\n5,3\n1,2\n");
    let (out, v) = analyze_json(&input, "stats_matrix", &["--alpha", "0.5", "--gamma", "0.4"]);
    assert_eq!(v["q"], 2.0);
    assert_eq!(v["rejected"], serde_json::json!([1, 2]));
    assert_eq!(v["method"], "fdx-single");
    assert_eq!(v["schema_version"], 1);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("q = 2") && stdout.contains("rejections = 2"), "{stdout}");

    let (_, v) = analyze_json(&input, "stats_matrix", &["--alpha", "0.5", "--gamma", "0.4", "--method", "maxt"]);
    assert_eq!(v["q"], 2.0);
    assert_eq!(v["rejected"], serde_json::json!([1, 2]));
}

#[test]
fn library_and_cli_agree() {
    let dir = tempfile::tempdir().unwrap();
    let rows = [[2.5, 0.3, 4.1, 1.7], [0.9, 1.2, 0.4, 0.8], [1.1, 0.2, 0.6, 2.0], [0.3, 0.7, 1.9, 0.1], [0.5, 1.4, 0.2, 0.6]];
    let text: String = rows.iter().map(|r| format!("{},{},{},{}\n", r[0], r[1], r[2], r[3])).collect();
    let input = write(dir.path(), "s.csv", &text);
    let sm = fdx::StatMatrix::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap();
    let lib = fdx::single_step(&sm, &fdx::AnalysisConfig::new(0.2, 0.25).unwrap()).unwrap();
    let (_, v) = analyze_json(&input, "stats_matrix", &["--alpha", "0.2", "--gamma", "0.25"]);
    assert_eq!(v["q"].as_f64().unwrap().to_bits(), lib.q.to_bits());
    let want: Vec<usize> = lib.rejections.indices.iter().map(|i| i + 1).collect();
    assert_eq!(v["rejected"], serde_json::json!(want));
}

#[test]
fn pvalue_matrix_reports_on_pvalue_scale() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "p.csv", "0.001,0.4,0.02\n0.3,0.9,0.5\n0.6,0.2,0.8\n");
    let (_, v) = analyze_json(&input, "pvalue_matrix", &["--alpha", "0.5", "--gamma", "0.0"]);
    assert_eq!(v["direction"], "below");
    assert_eq!(v["q"], 0.2);
    assert_eq!(v["rejected"], serde_json::json!([1, 3]));
    assert_eq!(v["zoom"][1]["stat"], 0.001);

    let bad = write(dir.path(), "bad.csv", "0.5,1.5\n0.2,0.3\n");
    let out = fdx(&["analyze", "--input", bad.to_str().unwrap(), "--input-kind", "pvalue_matrix"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validation_and_io_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "s.csv", "5,3\n1,2\n");
    let path = input.to_str().unwrap();

    let out = fdx(&["analyze", "--input", path, "--input-kind", "stats_matrix", "--gamma", "1.0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma must be in [0,1)"));

    let bad = write(dir.path(), "bad.csv", "1,2\n3,4\n5,oops\n");
    let out = fdx(&["analyze", "--input", bad.to_str().unwrap(), "--input-kind", "stats_matrix"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let out = fdx(&["analyze", "--input", "/nonexistent/x.csv", "--input-kind", "stats_matrix"]);
    assert_eq!(out.status.code(), Some(3));

    let out = fdx(&["analyze", "--input", path, "--input-kind", "stats_matrix", "--method", "fdx-seq"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));

    let out = fdx(&["analyze", "--input", path, "--input-kind", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn too_few_transformations_warns() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "s.csv", "5,3\n1,2\n");
    let out = fdx(&["analyze", "--input", input.to_str().unwrap(), "--input-kind", "stats_matrix", "--alpha", "0.1"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let v: Value = serde_json::from_str(&String::from_utf8_lossy(&out.stdout).lines().skip(2).collect::<String>()).unwrap();
    assert_eq!(v["no_rejections"], true);
}

#[test]
fn data_inputs() {
    let dir = tempfile::tempdir().unwrap();
    // column 1 carries a large group difference
    let mut data = String::from("x1,x2,x3,group\n");
    for i in 0..12 {
        let g = i % 2;
        let shift = if g == 0 { 6.0 } else { 0.0 };
        data.push_str(&format!("{},{},{},{}\n", shift + (i as f64 * 0.37).sin(), (i as f64 * 1.3).cos(), (i as f64).sqrt(), g));
    }
    let input = write(dir.path(), "d.csv", &data);
    let (_, v) = analyze_json(&input, "data_two_group", &["--labels", "col:4", "--permutations", "200", "--seed", "3"]);
    assert_eq!(v["m"], 3);
    assert_eq!(v["d"], 200);
    assert_eq!(v["seed"], 3);
    assert_eq!(v["rejected"], serde_json::json!([1]));

    let y = write(dir.path(), "y.txt", &(0..12).map(|i| format!("{}\n", i % 2)).collect::<String>());
    let (_, v) = analyze_json(&input, "data_response", &["--response", y.to_str().unwrap(), "--permutations", "100", "--seed", "3"]);
    assert_eq!(v["m"], 4);

    let out = fdx(&["analyze", "--input", input.to_str().unwrap(), "--input-kind", "data_one_sample", "--permutations", "50"]);
    assert_eq!(out.status.code(), Some(2));
    let (_, v) = analyze_json(&input, "data_one_sample", &["--permutations", "50", "--entropy"]);
    assert!(v["seed"].is_u64());
}

#[test]
fn selftest_and_fault_injection() {
    let out = fdx(&["selftest"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().filter(|l| l.starts_with("PASS ")).count() >= 6, "{text}");

    let out = fdx(&["selftest", "--inject-quantile-fault"]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("FAIL quantile_vs_brute_force"), "{text}");
}

#[test]
fn simulate_one_cell() {
    let dir = tempfile::tempdir().unwrap();
    let design = write(
        dir.path(),
        "d.toml",
        "n_per_group = 10\nm = 20\nrho = 0.2\npi0 = 0.8\nd_signal = 1.0\nreplicates = 10\npermutations = 20\nalpha = 0.1\ngamma = 0.1\nseed = 4\n",
    );
    let out_csv = dir.path().join("o.csv");
    let out = fdx(&["simulate", "--design", design.to_str().unwrap(), "--output", out_csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&out_csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], fdx::simlab::PLOT_HEADER);
    assert_eq!(lines.len(), 3);

    let bad = write(dir.path(), "bad.toml", "n_per_group = 10\nm = 20\nrho = 1.5\npi0 = 0.8\nd_signal = 1.0\nreplicates = 10\nalpha = 0.1\ngamma = 0.1\nseed = 4\n");
    let out = fdx(&["simulate", "--design", bad.to_str().unwrap(), "--output", out_csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
