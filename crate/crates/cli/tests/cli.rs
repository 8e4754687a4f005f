use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treegibbs")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn data_rows(out: &Output) -> Vec<String> {
    String::from_utf8_lossy(&out.stdout).lines().filter(|l| !l.starts_with('#')).map(str::to_string).collect()
}

#[test]
fn goodset_explicit_pair() {
    let v = stdout_json(&run(&["goodset", "--d", "2", "--gamma", "1.5", "--delta", "0.05"]));
    assert_eq!(v["in_good_set"], Value::Bool(true));
    assert!((v["epsilon"].as_f64().unwrap() - 0.054447).abs() < 5e-7);
    assert!((v["L"].as_f64().unwrap() - 0.327).abs() < 5e-4);
    assert_eq!(v["metadata"]["command"], "goodset");
}

#[test]
fn goodset_from_model() {
    let v = stdout_json(&run(&["goodset", "--d", "2", "--model", "sos", "--beta", "2.5"]));
    assert_eq!(v["in_good_set"], Value::Bool(true));
    let v = stdout_json(&run(&["goodset", "--d", "2", "--model", "sos", "--beta", "1.5"]));
    assert_eq!(v["in_good_set"], Value::Bool(false));
}

#[test]
fn norms_heavy_log_tail_refuses_gradient_measures() {
    let v = stdout_json(&run(&["norms", "--model", "log", "--beta", "0.5", "--d", "4", "--q", "3"]));
    assert_eq!(v["gamma"]["status"], "finite");
    assert_eq!(v["delta"]["status"], "finite");
    assert_eq!(v["one_norm"]["status"], "infinite");
    assert_eq!(v["summable"], Value::Bool(false));
    assert_eq!(v["fuzzy"]["status"], "refused");
    let notes = v["notes"].to_string();
    assert!(notes.contains("q = infinity"));
    assert!(notes.contains("any height period"));
}

#[test]
fn table_subset_rounds_to_four_digits() {
    let out = run(&["table", "--model", "sos", "--d", "2,3,6"]);
    assert!(out.status.success());
    let rows = data_rows(&out);
    assert_eq!(rows[0], "d,beta,beta_4sig,gamma,delta");
    let sig: Vec<&str> = rows[1..].iter().map(|r| r.split(',').nth(2).unwrap()).collect();
    assert_eq!(sig, ["1.997", "1.321", "0.7240"]);
}

#[test]
fn errors_are_json_with_exit_codes() {
    let out = run(&["solve", "--model", "sos", "--beta", "0.5", "--d", "2"]);
    assert_eq!(out.status.code(), Some(4));
    let e: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(e["error"], "outside_good_set");
    assert_eq!(e["exit_code"], 4);

    let out = run(&["norms", "--model", "cubic", "--beta", "1", "--d", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let e: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(e["error"], "config");

    let out = run(&["ggm", "--model", "sos", "--beta", "2", "--d", "2", "--q", "2", "--window", "2"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn same_seed_gives_identical_bytes() {
    let args = ["simulate", "--model", "sos", "--beta", "2", "--d", "2", "--q", "2", "--sample-length", "2000", "--seed", "11"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let mut other = args;
    other[12] = "12";
    assert_ne!(run(&other).stdout, a.stdout);
}

#[test]
fn exact_tables_are_reproducible_and_normalised() {
    let args = ["simulate", "--mode", "gibbs", "--model", "sos", "--beta", "2.5", "--d", "2", "--n", "1,4"];
    let a = run(&args);
    assert_eq!(a.stdout, run(&args).stdout);
    let rows = data_rows(&a);
    assert_eq!(rows[0], "n,k,prob,leaked_mass");
    let mass: f64 = rows[1..]
        .iter()
        .filter(|r| r.starts_with("4,"))
        .map(|r| r.split(',').nth(2).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((mass - 1.0).abs() < 1e-9);
}

#[test]
fn phase_diagram_keeps_every_grid_point() {
    let out = run(&["phase-diagram", "--model", "log", "--beta-range", "0.25:3:0.25", "--d-list", "2,3,5"]);
    assert!(out.status.success());
    let rows = data_rows(&out);
    assert_eq!(rows.len() - 1, 12 * 3);
    // β = 0.25 has infinite norms at every listed degree: flagged, not dropped.
    assert!(rows.iter().filter(|r| r.ends_with("infinite_norm")).count() >= 3);
    let keys: Vec<(u32, f64)> = rows[1..]
        .iter()
        .map(|r| {
            let mut f = r.split(',');
            (f.next().unwrap().parse().unwrap(), f.next().unwrap().parse().unwrap())
        })
        .collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(keys, sorted);
}

#[test]
fn custom_potential_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pot.json");
    // U(j) = |j| on 1..=3 with an exponential tail of rate 1: the SOS model.
    std::fs::write(
        &path,
        r#"{"kind":"custom","beta":2.5,"table":[[1,1.0],[2,2.0],[3,3.0]],"tail":{"type":"exp","rate":1.0}}"#,
    )
    .unwrap();
    let model = format!("custom:{}", path.display());
    let custom = stdout_json(&run(&["norms", "--model", &model, "--d", "2"]));
    let sos = stdout_json(&run(&["norms", "--model", "sos", "--beta", "2.5", "--d", "2"]));
    for key in ["gamma", "delta"] {
        let (a, b) = (custom[key]["value"].as_f64().unwrap(), sos[key]["value"].as_f64().unwrap());
        assert!((a - b).abs() < 1e-10 * b, "{key}: {a} vs {b}");
    }
    let hot = stdout_json(&run(&["norms", "--model", &model, "--beta", "1.0", "--d", "2"]));
    assert_eq!(hot["metadata"]["beta"], "1.0000000000000000e0");

    std::fs::write(&path, r#"{"kind":"custom","beta":1.0,"table":[[1,1.0]]}"#).unwrap();
    let out = run(&["norms", "--model", &model, "--d", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let e: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(e["error"], "tail_undeclared");
}

#[test]
fn solve_writes_law_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("law.csv");
    let out = run(&["solve", "--model", "sos", "--beta", "2.5", "--d", "2", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("# report.certificate: good_set"));
    assert!(text.contains("index,x,lambda,marginal"));
    assert!(text.lines().any(|l| l.starts_with("0,1.0000000000000000e0,")));
}
