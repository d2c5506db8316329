use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ltlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ltlab"))
        .args(args)
        .env_remove("LTLAB_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn envelope(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON envelope")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn optimize_three_halves_one_state() {
    let dir = tempfile::tempdir().unwrap();
    let out = ltlab(&["optimize", "--gamma", "1.5", "--dim", "1", "--nstates", "1", "--output", path_str(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let env = envelope(&out);
    assert_eq!(env["schema_version"], 1);
    assert_eq!(env["command"], "optimize");
    let l = env["payload"]["L_estimate"].as_f64().unwrap();
    assert!((l - 0.1875).abs() < 1e-4, "{l}");
    assert_eq!(env["config"]["scf"]["gamma"], 1.5);
    assert_eq!(env["config"]["scf"]["grid_n"], 4000);
    for f in ["envelope.json", "v_star.csv", "trace.jsonl"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("v_star.csv")).unwrap();
    assert!(csv.starts_with("x,value"));
}

#[test]
fn optimize_rejects_inadmissible_gamma() {
    let out = ltlab(&["optimize", "--gamma", "0.3", "--dim", "1"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("not admissible"), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
}

#[test]
fn missing_config_file() {
    let out = ltlab(&["optimize", "--config", "/nonexistent/ltlab.toml"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("cannot read config file"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&ltlab(&["optimize", "--no-such-flag"])), 1);
    assert_eq!(code(&ltlab(&["frobnicate"])), 1);
    assert_eq!(code(&ltlab(&["--help"])), 0);
}

#[test]
fn not_converged_exits_two() {
    let out = ltlab(&["optimize", "--max-iter", "2", "--grid-n", "1000"]);
    assert_eq!(code(&out), 2);
    assert_eq!(envelope(&out)["payload"]["converged"], false);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "command = \"optimize\"\ngamma = 2.0\ngrid_n = 1500\nnstates = 1\n").unwrap();
    let out = ltlab(&["optimize", "--config", path_str(&cfg), "--gamma", "1.5"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let scf = &envelope(&out)["config"]["scf"];
    assert_eq!(scf["gamma"], 1.5);
    assert_eq!(scf["grid_n"], 1500);

    let json_cfg = dir.path().join("run.json");
    std::fs::write(&json_cfg, r#"{"gamma": 2.0, "grid_n": 1500, "max_iter": 3}"#).unwrap();
    let out = ltlab(&["optimize", "--config", path_str(&json_cfg)]);
    assert_eq!(envelope(&out)["config"]["scf"]["gamma"], 2.0);

    std::fs::write(&json_cfg, r#"{"gamma": 2.0, "bogus": 1}"#).unwrap();
    assert_eq!(code(&ltlab(&["optimize", "--config", path_str(&json_cfg)])), 1);
    std::fs::write(&cfg, "command = \"kdv\"\n").unwrap();
    assert_eq!(code(&ltlab(&["optimize", "--config", path_str(&cfg)])), 1);
}

#[test]
fn optimize_is_deterministic() {
    let args = ["optimize", "--gamma", "2", "--init", "random", "--seed", "5", "--grid-n", "1500"];
    let a = envelope(&ltlab(&args));
    let b = envelope(&ltlab(&args));
    assert_eq!(serde_json::to_string(&a["payload"]).unwrap(), serde_json::to_string(&b["payload"]).unwrap());
    assert_eq!(a["config"], b["config"]);
}

#[test]
fn output_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ltlab"))
        .args(["optimize", "--grid-n", "1000"])
        .env("LTLAB_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.path().join("optimize").join("envelope.json").exists());
}

#[test]
fn kdv_spectrum_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = ltlab(&["kdv", "--betas", "0.8,0.5", "--output", path_str(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let env = envelope(&out);
    assert!(env["payload"]["max_abs_diff"].as_f64().unwrap() <= 1e-4);
    let rows = env["payload"]["spectrum"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!((rows[0]["exact"].as_f64().unwrap() + 0.64).abs() < 1e-12);
    let ratio = env["payload"]["riesz"]["ratio"].as_f64().unwrap();
    assert!((ratio - 3.0 / 16.0).abs() < 1e-4, "{ratio}");
    let profile = std::fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    assert!(profile.starts_with("x,value"));
    assert_eq!(profile.lines().count(), 8192 + 1);
    let table = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn kdv_rejects_ascending_speeds() {
    let out = ltlab(&["kdv", "--betas", "0.5,0.8"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("decreasing"));
}

#[test]
fn kdv_normalize_lands_on_manifold() {
    let out = ltlab(&["kdv", "--betas", "0.9,0.6,0.3", "--normalize"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let env = envelope(&out);
    let betas: Vec<f64> = serde_json::from_value(env["payload"]["spec"]["betas"].clone()).unwrap();
    let cubes: f64 = betas.iter().map(|b| b.powi(3)).sum();
    assert!((cubes - 3.0 / 16.0).abs() < 1e-12);
    assert!((env["payload"]["cube_sum"].as_f64().unwrap() - 0.1875).abs() < 1e-12);
}

#[test]
fn clr_sobolev_d3() {
    let out = ltlab(&["clr", "--dim", "3", "--potential", "sobolev"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let mus = envelope(&out)["payload"]["result"]["mus"].clone();
    let mu1 = mus[0].as_f64().unwrap();
    assert!((mu1 - 1.0).abs() < 1e-3, "{mu1}");
}

#[test]
fn clr_v1_beats_sobolev_in_d7() {
    let out = ltlab(&["clr", "--dim", "7", "--potential", "vl:1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let p = &envelope(&out)["payload"];
    let ell9 = p["result"]["ell_estimates"]["9"].as_f64().unwrap();
    let ell1 = p["ell_estimates_sobolev"]["1"].as_f64().unwrap();
    assert!(ell9 / ell1 > 1.0, "{ell9} / {ell1}");
}

#[test]
fn clr_rejects_low_dimension() {
    let out = ltlab(&["clr", "--dim", "2", "--potential", "sobolev"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("d >= 3"));
}

#[test]
fn single_point_sweep_matches_optimize() {
    let dir = tempfile::tempdir().unwrap();
    let common = ["--gamma", "1.5", "--nstates", "1", "--grid-n", "1500", "--seed", "3"];
    let mut opt_args = vec!["optimize"];
    opt_args.extend(common);
    let opt = envelope(&ltlab(&opt_args));
    let mut sweep_args = vec!["sweep", "--output", path_str(dir.path())];
    sweep_args.extend(common);
    let out = ltlab(&sweep_args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let ledger = std::fs::read_to_string(dir.path().join("ledger.jsonl")).unwrap();
    let lines: Vec<&str> = ledger.lines().collect();
    assert_eq!(lines.len(), 1);
    let line: Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(serde_json::to_string(&line["payload"]).unwrap(), serde_json::to_string(&opt["payload"]).unwrap());
    assert_eq!(line["config"]["scf"], opt["config"]["scf"]);
}

#[test]
fn sweep_ledger_has_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = ltlab(&[
        "sweep", "--gamma", "1.5,2", "--dim", "1", "--nstates", "1", "--grid-n", "1500", "--workers", "2", "--output",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("ledger.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "gamma,dim,N,ratio,norm_power,neg_count");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("1.5,1,1,"));
    assert!(rows[2].starts_with("2,1,1,"));
    let jsonl = std::fs::read_to_string(dir.path().join("ledger.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 2);
}

#[test]
fn empty_sweep_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(&cfg, "gamma = []\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = ltlab(&["sweep", "--config", path_str(&cfg), "--output", path_str(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(std::fs::read_to_string(out_dir.join("ledger.jsonl")).unwrap(), "");
    assert_eq!(std::fs::read_to_string(out_dir.join("ledger.csv")).unwrap().lines().count(), 1);
}

#[test]
fn sweep_validates_every_point_first() {
    let out = ltlab(&["sweep", "--gamma", "1.5,0.3", "--dim", "1"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("gamma=0.3"));
    assert!(out.stdout.is_empty());
}

#[test]
fn verify_quick_subset() {
    let dir = tempfile::tempdir().unwrap();
    let out = ltlab(&["verify", "--quick", "--output", path_str(dir.path())]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 11);
    assert!(!text.contains("[ 3]"));
    let env: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("envelope.json")).unwrap()).unwrap();
    assert_eq!(env["payload"]["passed"], 11);
}
