use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use orlicz_core::{DomainSpec, GridFunction};
use serde_json::{json, Value};

fn run(config: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orlicz")).arg("--config").arg(config).args(extra).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, v: Value) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_vec_pretty(&v).unwrap()).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

fn stderr_lines(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stderr)
        .lines()
        .map(|l| serde_json::from_str(l).expect("stderr is JSON lines"))
        .collect()
}

fn harmonic_problem() -> Value {
    json!({
        "command": "minimize",
        "density": { "integrand": { "kind": "power", "p": 2 } },
        "domain": { "lower": [0, 0], "upper": [1, 1], "resolution": [65, 65] },
        "boundary": "x1*x2",
        "output": "u.grid"
    })
}

#[test]
fn check_power_two_in_three_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "cfg.json",
        json!({
            "command": "check",
            "nfunction": { "kind": "power", "p": 2 },
            "growth": { "kind": "power", "p": 2 },
            "domain": { "lower": [0, 0, 0], "upper": [1, 1, 1], "resolution": [5, 5, 5] }
        }),
    );
    let out = run(&cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("check.json"));
    assert_eq!(report["report"]["all_pass"], json!(true));
    assert!((report["report"]["delta2"]["constant"].as_f64().unwrap() - 4.0).abs() < 1e-9);
    assert_eq!(report["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn norm_of_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let d = DomainSpec::unit_cube(2, 9).unwrap();
    GridFunction::zeros(d).write_csv(&dir.path().join("zeros.csv"), None).unwrap();
    let cfg = write_config(
        dir.path(),
        "cfg.json",
        json!({ "command": "norm", "nfunction": { "kind": "power", "p": 2 }, "input": "zeros.csv" }),
    );
    let out = run(&cfg, &[]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(read_json(&dir.path().join("norm.json"))["norm"], json!(0.0));
}

#[test]
fn minimize_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "min.json", harmonic_problem());
    let out = run(&cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_json(&dir.path().join("minimize.json"))["converged"], json!(true));

    let cfg = write_config(
        dir.path(),
        "an.json",
        json!({
            "command": "analyze",
            "input": "u.grid",
            "nfunction": { "kind": "power", "p": 2 },
            "growth": { "kind": "power", "p": 1.5 },
            "decay": { "r0": 0.4 },
            "chain": { "m3": 1e-6 }
        }),
    );
    let out = run(&cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(&dir.path().join("analyze.json"));
    assert!(r["decay"]["alpha_hat"].as_f64().unwrap() >= 0.9, "{r}");
    assert_eq!(r["caccioppoli_fit"]["violations"], json!(0));
    let alpha = r["degiorgi_constants"]["alpha"].as_f64().unwrap();
    assert!(alpha > 0.0 && alpha < 1.0);

    // G = a^2 in two dimensions violates n G > a G'
    let mut v = read_json(&cfg);
    v["growth"]["p"] = json!(2);
    let cfg = write_config(dir.path(), "an2.json", v);
    let out = run(&cfg, &[]);
    assert_eq!(out.status.code(), Some(2));
    let r = read_json(&dir.path().join("analyze.json"));
    assert_eq!(r["degiorgi_constants"]["error"]["kind"], json!("invalid"));
    assert!(r["decay"]["alpha_hat"].as_f64().unwrap() >= 0.9);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "min.json", harmonic_problem());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (o, threads) in [(&a, "1"), (&b, "3")] {
        let out = run(&cfg, &["--output-dir", o.to_str().unwrap(), "--threads", threads]);
        assert_eq!(out.status.code(), Some(0));
    }
    for f in ["u.grid", "minimize.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn grid_files_round_trip_between_commands() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = harmonic_problem();
    csv["output"] = json!("u.csv");
    csv["report"] = json!("csv.json");
    let cfg_bin = write_config(dir.path(), "bin.json", harmonic_problem());
    let cfg_csv = write_config(dir.path(), "csv.cfg", csv);
    assert_eq!(run(&cfg_bin, &[]).status.code(), Some(0));
    assert_eq!(run(&cfg_csv, &[]).status.code(), Some(0));
    let (u_bin, digest) = GridFunction::read_binary(&dir.path().join("u.grid")).unwrap();
    let u_csv = GridFunction::read_csv(&dir.path().join("u.csv")).unwrap();
    assert_eq!(u_bin.values(), u_csv.values());
    let report = read_json(&dir.path().join("minimize.json"));
    assert_eq!(hex::encode(digest.unwrap()), report["config_sha256"].as_str().unwrap());

    let cfg = write_config(
        dir.path(),
        "norm.cfg",
        json!({ "command": "norm", "nfunction": { "kind": "power", "p": 2 }, "input": "u.grid" }),
    );
    assert_eq!(run(&cfg, &[]).status.code(), Some(0));
    let n = read_json(&dir.path().join("norm.json"))["norm"].as_f64().unwrap();
    assert!(
        (n - orlicz_core::modular::luxemburg_norm(&orlicz_core::NFunction::power(2.0, 2).unwrap(), &u_csv).unwrap())
            .abs()
            < 1e-15
    );
}

#[test]
fn validation_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "cfg.json",
        json!({ "command": "norm", "nfunction": { "kind": "power", "p": 2 }, "input": "zeros.csv", "extra": 1 }),
    );
    let out = run(&cfg, &[]);
    assert_eq!(out.status.code(), Some(2));
    let lines = stderr_lines(&out);
    assert_eq!(lines.last().unwrap()["level"], json!("error"));

    let cfg = write_config(
        dir.path(),
        "missing.json",
        json!({ "command": "norm", "nfunction": { "kind": "power", "p": 2 }, "input": "absent.csv" }),
    );
    assert_eq!(run(&cfg, &[]).status.code(), Some(2));

    // the default report name must not replace the config
    let cfg = write_config(
        dir.path(),
        "norm.json",
        json!({ "command": "norm", "nfunction": { "kind": "power", "p": 2 }, "input": "zeros.csv" }),
    );
    GridFunction::zeros(DomainSpec::unit_cube(2, 5).unwrap()).write_csv(&dir.path().join("zeros.csv"), None).unwrap();
    assert_eq!(run(&cfg, &[]).status.code(), Some(2));
    assert_eq!(read_json(&cfg)["command"], json!("norm"));
}

#[test]
fn numerical_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    GridFunction::constant(DomainSpec::unit_cube(2, 33).unwrap(), 1.0)
        .write_csv(&dir.path().join("flat.csv"), None)
        .unwrap();
    let cfg = write_config(
        dir.path(),
        "cfg.json",
        json!({
            "command": "analyze",
            "input": "flat.csv",
            "nfunction": { "kind": "power", "p": 2 },
            "decay": { "r0": 0.4 }
        }),
    );
    let out = run(&cfg, &[]);
    assert_eq!(out.status.code(), Some(3));
    let r = read_json(&dir.path().join("analyze.json"));
    assert_eq!(r["decay"]["error"]["kind"], json!("insufficient_scales"));
    assert!(r["decay"]["scales"]["scales"].as_array().unwrap().len() >= 3);
}

#[test]
fn sequence_and_seed_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "cfg.json",
        json!({ "command": "sequence", "growth": { "kind": "power", "p": 2 }, "dim": 3, "seeds": [1e-9, 1e-6] }),
    );
    assert_eq!(run(&cfg, &[]).status.code(), Some(0));
    let r = read_json(&dir.path().join("sequence.json"));
    let y = r["y0_star"].as_f64().unwrap();
    assert!((y / 2f64.powi(-24) - 1.0).abs() < 1e-5);
    assert_eq!(r["trajectories"][0]["converged"], json!(true));
    assert_eq!(r["trajectories"][1]["diverged"], json!(true));
    let h1 = r["config_sha256"].clone();
    assert_eq!(run(&cfg, &["--seed", "9"]).status.code(), Some(0));
    assert_ne!(read_json(&dir.path().join("sequence.json"))["config_sha256"], h1);
}

#[test]
fn conjugate_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "cfg.json",
        json!({
            "command": "conjugate",
            "nfunction": { "kind": "power", "p": 2 },
            "dim": 3,
            "ladder": { "lo": 1, "hi": 100, "per_decade": 2 }
        }),
    );
    assert_eq!(run(&cfg, &[]).status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("conjugate.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_sha256: "));
    assert_eq!(lines.next().unwrap(), "t,A,a,conjugate,sobolev_conjugate");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 5);
    for r in rows {
        assert!((r[3] - r[0] * r[0] / 4.0).abs() < 1e-8 * r[3]);
        // t^2 in three dimensions has A_*(t) = (t / 6)^6
        assert!((r[4] - (r[0] / 6.0).powi(6)).abs() < 1e-6 * r[4]);
    }
}

#[test]
fn conjugate_table_without_sobolev_conjugate() {
    let dir = tempfile::tempdir().unwrap();
    // p(0) = 2 = n, so A_* is undefined at the origin
    let cfg = write_config(
        dir.path(),
        "cfg.json",
        json!({
            "command": "conjugate",
            "nfunction": { "kind": "variable_exponent", "p": "2 + 0.5*x1" },
            "dim": 2,
            "ladder": { "lo": 1, "hi": 100, "per_decade": 2 }
        }),
    );
    let out = run(&cfg, &[]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_lines(&out).last().unwrap()["kind"], json!("integrability"));
    let text = fs::read_to_string(dir.path().join("conjugate.csv")).unwrap();
    let rows: Vec<Vec<f64>> =
        text.lines().skip(2).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 5);
    for r in rows {
        assert!((r[3] - r[0] * r[0] / 4.0).abs() < 1e-8 * r[3]);
        assert!(r[4].is_nan());
    }
}
