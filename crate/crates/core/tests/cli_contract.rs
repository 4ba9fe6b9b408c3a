use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn cvtomo(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvtomo"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("CVTOMO_OUT")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Simulated and extracted data in a fresh directory.
fn extracted(segments: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let o = cvtomo(
        dir.path(),
        &[
            "simulate",
            "--segments",
            segments,
            "--vacuum-segments",
            "1000",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = cvtomo(dir.path(), &["extract"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir
}

#[test]
fn simulate_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = cvtomo(
            d.path(),
            &["simulate", "--segments", "10", "--vacuum-segments", "10"],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for name in [
        "heralded.hseg",
        "vacuum.hseg",
        "heralded.json",
        "vacuum.json",
    ] {
        let (x, y) = (
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
        );
        assert!(x == y, "{name} differs");
    }
}

#[test]
fn invalid_configuration_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"simulation": {"segments": 0}}"#).unwrap();
    let o = cvtomo(
        &dir.path().join("out"),
        &["--config", cfg.to_str().unwrap(), "simulate"],
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    fs::write(&cfg, r#"{"simulation": {"no_such_field": 1}}"#).unwrap();
    let o = cvtomo(
        &dir.path().join("out"),
        &["--config", cfg.to_str().unwrap(), "simulate"],
    );
    assert_eq!(code(&o), 2);

    let o = cvtomo(dir.path(), &["simulate", "--true-p", "0.5,0.6"]);
    assert_eq!(code(&o), 2);
    let o = cvtomo(dir.path(), &["simulate", "--segments", "many"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn corrupted_batch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = cvtomo(
        dir.path(),
        &["simulate", "--segments", "50", "--vacuum-segments", "50"],
    );
    assert_eq!(code(&o), 0);
    let path = dir.path().join("heralded.hseg");
    let mut bytes = fs::read(&path).unwrap();
    bytes[0] = b'X';
    fs::write(&path, bytes).unwrap();
    let o = cvtomo(dir.path(), &["extract"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("magic"), "{}", stderr(&o));
}

#[test]
fn vacuum_as_signal_reports_no_signal() {
    let dir = tempfile::tempdir().unwrap();
    let o = cvtomo(
        dir.path(),
        &["simulate", "--segments", "500", "--vacuum-segments", "2000"],
    );
    assert_eq!(code(&o), 0);
    let vac = dir.path().join("vacuum.hseg");
    let o = cvtomo(
        dir.path(),
        &[
            "extract",
            "--heralded",
            vac.to_str().unwrap(),
            "--vacuum",
            vac.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn missing_or_empty_input_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = cvtomo(dir.path(), &["reconstruct"]);
    assert_eq!(code(&o), 2);
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let o = cvtomo(
        dir.path(),
        &["reconstruct", "--input", empty.to_str().unwrap()],
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = cvtomo(dir.path(), &["analyze", "--input", empty.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn far_outlier_is_a_reconstruction_failure() {
    let dir = extracted("1000");
    let src = fs::read_to_string(dir.path().join("heralded_quadratures.csv")).unwrap();
    let bad = dir.path().join("outlier.csv");
    fs::write(&bad, format!("{src}40.0\n")).unwrap();
    let o = cvtomo(
        dir.path(),
        &["reconstruct", "--input", bad.to_str().unwrap()],
    );
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn vacuum_reconstruction_and_analysis() {
    let dir = extracted("1000");
    let vac = dir.path().join("vacuum_quadratures.csv");
    let o = cvtomo(
        dir.path(),
        &[
            "reconstruct",
            "--input",
            vac.to_str().unwrap(),
            "--cutoff",
            "1",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(dir.path().join("reconstruction.json"));
    for m in r["methods"].as_array().unwrap() {
        let p = m["p"].as_array().unwrap();
        assert_eq!(p.len(), 2);
        assert!(p[0].as_f64().unwrap() > 0.97, "{}: {p:?}", m["method"]);
    }

    let o = cvtomo(
        dir.path(),
        &[
            "analyze",
            "--input",
            vac.to_str().unwrap(),
            "--replicas",
            "20",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let a = json(dir.path().join("analysis.json"));
    assert!(a["negativity"]["origin"].as_f64().unwrap() > 0.0);
    assert_eq!(a["bootstrap"]["significance"].as_f64().unwrap(), 0.0);
}

#[test]
fn few_replicas_warn() {
    let dir = extracted("1000");
    let o = cvtomo(dir.path(), &["analyze", "--replicas", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"));
    let o = cvtomo(dir.path(), &["analyze", "--replicas", "1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn commands_leave_their_inputs_untouched() {
    let dir = extracted("1000");
    let names = ["heralded.hseg", "vacuum.hseg", "heralded_quadratures.csv"];
    let before: Vec<Vec<u8>> = names
        .iter()
        .map(|n| fs::read(dir.path().join(n)).unwrap())
        .collect();
    for args in [
        &["extract"][..],
        &["reconstruct"],
        &["analyze", "--replicas", "10"],
    ] {
        let o = cvtomo(dir.path(), args);
        assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
    }
    let after: Vec<Vec<u8>> = names
        .iter()
        .map(|n| fs::read(dir.path().join(n)).unwrap())
        .collect();
    assert!(before == after);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"simulation": {"segments": 40, "vacuum_segments": 30, "rng_seed": 9}}"#,
    )
    .unwrap();
    let out = dir.path().join("a");
    let o = cvtomo(
        &out,
        &[
            "--config",
            cfg.to_str().unwrap(),
            "simulate",
            "--segments",
            "25",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let meta = json(out.join("heralded.json"));
    let text = meta.to_string();
    assert!(text.contains("\"segments\":25"), "{text}");
    assert!(text.contains("\"vacuum_segments\":30"));
    assert!(text.contains("\"rng_seed\":9"));
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cvtomo"))
        .args(["simulate", "--segments", "5", "--vacuum-segments", "5"])
        .env("CVTOMO_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.path().join("heralded.hseg").exists());
}

#[test]
fn analysis_of_a_saved_reconstruction() {
    let dir = extracted("2000");
    assert_eq!(code(&cvtomo(dir.path(), &["reconstruct"])), 0);
    let rec = dir.path().join("reconstruction.json");
    let o = cvtomo(
        dir.path(),
        &["analyze", "--reconstruction", rec.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let a = json(dir.path().join("analysis.json"));
    assert!(a["bootstrap"].is_null());
    let em = json(&rec)["methods"]
        .as_array()
        .unwrap()
        .iter()
        .find(|m| m["method"] == "em")
        .unwrap()["p"]
        .clone();
    assert_eq!(a["p"], em);
    let pgm = fs::read(dir.path().join("wigner.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n"));
}

#[test]
fn quick_reproduction_is_bit_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = cvtomo(d.path(), &["reproduce", "--quick", "--replicas", "12"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for name in ["report.json", "wigner.csv", "mode.csv"] {
        let (x, y) = (
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
        );
        assert!(x == y, "{name} differs");
    }
    let r = json(a.path().join("report.json"));
    assert!(r["criteria"].as_array().unwrap().len() >= 6);
}
