use std::path::Path;
use std::process::{Command, Output};

use qmeasure::experiments::{list_experiments, ParamDefault};
use serde_json::Value;

fn qmeasure(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmeasure"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn run_to(path: &Path, args: &[&str]) -> Output {
    let mut full = vec!["run"];
    full.extend_from_slice(args);
    full.push("--out");
    full.push(path.to_str().unwrap());
    qmeasure(&full)
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|x| x.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn list_shows_experiments_and_lambda_default() {
    let out = qmeasure(&["list"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("zeno-continuous"));
    assert!(text.contains("--lambda=4 "));
    for info in list_experiments() {
        assert!(text.lines().any(|l| l.starts_with(info.name)), "{}", info.name);
    }
}

#[test]
fn every_experiment_runs_with_defaults_and_explicit_defaults() {
    let dir = tempfile::tempdir().unwrap();
    for info in list_experiments() {
        let path = dir.path().join(format!("{}.csv", info.name));
        let out = run_to(&path, &[info.name]);
        assert_eq!(out.status.code(), Some(0), "{}: {}", info.name, stdout(&out));
        assert!(path.exists());

        let defaults: Vec<String> = info
            .params
            .iter()
            .flat_map(|p| {
                let value = match p.default {
                    ParamDefault::Real(x) => format!("{x}"),
                    ParamDefault::Int(n) => format!("{n}"),
                    ParamDefault::Text(s) => s.to_string(),
                };
                [format!("--{}", p.name), value]
            })
            .collect();
        let mut args = vec![info.name];
        args.extend(defaults.iter().map(String::as_str));
        let explicit = dir.path().join(format!("{}-explicit.csv", info.name));
        let out = run_to(&explicit, &args);
        assert_eq!(out.status.code(), Some(0), "{}: {}", info.name, stdout(&out));
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&explicit).unwrap());
    }
}

#[test]
fn povm_detectors_reports_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_to(&dir.path().join("p.csv"), &["povm-detectors"]);
    assert!(out.status.success());
    let line = stdout(&out)
        .lines()
        .find(|l| l.contains(" max_p:"))
        .unwrap()
        .to_string();
    assert!(line.starts_with("PASS"), "{line}");
    assert!(line.contains("expected 0.5857864"), "{line}");
    assert!(line.contains("tolerance 1e-6"), "{line}");
}

#[test]
fn unmonitored_zeno_csv_follows_rabi_formula() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("z.csv");
    let out = run_to(&path, &["zeno-continuous", "--omega0", "1", "--lambda", "0"]);
    assert!(out.status.success(), "{}", stdout(&out));
    let (header, rows) = read_csv(&path);
    assert_eq!(header[0], "t");
    let s = header.iter().position(|h| h == "survival").unwrap();
    assert!(rows.len() > 6000);
    for row in rows {
        assert!((row[s] - row[0].cos().powi(2)).abs() < 1e-6);
    }
}

#[test]
fn coin_check_passes_at_large_delta() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_to(
        &dir.path().join("c.csv"),
        &["coin", "--delta", "0.99", "--trials", "1000000", "--seed", "1"],
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("PASS weak_value: expected 99.9"));
}

#[test]
fn outputs_are_byte_identical_for_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    for format in ["csv", "json"] {
        let a = dir.path().join(format!("a.{format}"));
        let b = dir.path().join(format!("b.{format}"));
        for path in [&a, &b] {
            let out = run_to(path, &["coin", "--trials", "20000", "--seed", "9", "--format", format]);
            assert!(out.status.success());
        }
        let (a, b) = (std::fs::read(&a).unwrap(), std::fs::read_to_string(&b).unwrap());
        // Only the echoed output path differs between the two JSON files.
        let b = b.replace("b.json", "a.json");
        assert_eq!(a, b.into_bytes());
    }
}

#[test]
fn json_has_metadata_and_equal_length_series() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let out = run_to(&path, &["decoherence", "--format", "json", "--tau-step", "0.5"]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let meta = &doc["metadata"];
    assert_eq!(meta["experiment"], "decoherence");
    assert_eq!(meta["parameters"]["tau-step"], 0.5);
    assert_eq!(meta["parameters"]["points"], 2048);
    assert!(meta["version"].is_string());
    let series = doc["series"].as_object().unwrap();
    let lengths: Vec<usize> = series.values().map(|v| v.as_array().unwrap().len()).collect();
    assert_eq!(lengths.len(), 5);
    assert!(lengths.iter().all(|&n| n == 11), "{lengths:?}");
}

#[test]
fn csv_is_plain_decimal_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.csv");
    assert!(run_to(&path, &["weak"]).status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "observable,weak_re,weak_im,pre_expectation,post_expectation,expected_weak_re,expected_weak_im"
    );
    assert!(lines.all(|l| l.chars().all(|c| c.is_ascii_digit() || ".,-e".contains(c))));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    assert_eq!(run_to(&path, &["bogus"]).status.code(), Some(2));
    assert_eq!(run_to(&path, &["weak", "--lambda", "2"]).status.code(), Some(2));
    assert_eq!(run_to(&path, &["weak", "--theta-deg", "abc"]).status.code(), Some(2));
    assert_eq!(qmeasure(&["run", "weak"]).status.code(), Some(2));
    assert_eq!(qmeasure(&["frobnicate"]).status.code(), Some(2));
    let failing = run_to(&path, &["weak", "--anomalous-theta-deg", "80"]);
    assert_eq!(failing.status.code(), Some(1));
    assert!(stdout(&failing).contains("FAIL anomalous_sigma_z_weak"));
    let unwritable = dir.path().join("missing-dir").join("x.csv");
    assert_eq!(run_to(&unwritable, &["weak"]).status.code(), Some(2));
}
