use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nll(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nll"))
        .args(args)
        .output()
        .expect("spawn nll")
}

fn report(dir: &Path) -> Value {
    let text = std::fs::read_to_string(dir.join("report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn check_names(r: &Value) -> Vec<String> {
    r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap().to_string())
        .collect()
}

fn data_rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn classify_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = nll(&[
        "--out", out, "--n", "3", "--s", "0.5", "--q", "1.2", "classify",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path());
    assert_eq!(r["schema"], "nll-report/1");
    assert_eq!(r["scenario"], "classify");
    assert!(r.to_string().contains("subcritical-trivial"));
    assert_eq!(check_names(&r), ["classification"]);
}

#[test]
fn missing_exponent_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = nll(&["--out", out, "--n", "3", "--s", "0.5", "classify"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("problem.q"));
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn sampled_operator_values_are_reproducible() {
    let run = |dir: &Path, seed: &str| {
        let o = nll(&[
            "--out",
            dir.to_str().unwrap(),
            "--seed",
            seed,
            "--n",
            "2",
            "--s",
            "0.5",
            "operator-eval",
            "--field",
            "bubble",
            "--samples",
            "4",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(dir.join("operator.csv")).unwrap()
    };
    let (a, b, c) = (
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
    );
    let first = run(a.path(), "11");
    assert_eq!(first, run(b.path(), "11"));
    assert_ne!(first, run(c.path(), "12"));
    assert_eq!(data_rows(&a.path().join("operator.csv")), 4);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = dir.path().join("run.toml");
    let text = format!(
        "scenario = \"classify\"\noutput = {:?}\n[problem]\nn = 3\ns = 0.5\nq = 1.2\n",
        out.to_str().unwrap()
    );
    std::fs::write(&cfg, text).unwrap();

    let o = nll(&["--config", cfg.to_str().unwrap(), "run"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(report(&out).to_string().contains("subcritical-trivial"));

    let o = nll(&["--config", cfg.to_str().unwrap(), "--q", "3", "run"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["config"]["problem"]["q"], 3.0);
    assert!(r.to_string().contains("supercritical-sharpness"));
}

#[test]
fn iterate_trace_has_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = nll(&[
        "--out",
        out,
        "--n",
        "3",
        "--s",
        "0.5",
        "--q",
        "1.5",
        "iterate",
        "--cbar",
        "10",
        "--max-steps",
        "50",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = dir.path().join("plot/gamma_vs_m.csv");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("m,gamma,C\n"));
    assert_eq!(data_rows(&csv), 50);
    assert_eq!(check_names(&report(dir.path())), ["closed-form", "limit"]);
}

#[test]
fn supercritical_iterate_fails_honestly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = nll(&[
        "--out", out, "--n", "3", "--s", "0.5", "--q", "2", "iterate",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let r = report(dir.path());
    assert!(r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["status"] == "fail"));
}

#[test]
fn mass_scan_reports_every_radius() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = nll(&[
        "--out",
        out,
        "--n",
        "1",
        "--s",
        "0.25",
        "--q",
        "1.5",
        "mass-scan",
        "--field",
        "kind = \"power\", beta = 2.0, c = 1.0",
        "--doublings",
        "6",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(data_rows(&dir.path().join("mass.csv")), 7);
    assert_eq!(data_rows(&dir.path().join("plot/mass_growth.csv")), 7);
    assert_eq!(
        check_names(&report(dir.path())),
        ["dyadic-inequality", "growth-bound"]
    );
}

#[test]
fn pairing_check_is_symmetric() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = nll(&["--out", out, "--n", "1", "--s", "0.5", "pairing-check"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(data_rows(&dir.path().join("pairing.csv")), 4);
    assert_eq!(check_names(&report(dir.path())), ["symmetry"]);
}

#[test]
fn bad_field_flag_is_rejected() {
    let o = nll(&[
        "--n",
        "1",
        "--s",
        "0.5",
        "operator-eval",
        "--field",
        "nonsense",
        "--point",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = nll_cli::RunConfig::load(&path).unwrap();
            cfg.validate()
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 4);
}

#[test]
fn critical_iteration_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/iterate-critical.toml");
    let out = dir.path().to_str().unwrap();
    let o = nll(&["--config", cfg.to_str().unwrap(), "--out", out, "run"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path());
    assert!(r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["status"] == "pass"));
    assert_eq!(data_rows(&dir.path().join("plot/gamma_vs_m.csv")), 200);
}
