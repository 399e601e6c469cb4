use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lapse-urn"));
    c.env_remove("LAPSE_URN_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn assert_schema(name: &str, value: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(value).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{name}: {errors:#?}");
}

#[test]
fn simulate_writes_one_row_per_step_and_reruns_identically() {
    let args = ["simulate", "--preset", "krw", "--p", "0.5", "--theta", "0.5", "--n", "1000", "--seed", "7"];
    let a = run(&args);
    assert!(a.status.success());
    let text = stdout(&a);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,R,B,T,y,column");
    assert_eq!(lines.len(), 1002);
    assert_eq!(lines[1], "0,1,1,2,,");
    assert_eq!(run(&args).stdout, a.stdout);

    let j = run(&["simulate", "--preset", "a3c1", "--p", "0.7", "--theta", "0.4", "--n", "50", "--format", "json"]);
    assert_schema("simulate", &json(&j));
}

#[test]
fn tenability_violation_exits_with_validation_code() {
    let out = run(&["simulate", "--a", "2", "--b", "1", "--c", "2", "--d", "1", "--p", "0.5", "--theta", "0.5", "--n", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("(c)"));
    assert!(out.stdout.is_empty());
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["limits", "--preset", "krw", "--p", "0.5"]).status.code(), Some(2));
    assert_eq!(run(&["limits", "--preset", "krw", "--p", "0.5", "--theta", "0.3", "--bogus", "1"]).status.code(), Some(2));
    assert_eq!(run(&["limits", "--preset", "nope", "--p", "0.5", "--theta", "0.3"]).status.code(), Some(2));
    assert_eq!(run(&["limits", "--preset", "krw", "--p", "1.5", "--theta", "0.3"]).status.code(), Some(2));
    assert_eq!(run(&["limits", "--preset", "krw", "--p", "0.5", "--theta", "0.3", "--format", "csv"]).status.code(), Some(2));
}

#[test]
fn help_lists_every_flag() {
    for sub in [
        vec!["simulate"],
        vec!["exact"],
        vec!["limits"],
        vec!["phase"],
        vec!["verify", "lln"],
        vec!["verify", "clt"],
        vec!["verify", "fclt"],
        vec!["verify", "lapses"],
        vec!["verify", "calibrate"],
    ] {
        let mut args = sub.clone();
        args.push("--help");
        let out = run(&args);
        assert!(out.status.success(), "{sub:?}");
        let text = stdout(&out);
        for flag in ["--config", "--output", "--format"] {
            assert!(text.contains(flag), "{sub:?} help lacks {flag}");
        }
    }
    let text = stdout(&run(&["verify", "clt", "--help"]));
    for flag in ["--workers", "--seed", "--replicates", "--paper-centering", "--samples", "--kappa", "--clt-rel"] {
        assert!(text.contains(flag), "verify clt help lacks {flag}");
    }
}

#[test]
fn limits_examples() {
    let v = json(&run(&["limits", "--preset", "krw", "--p", "0.5", "--theta", "0.3"]));
    assert_schema("limits", &v);
    assert_eq!(v["report"]["rho"], serde_json::json!([0.5, 0.5]));

    let v = json(&run(&["limits", "--preset", "a2c0", "--theta", "1", "--p", "0.875"]));
    assert_schema("limits", &v);
    assert_eq!(v["report"]["regime"]["tag"], "critical");
    assert!(v["report"]["sigma_paper"].is_array());

    let v = json(&run(&["limits", "--preset", "a2c0", "--theta", "1", "--p", "1"]));
    assert_schema("limits", &v);
    assert_eq!(v["report"]["regime"]["tag"], "superdiffusive");
    assert!(v["report"]["sigma_paper"].is_null());
    assert!(v["report"]["flags"].as_array().unwrap().contains(&"superdiffusive".into()));
}

#[test]
fn exact_examples() {
    let v = json(&run(&["exact", "--preset", "krw", "--theta", "0", "--p", "0.5", "--n", "2"]));
    assert_schema("exact", &v);
    assert_eq!(v["support"], serde_json::json!([3, 4, 5]));
    assert_eq!(v["probs"], serde_json::json!([0.25, 0.5, 0.25]));

    let v = json(&run(&["exact", "--preset", "krw", "--theta", "0.4", "--p", "0.9", "--n", "0"]));
    assert_eq!(v["probs"], serde_json::json!([1.0]));

    let v = json(&run(&["exact", "--rational", "--preset", "a3c1", "--theta", "1/3", "--p", "0.6", "--n", "20"]));
    assert_schema("exact", &v);
    assert_eq!(v["total_mass"], "1");

    // column swap (p, a, b, c, d) -> (1 - p, c, d, a, b) leaves the law of R unchanged
    let csv = |args: &[&str]| {
        let mut rows: Vec<String> = stdout(&run(args))
            .lines()
            .skip(1)
            .map(|l| l.split_once(',').unwrap().1.to_string())
            .collect();
        rows.sort();
        rows
    };
    let base = ["exact", "--rational", "--format", "csv", "--n", "20", "--theta", "2/7"];
    let x = csv(&[&base[..], &["--a", "3", "--b", "1", "--c", "0", "--d", "4", "--p", "0.3"]].concat());
    let y = csv(&[&base[..], &["--a", "0", "--b", "4", "--c", "3", "--d", "1", "--p", "0.7"]].concat());
    assert_eq!(x, y);

    assert_eq!(run(&["exact", "--rational", "--preset", "krw", "--theta", "0.5", "--p", "0.5", "--n", "31"]).status.code(), Some(2));
}

#[test]
fn phase_curves() {
    let curve = |args: &[&str]| -> Vec<(f64, f64)> {
        stdout(&run(args))
            .lines()
            .skip(1)
            .map(|l| {
                let (a, b) = l.split_once(',').unwrap();
                (a.parse().unwrap(), b.parse().unwrap())
            })
            .collect()
    };
    let red = curve(&["phase", "--preset", "a2c0", "--grid", "101", "--curve"]);
    assert!(!red.is_empty());
    for (theta, pc) in &red {
        assert!((pc - (3.0 / (8.0 * theta) + 0.5)).abs() < 1e-12);
    }
    assert_eq!(red[0], (0.75, 1.0));

    let green = curve(&["phase", "--preset", "pure", "--K", "1", "--curve"]);
    assert_eq!(green.first(), Some(&(0.5, 1.0)));
    for (theta, pc) in &green {
        assert!((pc - (1.0 / (4.0 * theta) + 0.5)).abs() < 1e-12);
    }

    let krw = stdout(&run(&["phase", "--preset", "krw", "--grid", "21"]));
    let mut lines = krw.lines();
    assert_eq!(lines.next(), Some("p,theta,regime,lambda_ratio,p_critical"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 21 * 21);
    for r in &rows {
        let p: f64 = r[0].parse().unwrap();
        let expected = if p == 0.5 { "degenerate" } else { "diffusive" };
        assert_eq!(r[2], expected);
        assert_eq!(r[4], "");
    }

    // step 1/8: the critical curve passes through (7/8, 1) and (1, 3/4)
    let v = json(&run(&["phase", "--preset", "a2c0", "--grid", "9", "--format", "json"]));
    assert_schema("phase", &v);
    let critical: Vec<(f64, f64)> = v["cells"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["regime"] == "critical")
        .map(|c| (c["p"].as_f64().unwrap(), c["theta"].as_f64().unwrap()))
        .collect();
    assert_eq!(critical, vec![(1.0, 0.75), (0.875, 1.0)]);
}

#[test]
fn verify_reports_validate_and_ignore_worker_count() {
    let base = ["verify", "clt", "--preset", "pure", "--K", "1", "--p", "0.6", "--theta", "1", "--n", "400", "--replicates", "3000", "--seed", "11"];
    let one = run(&[&base[..], &["--workers", "1"]].concat());
    let four = run(&[&base[..], &["--workers", "4"]].concat());
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, four.stdout);
    let v = json(&one);
    assert_schema("verify-clt", &v);
    assert_eq!(v["verdict"]["basis"], "calibrated");

    let lln = run(&["verify", "lln", "--preset", "krw", "--p", "0.75", "--theta", "0.5", "--n", "300", "--replicates", "2000", "--checkpoints", "10,100"]);
    assert_eq!(lln.status.code(), Some(0));
    let v = json(&lln);
    assert_schema("verify-lln", &v);
    assert_eq!(v["stats"]["checkpoints"], serde_json::json!([10, 100, 300]));

    let lapses = run(&["verify", "lapses", "--preset", "krw", "--p", "0.7", "--theta", "0.5", "--n", "1000", "--replicates", "100"]);
    let v = json(&lapses);
    assert_schema("verify-lapses", &v);
    assert!(v["statistics"]["gof"]["p_value"].is_number());
}

#[test]
fn statistical_failure_exits_four_and_still_reports() {
    let out = run(&[
        "verify", "fclt", "--preset", "krw", "--p", "1", "--theta", "1", "--n", "400", "--replicates", "2000",
        "--st-pairs", "0.5:1", "--target", "paper",
    ]);
    assert_eq!(out.status.code(), Some(4));
    let v = json(&out);
    assert_schema("verify-fclt", &v);
    assert_eq!(v["pass"], false);
}

#[test]
fn regime_errors_exit_three() {
    let out = run(&["verify", "clt", "--preset", "a2c0", "--theta", "1", "--p", "1", "--n", "100", "--replicates", "100"]);
    assert_eq!(out.status.code(), Some(3));
    let out = run(&["verify", "lln", "--preset", "pure", "--K", "1", "--theta", "1", "--p", "1", "--n", "100", "--replicates", "100"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn calibration_recovers_k_against_sign_corrected_covariance() {
    let out = run(&["verify", "calibrate", "--family", "krw", "--theta", "0", "--exact"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_schema("verify-calibrate", &v);
    let cal = &v["calibration"];
    assert!((cal["kappa_hat_sign_corrected"].as_f64().unwrap() - 3.0).abs() < 1e-9);
    assert!(cal["flags"].as_array().unwrap().contains(&"hypothesis_rejected".into()));
    let paper = run(&["verify", "calibrate", "--family", "krw", "--theta", "0", "--exact", "--basis", "paper"]);
    assert_eq!(paper.status.code(), Some(4));

    let mc = run(&["verify", "calibrate", "--preset", "pure", "--K", "2", "--p", "0.3,0.8", "--theta", "0.5", "--n", "300", "--replicates", "2000"]);
    assert_schema("verify-calibrate", &json(&mc));
}

#[test]
fn config_file_and_environment_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# shared settings\nn = 40\nseed = 3\np = 0.9\n").unwrap();
    let cfg = cfg.to_str().unwrap();

    let flags = run(&["simulate", "--preset", "krw", "--theta", "0.6", "--p", "0.9", "--n", "40", "--seed", "8"]);
    let mixed = run(&["simulate", "--preset", "krw", "--theta", "0.6", "--seed", "8", "--config", cfg]);
    assert!(mixed.status.success(), "{}", String::from_utf8_lossy(&mixed.stderr));
    assert_eq!(flags.stdout, mixed.stdout);

    let from_cfg = run(&["simulate", "--preset", "krw", "--theta", "0.6", "--config", cfg]);
    let explicit = run(&["simulate", "--preset", "krw", "--theta", "0.6", "--p", "0.9", "--n", "40", "--seed", "3"]);
    assert_eq!(from_cfg.stdout, explicit.stdout);

    let env = bin()
        .args(["simulate", "--preset", "krw", "--theta", "0.6", "--p", "0.9", "--n", "40"])
        .env("LAPSE_URN_SEED", "3")
        .output()
        .unwrap();
    assert_eq!(env.stdout, explicit.stdout);

    std::fs::write(dir.path().join("bad.cfg"), "unknown-key = 1\n").unwrap();
    let bad = run(&["limits", "--preset", "krw", "--p", "0.5", "--theta", "0.3", "--config", dir.path().join("bad.cfg").to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn output_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("law.csv");
    let out = run(&["exact", "--preset", "krw", "--theta", "0", "--p", "0.5", "--n", "2", "--format", "csv", "-o", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(path).unwrap(), "k,R,prob\n0,3,0.25\n1,4,0.5\n2,5,0.25\n");

    let samples = dir.path().join("samples.csv");
    let out = run(&[
        "verify", "clt", "--preset", "krw", "--p", "0.8", "--theta", "0.5", "--n", "100", "--replicates", "50",
        "--samples", samples.to_str().unwrap(),
    ]);
    assert!(out.status.code().is_some_and(|c| c == 0 || c == 4));
    let text = std::fs::read_to_string(samples).unwrap();
    assert!(text.starts_with("replicate,m,R_fluct_scaled\n"));
    assert_eq!(text.lines().count(), 51);
}
