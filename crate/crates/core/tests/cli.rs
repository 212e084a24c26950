use std::fs;
use std::path::Path;
use std::process::Command;

use nisio::cli::{run, verify_suite, Scale, Subcommand, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_PASS};
use nisio::reference::UpwindForm;

const MINIMAL: &str = r#"{
    "grid": {"lower": -6, "upper": 6, "n_nodes": 241},
    "norm": {"p": 2},
    "family": {"family": "gaussian_drift", "lambda_interval": [-1, 1]},
    "initial": {"kind": "bump", "params": {"radius": 1}},
    "time": {"t": 0.25, "tol_rel": 1e-3, "n_max": 8},
    "seeds": 11,
    "output_dir": "unused"
}"#;

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn minimal_envelope_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let out = tmp.path().join("out");
    let outcome = run(
        Subcommand::Envelope,
        Some(&cfg),
        Some(&out),
        None,
        Scale::Small,
    );
    assert_eq!(outcome.exit_code, EXIT_PASS, "{}", outcome.message);
    for name in [
        "envelope.json",
        "final.csv",
        "convergence.csv",
        "report.json",
        "timing.json",
    ] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    let env: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("envelope.json")).unwrap()).unwrap();
    for key in [
        "levels_used",
        "converged",
        "upper_bound_margin",
        "boundary_leakage",
        "increments",
    ] {
        assert!(env.get(key).is_some(), "envelope.json lacks {key}");
    }
    let csv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert!(csv.starts_with("level,steps,h,increment_lp,norm_lp\n"));
    assert!(fs::read_to_string(out.join("final.csv"))
        .unwrap()
        .starts_with("x,value\n"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["provenance"]["seed"], 11);
    assert_eq!(report["config"]["grid"]["n_nodes"], 241);
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    for sub in [Subcommand::Envelope, Subcommand::Derivative] {
        let a = tmp.path().join(format!("{}_a", sub.name()));
        let b = tmp.path().join(format!("{}_b", sub.name()));
        let first = run(sub, Some(&cfg), Some(&a), Some(5), Scale::Small).exit_code;
        let second = run(sub, Some(&cfg), Some(&b), Some(5), Scale::Small).exit_code;
        assert_ne!(first, EXIT_CONFIG);
        assert_eq!(first, second);
        for entry in fs::read_dir(&a).unwrap() {
            let name = entry.unwrap().file_name();
            if name == "timing.json" {
                continue;
            }
            assert_eq!(
                fs::read(a.join(&name)).unwrap(),
                fs::read(b.join(&name)).unwrap(),
                "{name:?} differs"
            );
        }
    }
}

#[test]
fn pure_shift_envelope_exits_two_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &MINIMAL.replace("gaussian_drift", "pure_shift"));
    let out = tmp.path().join("out");
    let outcome = run(
        Subcommand::Envelope,
        Some(&cfg),
        Some(&out),
        None,
        Scale::Small,
    );
    assert_eq!(outcome.exit_code, EXIT_CONFIG);
    assert!(
        outcome.message.contains("no envelope bound available"),
        "{}",
        outcome.message
    );
    assert!(outcome.message.contains("use `counterexample`"));
    assert!(!out.exists());
}

#[test]
fn configuration_errors_name_the_key_and_write_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (MINIMAL.replace("\"p\": 2", "\"p\": 0.5"), "norm.p"),
        (
            MINIMAL.replace("\"n_nodes\": 241", "\"n_nodes\": -3"),
            "grid.n_nodes",
        ),
        (
            MINIMAL.replace("[-1, 1]", "[1, -1]"),
            "family.lambda_interval",
        ),
        (MINIMAL.replace("\"t\": 0.25", "\"t\": 0"), "time.t"),
        (
            MINIMAL.replace(
                r#""kind": "bump", "params": {"radius": 1}"#,
                r#""kind": "custom_csv", "params": {"path": "/nonexistent.csv"}"#,
            ),
            "initial.params.path",
        ),
    ];
    for (body, key) in cases {
        let cfg = write_config(tmp.path(), &body);
        let out = tmp.path().join("out");
        let outcome = run(
            Subcommand::Envelope,
            Some(&cfg),
            Some(&out),
            None,
            Scale::Small,
        );
        assert_eq!(outcome.exit_code, EXIT_CONFIG, "{key}: {}", outcome.message);
        assert!(
            outcome.message.contains(key),
            "expected `{key}` in: {}",
            outcome.message
        );
        assert!(!out.exists());
    }
}

#[test]
fn custom_csv_initial_data_roundtrips() {
    let tmp = tempfile::tempdir().unwrap();
    let grid = nisio::funcspace::Grid::new(-6.0, 6.0, 241).unwrap();
    let f = nisio::funcspace::gaussian_profile(grid, 0.5, 0.8, 1.0);
    let csv = tmp.path().join("f.csv");
    fs::write(&csv, f.to_csv_string()).unwrap();
    let body = MINIMAL.replace(
        r#""kind": "bump", "params": {"radius": 1}"#,
        &format!(
            r#""kind": "custom_csv", "params": {{"path": {:?}}}"#,
            csv.to_str().unwrap()
        ),
    );
    let cfg = write_config(tmp.path(), &body);
    let out = tmp.path().join("out");
    let outcome = run(
        Subcommand::Envelope,
        Some(&cfg),
        Some(&out),
        None,
        Scale::Small,
    );
    assert_eq!(outcome.exit_code, EXIT_PASS, "{}", outcome.message);
}

#[test]
fn failed_check_exits_one_and_keeps_the_report() {
    let tmp = tempfile::tempdir().unwrap();
    // a generator schedule this short cannot reduce the error tenfold
    let body = MINIMAL.replace(
        "\"seeds\": 11",
        r#""seeds": 11, "generator": {"k_steps": 1}"#,
    );
    let cfg = write_config(tmp.path(), &body);
    let out = tmp.path().join("out");
    let outcome = run(
        Subcommand::Generator,
        Some(&cfg),
        Some(&out),
        None,
        Scale::Small,
    );
    assert_eq!(outcome.exit_code, EXIT_CHECK_FAILED, "{}", outcome.message);
    assert!(out.join("report.json").exists());
    assert!(fs::read_to_string(out.join("generator.csv"))
        .unwrap()
        .starts_with("h,error_lp\n"));
}

#[test]
fn counterexample_and_comparisons_emit_their_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let body = MINIMAL.replace("gaussian_drift", "pure_shift").replace(
        r#""lower": -6, "upper": 6, "n_nodes": 241"#,
        r#""lower": -2, "upper": 2, "n_nodes": 16001"#,
    );
    let cfg = write_config(tmp.path(), &body);
    let out = tmp.path().join("scan");
    let outcome = run(
        Subcommand::Counterexample,
        Some(&cfg),
        Some(&out),
        None,
        Scale::Small,
    );
    assert_ne!(outcome.exit_code, EXIT_CONFIG, "{}", outcome.message);
    assert!(fs::read_to_string(out.join("scan.csv"))
        .unwrap()
        .starts_with("epsilon,norm_lp\n"));

    let cfg = write_config(tmp.path(), MINIMAL);
    let out = tmp.path().join("hjb");
    let outcome = run(
        Subcommand::CompareHjb,
        Some(&cfg),
        Some(&out),
        None,
        Scale::Small,
    );
    assert_eq!(outcome.exit_code, EXIT_PASS, "{}", outcome.message);
    let cmp: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("comparison.json")).unwrap()).unwrap();
    for key in ["abs_err", "rel_err", "max_err", "margin"] {
        assert!(cmp.get(key).is_some());
    }

    let body = MINIMAL
        .replace(
            r#""family": "gaussian_drift", "lambda_interval": [-1, 1]"#,
            r#""family": "compound_poisson", "lambda_list": [0, 1], "jump_atoms": [[1, 1]]"#,
        )
        .replace("\"t\": 0.25", "\"t\": 1");
    let cfg = write_config(tmp.path(), &body);
    let out = tmp.path().join("ode");
    let outcome = run(
        Subcommand::CompareOde,
        Some(&cfg),
        Some(&out),
        None,
        Scale::Small,
    );
    assert_eq!(outcome.exit_code, EXIT_PASS, "{}", outcome.message);
}

#[test]
fn verify_suite_passes_and_detects_the_mutant() {
    let good = verify_suite(Scale::Small, UpwindForm::Monotone);
    let failed: Vec<_> = good.checks.iter().filter(|c| !c.pass).collect();
    assert!(failed.is_empty(), "{failed:?}");
    assert!(good
        .checks
        .iter()
        .any(|c| c.name == "empty_family_list_rejected" && c.pass));

    let bad = verify_suite(Scale::Small, UpwindForm::SignFlipped);
    let failed: Vec<&str> = bad
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.as_str())
        .collect();
    assert!(failed.contains(&"hjb_monotone"), "{failed:?}");
}

#[test]
fn binary_follows_the_exit_code_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let bin = env!("CARGO_BIN_EXE_nisio");
    let ok = Command::new(bin)
        .args(["envelope", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("ok"))
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("envelope: PASS"));

    let cfg = write_config(tmp.path(), &MINIMAL.replace("gaussian_drift", "pure_shift"));
    let refused = Command::new(bin)
        .args(["envelope", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(refused.status.code(), Some(2));

    let missing = Command::new(bin).args(["generator"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("--config"));
}
