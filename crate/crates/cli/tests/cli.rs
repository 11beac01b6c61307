use std::path::Path;
use std::process::Command;

use iiblab_cli::config::RunConfig;
use iiblab_cli::run::{recompute_diagnostics, snapshot_path, Session, DIAGNOSTICS_FILE, SNAPSHOT_DIR, SUMMARY_FILE};
use iiblab_cli::snapshot::Snapshot;
use iiblab_cli::ExitStatus;
use iiblab_core::diagnostics::DiagnosticsRecord;
use iiblab_core::error::LabError;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_iiblab");

fn workspace_root() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR")).parent().unwrap().parent().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn iiblab(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(BIN).args(args).output().expect("binary runs");
    (
        out.status.code().expect("exit code"),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// Data lines of a diagnostics stream, header dropped.
fn records(out: &Path) -> Vec<Value> {
    let text = std::fs::read_to_string(out.join(DIAGNOSTICS_FILE)).unwrap();
    let mut lines = text.lines();
    let header: Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert!(header.get("header").is_some());
    lines.map(|l| serde_json::from_str(l).unwrap()).collect()
}

const BALANCED: &str = r#"{
  "geometry": { "n": 3, "resolution": 16 },
  "initialMetric": { "family": "balanced", "f": [{ "k": [1, 1], "sin": 0.15 }, { "k": [1, -1], "sin": 0.15 }] },
  "referenceMetric": { "family": "kahler-diagonal", "logA": [{ "k": [1, 0], "sin": 0.2 }] },
  "control": { "dt": "cfl", "tEnd": 0.01, "cadence": 5 },
  "testFunction": { "epsilon": 0.1, "A": 1.0 }
}"#;

#[test]
fn flat_run_is_stationary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = workspace_root().join("configs/flat.json");
    let (code, stdout, _) = iiblab(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}");
    let recs = records(&out);
    assert!(recs.len() >= 2);
    for r in &recs {
        assert!((r["normMax"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        assert!((r["hEigenvalueMin"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        assert!(r["tauMax"].as_f64().unwrap() < 1e-12);
    }
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out.join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(summary["exitCode"], 0);
    assert_eq!(summary["stop"]["kind"], "completed");
}

#[test]
fn balanced_run_dilaton_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let s = Session::new(RunConfig::from_json(BALANCED).unwrap()).unwrap();
    let summary = s.run(dir.path()).unwrap();
    assert_eq!(summary.status, ExitStatus::Ok);
    let recs = records(dir.path());
    let norms: Vec<f64> = recs.iter().map(|r| r["normMax"].as_f64().unwrap()).collect();
    assert!(norms.windows(2).all(|w| w[1] <= w[0] + 1e-8), "{norms:?}");
    assert!(norms.last() < norms.first());
    for r in &recs {
        assert!(r["detChainMargin"].as_f64().unwrap() >= -1e-8);
        assert!(r["balancedDefect"].as_f64().unwrap() < 1e-10);
        // S vanishes identically against the run's own initial metric
        assert_eq!(r["testFunctionMax"].as_f64().is_some(), r["step"] != 0);
    }
}

#[test]
fn stream_lines_match_the_record_schema() {
    let dir = tempfile::tempdir().unwrap();
    Session::new(RunConfig::from_json(BALANCED).unwrap()).unwrap().run(dir.path()).unwrap();
    let schema = serde_json::to_value(schemars::schema_for!(DiagnosticsRecord)).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let recs = records(dir.path());
    for r in &recs {
        let errors: Vec<String> = validator.iter_errors(r).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{errors:?}");
        serde_json::from_value::<DiagnosticsRecord>(r.clone()).unwrap();
    }
    let ts: Vec<f64> = recs.iter().map(|r| r["t"].as_f64().unwrap()).collect();
    assert!(ts.windows(2).all(|w| w[1] > w[0]));
    assert!((ts.last().unwrap() - 0.01).abs() < 1e-15);
}

#[test]
fn degenerate_dimension_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "n2.json",
        r#"{"geometry":{"n":2},"initialMetric":{"family":"flat"},"control":{"dt":1e-3,"tEnd":1e-2}}"#,
    );
    let (code, _, stderr) = iiblab(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code, 1);
    let err: Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(err["error"]["kind"], "config");
    assert!(err["error"]["message"].as_str().unwrap().contains("degenerate"));
}

#[test]
fn unknown_keys_are_rejected() {
    let text = r#"{"geometry":{"n":3},"initialMetric":{"family":"flat"},"control":{"dt":1e-3,"tEnd":1e-2},"bogus":1}"#;
    let err = RunConfig::from_json(text).unwrap_err();
    assert_eq!(err.status(), ExitStatus::ConfigError);
    assert!(err.to_string().contains("bogus"));
    let nested = r#"{"geometry":{"n":3,"res":8},"initialMetric":{"family":"flat"},"control":{"dt":1e-3,"tEnd":1e-2}}"#;
    assert!(RunConfig::from_json(nested).is_err());
}

#[test]
fn verify_flat_and_random() {
    let cfg = workspace_root().join("configs/random-verify.json");
    let (code, stdout, stderr) = iiblab(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 0, "{stderr}");
    let reports: Vec<Value> = serde_json::from_str(&stdout).unwrap();
    assert!(reports.iter().all(|r| r["pass"] == true));

    let flat = r#"{"geometry":{"n":3,"resolution":8},"initialMetric":{"family":"flat"},"control":{"dt":1e-3,"tEnd":1e-2}}"#;
    let (reports, status) = Session::new(RunConfig::from_json(flat).unwrap()).unwrap().verify(None).unwrap();
    assert_eq!(status, ExitStatus::Ok);
    assert!(!reports.is_empty());
}

#[test]
fn zero_tolerance_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "tight.json",
        r#"{"geometry":{"n":3,"resolution":16},"initialMetric":{"family":"random","seed":42},
            "control":{"dt":1e-3,"tEnd":1e-2},"verifySuite":[{"name":"bianchi","tolerance":0}]}"#,
    );
    let (code, _, _) = iiblab(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 4);
}

#[test]
fn snapshots_round_trip_bit_exactly() {
    let s = Session::new(RunConfig::from_json(BALANCED).unwrap()).unwrap();
    let snap = Snapshot::of_state(&s.initial, 7);
    let mut bytes = Vec::new();
    snap.write_to(&mut bytes).unwrap();
    let back = Snapshot::read_from(bytes.as_slice()).unwrap();
    assert_eq!(back.header, snap.header);
    for (a, b) in back.arrays.iter().zip(&snap.arrays) {
        for (ca, cb) in a.components().iter().zip(b.components()) {
            for (x, y) in ca.iter().zip(cb) {
                assert_eq!(x.re.to_bits(), y.re.to_bits());
                assert_eq!(x.im.to_bits(), y.im.to_bits());
            }
        }
    }
    let mut again = Vec::new();
    back.write_to(&mut again).unwrap();
    assert_eq!(again, bytes);
    let state = back.state().unwrap();
    assert_eq!(state.t.to_bits(), s.initial.t.to_bits());
    assert_eq!(state.formulation, s.initial.formulation);
}

#[test]
fn corrupt_snapshots_report_an_offset() {
    let s = Session::new(RunConfig::from_json(BALANCED).unwrap()).unwrap();
    let mut bytes = Vec::new();
    Snapshot::of_state(&s.initial, 0).write_to(&mut bytes).unwrap();
    let header_len = bytes.iter().position(|&b| b == b'\n').unwrap() as u64 + 1;

    let truncated = &bytes[..bytes.len() - 5];
    match Snapshot::read_from(truncated) {
        Err(LabError::Snapshot { offset, .. }) => assert!(offset >= header_len, "{offset}"),
        other => panic!("expected a snapshot error, got {other:?}"),
    }

    let mut broken = bytes.clone();
    broken[10] = b'}';
    match Snapshot::read_from(broken.as_slice()) {
        Err(LabError::Snapshot { offset, message }) => {
            assert!(offset < header_len);
            assert!(message.contains("header"), "{message}");
        }
        other => panic!("expected a snapshot error, got {other:?}"),
    }

    let no_newline: Vec<u8> = bytes[..header_len as usize - 1].to_vec();
    assert!(matches!(Snapshot::read_from(no_newline.as_slice()), Err(LabError::Snapshot { .. })));
}

#[test]
fn singularity_keeps_the_last_positive_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"geometry":{"n":3,"resolution":8},"initialMetric":{"family":"flat"},"formulation":"omega",
        "source":{"kind":"psi-constant","matrix":[[[50,0],[0,0],[0,0]],[[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0]]]},
        "control":{"dt":1e-3,"tEnd":1.0,"cadence":1,"positivityFloor":0.05}}"#;
    let summary = Session::new(RunConfig::from_json(cfg).unwrap()).unwrap().run(dir.path()).unwrap();
    assert_eq!(summary.status, ExitStatus::Singularity);
    assert_eq!(summary.exit_code, 2);
    assert!(summary.t < 1.0);
    let last = Snapshot::load(&snapshot_path(&dir.path().join(SNAPSHOT_DIR), summary.steps_taken)).unwrap();
    let state = last.state().unwrap();
    assert!(state.metric.min_eigenvalues().iter().all(|&e| e > 0.05));
    assert!(!snapshot_path(&dir.path().join(SNAPSHOT_DIR), summary.steps_taken + 1).exists());
}

#[test]
fn diagnostics_recompute_from_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_json(BALANCED).unwrap();
    Session::new(cfg.clone()).unwrap().run(dir.path()).unwrap();
    let snaps = dir.path().join(SNAPSHOT_DIR);
    let initial = Snapshot::load(&snapshot_path(&snaps, 0)).unwrap();
    let recs = records(dir.path());
    for r in &recs {
        let step = r["step"].as_u64().unwrap() as usize;
        let stored: DiagnosticsRecord = serde_json::from_value(r.clone()).unwrap();
        let again = recompute_diagnostics(&initial, &Snapshot::load(&snapshot_path(&snaps, step)).unwrap(), &cfg).unwrap();
        let (a, b) = (serde_json::to_value(&stored).unwrap(), serde_json::to_value(&again).unwrap());
        for (k, v) in a.as_object().unwrap() {
            let (x, y) = (v.as_f64().unwrap(), b[k].as_f64().unwrap());
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{k}: {x} vs {y}");
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let cfg = r#"{"geometry":{"n":3,"resolution":8},"initialMetric":{"family":"random","seed":5,"amplitude":0.2},
        "control":{"dt":1e-4,"tEnd":2e-3,"cadence":5},"output":{"snapshots":"none"}}"#;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        Session::new(RunConfig::from_json(cfg).unwrap()).unwrap().run(d.path()).unwrap();
    }
    let (ra, rb) = (records(a.path()), records(b.path()));
    assert_eq!(ra.len(), rb.len());
    for (x, y) in ra.iter().zip(&rb) {
        for (k, v) in x.as_object().unwrap() {
            let (p, q) = (v.as_f64().unwrap(), y[k].as_f64().unwrap());
            assert!((p - q).abs() <= 1e-12 * p.abs().max(1.0), "{k}");
        }
    }
    assert!(!a.path().join(SNAPSHOT_DIR).exists());
}

#[test]
fn schema_file_is_current() {
    let (code, stdout, _) = iiblab(&["schema"]);
    assert_eq!(code, 0);
    let printed: Value = serde_json::from_str(&stdout).unwrap();
    let stored: Value =
        serde_json::from_str(&std::fs::read_to_string(workspace_root().join("schemas/config.schema.json")).unwrap()).unwrap();
    assert_eq!(printed, stored);
}

#[test]
fn example_configs_satisfy_the_schema() {
    let schema = serde_json::to_value(iiblab_cli::config::schema()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    for entry in std::fs::read_dir(workspace_root().join("configs")).unwrap() {
        let path = entry.unwrap().path();
        let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert!(validator.is_valid(&doc), "{}", path.display());
        RunConfig::load(&path).unwrap();
    }
}

#[test]
fn snapshot_info_prints_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let s = Session::new(RunConfig::from_json(BALANCED).unwrap()).unwrap();
    let p = dir.path().join("x.snap");
    Snapshot::of_state(&s.initial, 3).save(&p).unwrap();
    let (code, stdout, _) = iiblab(&["snapshot-info", p.to_str().unwrap()]);
    assert_eq!(code, 0);
    let h: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(h["format"], "iiblab-snapshot");
    assert_eq!(h["step"], 3);
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let out = Command::new(BIN).arg("schema").env("IIBLAB_THREADS", "zero").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
