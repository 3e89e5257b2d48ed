use std::fs;
use std::io;
use std::path::Path;
use std::process::Command as Proc;

use reslab::diagnostics::Thresholds;
use reslab::{EtaLadder, TreeBoundary};
use reslab_cli::output::{file_digest, write_table, Cell, Table};
use reslab_cli::{parse_config, Command, RunManifest};

const BIN: &str = env!("CARGO_BIN_EXE_reslab");

const TREE: &str = r#"{
    "topology": {"kind": "tree", "k": 2, "depth": 6},
    "dist": {"kind": "uniform", "a": -0.5, "b": 0.5},
    "lambda": 0.2
}"#;

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn reslab(args: &[&str]) -> (i32, String) {
    let out = Proc::new(BIN).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn minimal_config_gets_defaults() {
    let cfg = parse_config(TREE).unwrap();
    cfg.check_for(Command::GammaScan).unwrap();
    assert_eq!(cfg.seed, 0);
    assert_eq!(cfg.ladder, EtaLadder::default());
    assert_eq!(cfg.thresholds, Thresholds::default());
    assert_eq!(cfg.replicates, 100);
    assert_eq!(cfg.boundary, TreeBoundary::FreeTree);
    assert_eq!(cfg.energies(Command::GammaScan).len(), 13);
    assert_eq!(cfg.energies(Command::Resonance).len(), 1);
}

#[test]
fn partial_ladder_keeps_other_defaults() {
    let cfg = parse_config(r#"{"ladder": {"eta0": 0.05}}"#).unwrap();
    assert_eq!(cfg.ladder.eta0, 0.05);
    assert_eq!(cfg.ladder.rungs, EtaLadder::default().rungs);
}

#[test]
fn negative_eta_names_the_field() {
    let e = parse_config(r#"{"ladder": {"eta0": -0.1}}"#).unwrap_err();
    assert_eq!(e.path, "ladder.eta0");
}

#[test]
fn unknown_key_gets_a_suggestion() {
    let e = parse_config(r#"{"lamda": 1.0}"#).unwrap_err();
    assert_eq!(e.path, "lamda");
    assert_eq!(e.suggestion.as_deref(), Some("lambda"));
    assert!(e.to_string().contains("did you mean `lambda`"));

    let e = parse_config(r#"{"decay": {"dmax": 9}}"#).unwrap_err();
    assert_eq!(e.path, "decay.dmax");
    assert_eq!(e.suggestion.as_deref(), Some("d_max"));
}

#[test]
fn contradictions_are_rejected() {
    let boxed = r#"{"topology": {"kind": "box", "dims": [4, 4]},
        "dist": {"kind": "uniform", "a": 0, "b": 1}, "lambda": 1}"#;
    let cfg = parse_config(boxed).unwrap();
    assert_eq!(cfg.check_for(Command::Lyapunov).unwrap_err().path, "topology");
    assert!(cfg.check_for(Command::Dos).is_ok());

    let both = r#"{"energies": [0.1], "energy_grid": {"lo": 0, "hi": 1, "n": 3}}"#;
    assert_eq!(parse_config(both).unwrap_err().path, "energy_grid");

    let named = r#"{"command": "dos"}"#;
    assert_eq!(parse_config(named).unwrap_err().path, "topology");

    let few = parse_config(&TREE.replace("\"lambda\": 0.2", "\"lambda\": 0.2, \"replicates\": 10")).unwrap();
    assert_eq!(few.check_for(Command::GammaScan).unwrap_err().path, "replicates");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"lamda": 1}"#);
    let (code, err) = reslab(&["dos", "--config", bad.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("lambda"), "{err}");

    let (code, _) = reslab(&["nonsense", "--config", bad.to_str().unwrap()]);
    assert_eq!(code, 1);

    let missing = dir.path().join("missing.json");
    let (code, _) = reslab(&["dos", "--config", missing.to_str().unwrap()]);
    assert_eq!(code, 3);
}

fn run_into(cfg: &Path, out: &Path, workers: &str, extra: &[&str]) -> i32 {
    let mut args = vec![
        "gamma-scan",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--workers",
        workers,
    ];
    args.extend_from_slice(extra);
    reslab(&args).0
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "g.json",
        &TREE.replace("\"lambda\": 0.2", "\"lambda\": 0.2, \"energy_grid\": {\"lo\": -1, \"hi\": 1, \"n\": 3}"),
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run_into(&cfg, &a, "1", &[]), 0);
    assert_eq!(run_into(&cfg, &b, "8", &[]), 0);
    for f in ["gamma-scan.csv", "gamma-scan.summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let ma: RunManifest = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    let mb: RunManifest = serde_json::from_slice(&fs::read(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(ma.outputs, mb.outputs);
    assert_eq!(ma.config_digest, mb.config_digest);
    assert_eq!((ma.workers, mb.workers), (1, 8));
    for o in &ma.outputs {
        assert_eq!(file_digest(&a.join(&o.file)).unwrap().0, o.sha256);
    }

    // A different seed changes the outputs.
    let c = dir.path().join("c");
    assert_eq!(run_into(&cfg, &c, "1", &["--seed", "7"]), 0);
    assert_ne!(fs::read(a.join("gamma-scan.csv")).unwrap(), fs::read(c.join("gamma-scan.csv")).unwrap());
}

#[test]
fn corrupted_g_gives_integrity_exit() {
    let dir = tempfile::tempdir().unwrap();
    let text = TREE.replace(
        "\"lambda\": 0.2",
        "\"lambda\": 0.2, \"radius\": 4, \"replicates\": 100, \"resonance\": {\"calibration_replicates\": 100}",
    );
    let cfg = write(dir.path(), "r.json", &text);
    let out = dir.path().join("out");
    let args = |extra: &'static [&'static str]| {
        let mut v = vec![
            "resonance".to_string(),
            "--config".into(),
            cfg.to_str().unwrap().into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ];
        v.extend(extra.iter().map(|s| s.to_string()));
        v
    };
    let run = |a: Vec<String>| Proc::new(BIN).args(a).output().unwrap().status.code().unwrap();
    assert_eq!(run(args(&[])), 0);
    fs::remove_dir_all(&out).unwrap();

    assert_eq!(run(args(&["--fault-g-scale", "0.1"])), 2);
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("resonance.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "integrity_failure");
    assert_eq!(summary["integrity_failures"][0]["check"], "g_bound");
    assert!(!out.join("resonance.csv").exists());
    let m: RunManifest = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.outputs.len(), 1);
}

#[test]
fn crash_between_rows_leaves_no_partial_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let mut t = Table::new(&["a", "b"]);
    for i in 0..10 {
        t.push(vec![Cell::I(i), Cell::F(i as f64)]);
    }
    let mut crash = |row: usize| if row == 5 { Err(io::Error::other("injected")) } else { Ok(()) };
    assert!(write_table(&path, &t, Some(&mut crash)).is_err());
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none());

    // An earlier complete file survives a crashed rewrite untouched.
    write_table(&path, &t, None).unwrap();
    let before = fs::read(&path).unwrap();
    let mut other = t.clone();
    other.push(vec![Cell::I(99), Cell::F(1.0)]);
    let mut crash = |row: usize| if row == 8 { Err(io::Error::other("injected")) } else { Ok(()) };
    assert!(write_table(&path, &other, Some(&mut crash)).is_err());
    assert_eq!(fs::read(&path).unwrap(), before);
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    assert_eq!(String::from_utf8(before).unwrap().lines().count(), 11);
}

#[test]
fn verify_all_on_defaults_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "v.json", "{}");
    let out = dir.path().join("out");
    let (code, err) = reslab(&["verify-all", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("verify-all.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["all_pass"], true);
    let records = summary["records"].as_array().unwrap();
    assert!(records.len() > 10);
    assert!(records.iter().all(|r| r["status"] == "pass"));
    for key in ["name", "status", "observed", "bound", "tolerance"] {
        assert!(records[0].get(key).is_some(), "{key}");
    }
}
