use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn ddfo(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddfo"))
        .args(args)
        .current_dir(root())
        .env("DDFO_OUT_DIR", out)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Every `ddfo` line of the README's usage block, with the exit code its
/// preceding comment promises.
fn readme_commands() -> Vec<(String, i32)> {
    let text = std::fs::read_to_string(root().join("README.md")).unwrap();
    let mut cmds = Vec::new();
    let mut expect = 0;
    for line in text.lines().map(str::trim) {
        if line.starts_with('#') {
            expect = if line.contains("(exits 1)") { 1 } else { 0 };
        } else if let Some(rest) = line.strip_prefix("ddfo ") {
            cmds.push((rest.to_string(), expect));
        }
    }
    cmds
}

#[test]
fn readme_walkthrough_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cmds = readme_commands();
    assert!(cmds.len() >= 8, "{cmds:?}");
    for (cmd, expect) in &cmds {
        let args: Vec<String> = cmd
            .split_whitespace()
            .map(|a| a.strip_prefix("out/").map_or(a.to_string(), |r| format!("{out}/{r}")))
            .collect();
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = ddfo(dir.path(), &refs);
        assert_eq!(code(&o), *expect, "ddfo {cmd}\n{}\n{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    }
    for f in ["cstr_deviation.model", "observer.toml", "trajectory.csv", "startup.svg", "bank/manifest.toml"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let events = std::fs::read_to_string(dir.path().join("bank_fixed/events.csv")).unwrap();
    let lines: Vec<&str> = events.lines().collect();
    assert_eq!(lines[0], "fault,detected,time,peak");
    assert!(lines[1].starts_with("f1,true,") && lines[2].starts_with("f2,true,"), "{events}");
    assert!(dir.path().join("bank_run/estimates.svg").exists());
}

#[test]
fn usage_and_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 4] = [
        &["design", "data/nope.model", "--eigenvalues", "-1"],
        &["design", "data/toy_plain.model", "--eigenvalues", "minus one"],
        &["design", "data/toy_plain.model"],
        &["frobnicate"],
    ];
    for args in cases {
        let o = ddfo(dir.path(), args);
        assert_eq!(code(&o), 2, "{args:?}");
        assert!(!o.stderr.is_empty());
    }
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn infeasible_design_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let o = ddfo(dir.path(), &["design", "data/toy_infeasible.model", "--eigenvalues", "-1"]);
    assert_eq!(code(&o), 1);
    assert!(!dir.path().join("observer.toml").exists());
}

#[test]
fn outputs_follow_the_output_dir_and_repeat_exactly() {
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let d = ddfo(dir.path(), &["design", "data/cstr_deviation.model", "--eigenvalues", "-0.02", "--decouple"]);
            assert_eq!(code(&d), 0, "{}", stdout(&d));
            let obs = dir.path().join("observer.toml");
            let s = ddfo(
                dir.path(),
                &["simulate", "data/cstr_deviation.model", obs.to_str().unwrap(), "--scenario", "data/fig1.scenario", "--every", "64"],
            );
            assert_eq!(code(&s), 0, "{}", stdout(&s));
            let doc = std::fs::read(&obs).unwrap();
            let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
            (doc, csv)
        })
        .collect();
    assert_eq!(runs[0].0, runs[1].0);
    assert_eq!(runs[0].1, runs[1].1);

    let mut rows = runs[0].1.lines();
    let header: Vec<&str> = rows.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "err").unwrap();
    let err: Vec<f64> = rows.map(|r| r.split(',').nth(col).unwrap().parse().unwrap()).collect();
    assert!((err[0] - 1.0).abs() < 1e-9);
    assert!(err.windows(2).all(|w| w[1].abs() < w[0].abs()));
    assert!(err.last().unwrap().abs() < 1e-3);
}

#[test]
fn verify_rejects_a_mismatched_plant() {
    let dir = tempfile::tempdir().unwrap();
    let d = ddfo(dir.path(), &["design", "data/cstr_deviation.model", "--eigenvalues", "-0.02", "--decouple"]);
    assert_eq!(code(&d), 0);
    let obs = dir.path().join("observer.toml");
    let ok = ddfo(dir.path(), &["verify", "data/cstr_deviation.model", obs.to_str().unwrap()]);
    assert_eq!(code(&ok), 0, "{}", stdout(&ok));

    let bad = ddfo(dir.path(), &["verify", "data/toy_plain.model", obs.to_str().unwrap()]);
    assert_ne!(code(&bad), 0);
}
