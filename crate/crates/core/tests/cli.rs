use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qst(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qst-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn kv(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in output:\n{text}"))
        .to_string()
}

fn data_file(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(name).display().to_string()
}

#[test]
fn active_run_matches_golden_csv() {
    let o = qst(&["run", "--mode", "active", "--trials", "1000", "--phi-steps", "25", "--seed", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let golden = fs::read_to_string(data_file("tests/golden/run_active_seed7.csv")).unwrap();
    assert_eq!(stdout(&o), golden);
}

#[test]
fn missing_bench_is_an_input_error() {
    let o = qst(&["run", "--bench", "missing.bench"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("UndeclaredFile"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(qst(&["run", "--mode", "bogus"]).status.code(), Some(2));
    assert_eq!(qst(&["run", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(qst(&["run", "--qe", "2"]).status.code(), Some(2));
    assert_eq!(qst(&["run", "--trials", "-4"]).status.code(), Some(2));
    assert_eq!(qst(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for w in ["1", "4"] {
        let out = dir.path().join(format!("w{w}"));
        let o = qst(&[
            "run", "--mode", "passive", "--trials", "5000", "--phi-steps", "9", "--seed", "3", "--qe", "0.45",
            "--dephasing-sigma", "0.4", "--workers", w, "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        csvs.push(fs::read(out.join("fringe.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn manifest_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let bench = data_file("data/figure1.bench");
    let o = qst(&[
        "run", "--bench", &bench, "--mode", "active-inhibited", "--trials", "3000", "--phi-steps", "7",
        "--seed", "11", "--qe", "0.45", "--jitter-ns", "1.5", "--delay-m", "7.6", "--out",
        first.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = first.join("run.manifest");
    let text = fs::read_to_string(&manifest).unwrap();
    assert!(text.contains("seed=11") && text.contains("mode=active-inhibited"));
    let o = qst(&["run", "--manifest", manifest.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(first.join("fringe.csv")).unwrap(),
        fs::read(second.join("fringe.csv")).unwrap()
    );
    assert_eq!(text, fs::read_to_string(second.join("run.manifest")).unwrap());
}

#[test]
fn manifest_and_config_flags_conflict() {
    assert_eq!(qst(&["run", "--manifest", "x", "--seed", "1"]).status.code(), Some(2));
}

#[test]
fn event_log_export() {
    let dir = tempfile::tempdir().unwrap();
    let o = qst(&[
        "run", "--trials", "50", "--phi-steps", "2", "--events", "20", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let events = fs::read_to_string(dir.path().join("events.csv")).unwrap();
    let mut lines = events.lines();
    assert_eq!(lines.next(), Some("timestamp_ns,event,detail"));
    let rows: Vec<&str> = lines.collect();
    assert!(rows.iter().any(|r| r.contains("EopApplied")));
    assert!(rows.iter().filter(|r| r.contains("PhotonEmitted")).count() == 40);
}

#[test]
fn analyze_reports_every_pair() {
    let dir = tempfile::tempdir().unwrap();
    let o = qst(&["run", "--mode", "passive", "--trials", "4000", "--seed", "2", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let csv = dir.path().join("fringe.csv");
    let o = qst(&["analyze", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for pair in ["D1-D1*", "D1-D2*", "D2-D1*", "D2-D2*"] {
        let v: f64 = kv(&text, &format!("{pair}.visibility")).parse().unwrap();
        assert!(v > 0.95, "{pair} {v}");
        assert_eq!(kv(&text, &format!("{pair}.above_classical")), "true");
    }
}

#[test]
fn compare_run_with_itself() {
    let dir = tempfile::tempdir().unwrap();
    qst(&["run", "--trials", "2000", "--seed", "5", "--out", dir.path().to_str().unwrap()]);
    let csv = dir.path().join("fringe.csv");
    let c = csv.to_str().unwrap();
    let o = qst(&["compare", c, c]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(kv(&text, "delta_phase"), "0");
    assert_eq!(kv(&text, "delta_visibility"), "0");
    assert_eq!(kv(&text, "in_phase"), "true");
}

#[test]
fn compare_rejects_misaligned_grids() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    qst(&["run", "--trials", "500", "--phi-steps", "9", "--out", a.to_str().unwrap()]);
    qst(&["run", "--trials", "500", "--phi-steps", "11", "--out", b.to_str().unwrap()]);
    let o = qst(&[
        "compare",
        a.join("fringe.csv").to_str().unwrap(),
        b.join("fringe.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("GridMismatch"));
}

#[test]
fn validate_bench_reports_diagnostics() {
    let o = qst(&["validate-bench", &data_file("data/figure1.bench")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("ok"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.bench");
    fs::write(&bad, "path a\nbs a b theta=0.5\nfrobnicator a\n").unwrap();
    let o = qst(&["validate-bench", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("UndeclaredPath") && err.contains("UnknownElement"), "{err}");
    assert!(err.contains("2:"), "{err}");

    let o = qst(&["validate-bench", "nowhere.bench"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn noiseless_reproduction_reaches_unit_fidelity() {
    let o = qst(&[
        "reproduce-paper", "--trials", "20000", "--phi-steps", "13", "--dephasing-sigma", "0",
        "--base-visibility", "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let f: f64 = kv(&text, "f_active").parse().unwrap();
    let fp: f64 = kv(&text, "f_passive").parse().unwrap();
    assert!(f > 0.99 && fp > 0.99, "{f} {fp}");
}
