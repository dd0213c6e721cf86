use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn zonecast(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zonecast"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn sweep_writes_csv_with_expected_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = zonecast(
        &[
            "sweep", "--topology", "torus", "--n", "8", "--order", "1,explorer", "--byz", "0,2",
            "--trials", "10", "--seed", "5", "--out", "p.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("p.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "topology,N,W,n_B,trials,p_exists,mean_reliable_frac,p_hat,ci95,seed");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("torus,8,1,0,10,1.000000,1.000000,1.000000,"));
    assert!(lines[3].starts_with("torus,8,explorer,0,10,NA,NA,"));
    assert!(lines.iter().skip(1).all(|l| l.ends_with(",5")));
}

#[test]
fn sweep_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        [
            "sweep", "--topology", "grid", "--n", "10", "--order", "2", "--byz", "3..=6:3", "--trials", "12",
            "--seed", "9", "--out", out,
        ]
    };
    assert!(zonecast(&args("a.csv"), dir.path()).status.success());
    assert!(zonecast(&args("b.csv"), dir.path()).status.success());
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    let b = fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "topology = \"torus\"\nn = 6\norder = [1]\nbyz = [0, 1]\ntrials = 50\nout = \"cfg.csv\"\n",
    )
    .unwrap();
    let o = zonecast(&["sweep", "--config", "run.toml", "--trials", "4"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("cfg.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().nth(1).unwrap().starts_with("torus,6,1,0,4,"));
}

#[test]
fn trace_files_are_ndjson() {
    let dir = tempfile::tempdir().unwrap();
    let o = zonecast(
        &[
            "sweep", "--topology", "torus", "--n", "6", "--order", "1", "--byz", "1", "--trials", "2", "--out",
            "t.csv", "--trace",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let trace = fs::read_to_string(dir.path().join("t.csv.torus-6-1-1.trace.jsonl")).unwrap();
    assert!(trace.lines().count() > 100);
    assert!(trace.lines().all(|l| l.starts_with('{') && l.contains("\"kind\"")));
}

#[test]
fn debug_prints_map_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("byz.txt"), "# one node\n4,4\n").unwrap();
    let o = zonecast(
        &["debug", "--topology", "torus", "--n", "7", "--order", "1", "--placement", "byz.txt"],
        dir.path(),
    );
    assert!(o.status.success());
    let text = stdout(&o);
    let map: Vec<&str> = text.lines().take(7).collect();
    assert_eq!(map[3], "RRRCRRR");
    assert!(text.contains("reliable 48 of 48 correct nodes"));
}

#[test]
fn debug_trace_requires_out() {
    let dir = tempfile::tempdir().unwrap();
    let o = zonecast(&["debug", "--topology", "torus", "--n", "5", "--order", "1", "--trace"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn dump_lists_adjacency() {
    let dir = tempfile::tempdir().unwrap();
    let o = zonecast(&["dump", "--topology", "torus", "--n", "4"], dir.path());
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 16);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(zonecast(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(zonecast(&["frobnicate"], dir.path()).status.code(), Some(1));
    // missing required settings
    assert_eq!(zonecast(&["sweep", "--topology", "torus"], dir.path()).status.code(), Some(1));
    // malformed placement line
    fs::write(dir.path().join("bad.txt"), "1,1\nnot a coord\n").unwrap();
    let o = zonecast(
        &["debug", "--topology", "torus", "--n", "5", "--order", "1", "--placement", "bad.txt"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.txt"));
    // missing placement file and unwritable output are I/O failures
    let o = zonecast(
        &["debug", "--topology", "torus", "--n", "5", "--order", "1", "--placement", "nope.txt"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let o = zonecast(
        &[
            "sweep", "--topology", "torus", "--n", "5", "--order", "1", "--byz", "1", "--trials", "2", "--out",
            "missing/p.csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("missing").exists());
}
