use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use binc::model::{render_config, NodeId, SimParams};
use binc::wire::{encode, Message, SeqNum, TcMsg};

fn binc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_binc")).args(args).env("BINC_THREADS", "0").output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write_config(dir: &Path, p: &SimParams) -> String {
    let path = dir.join("params.cfg");
    fs::write(&path, render_config(p)).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn validate_accepts_the_reference_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SimParams::default());
    let o = binc(&["validate", "--config", &cfg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn validate_rejects_a_slow_beacon() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SimParams { t_chello: 5.0, ..Default::default() });
    let o = binc(&["validate", "--config", &cfg]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("C-HELLO"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(code(&binc(&["run", "--no-such-flag"])), 1);
    assert_eq!(code(&binc(&["frobnicate"])), 1);
}

#[test]
fn help_exits_cleanly() {
    let o = binc(&["--help"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("sweep"));
}

fn run_into(out: &Path) -> Output {
    binc(&["run", "--scenario", "static", "--n", "30", "--seed", "4", "--duration", "30", "--out", out.to_str().unwrap()])
}

#[test]
fn run_writes_all_outputs_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run_into(&a)), 0);
    assert_eq!(code(&run_into(&b)), 0);
    for f in ["metrics.csv", "events.csv", "summary.json", "snapshots.jsonl"] {
        let (x, y) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        assert_eq!(x, y, "{f} differs");
    }
    let metrics = fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 61);
    assert!(metrics.starts_with("tick,time_s,cluster_count"));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_uavs"], 30);
    assert_eq!(summary["ticks"], 60);
}

#[test]
fn thread_count_does_not_change_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = |name: &str, threads: &str| {
        let p = dir.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_binc"))
            .args(["run", "--n", "40", "--seed", "2", "--duration", "40", "--initial-speed", "10", "--out"])
            .arg(&p)
            .env("BINC_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
        fs::read(p.join("metrics.csv")).unwrap()
    };
    assert_eq!(out("serial", "0"), out("eight", "8"));
}

#[test]
fn sweep_writes_one_directory_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = binc(&[
        "sweep",
        "--scenario",
        "static",
        "--n",
        "10,20,30",
        "--seeds",
        "3",
        "--duration",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut cells: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    cells.sort();
    let mut want: Vec<String> = [10, 20, 30]
        .iter()
        .flat_map(|n| (1..=3).map(move |s| format!("n{n}_seed{s}")))
        .collect();
    want.sort();
    assert_eq!(cells, want);
    assert!(out.join("n20_seed2").join("summary.json").exists());
}

#[test]
fn bad_duration_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = binc(&["run", "--n", "5", "--duration", "1.3", "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let o = binc(&["run", "--n", "5", "--duration", "5", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}

#[test]
fn missing_config_file_is_an_io_error() {
    assert_eq!(code(&binc(&["validate", "--config", "/nonexistent/params.cfg"])), 3);
}

#[test]
fn dump_packet_annotates_a_tc() {
    let tc = Message::Tc(TcMsg { seq: SeqNum(7), origin: NodeId(3), advertised: vec![NodeId(5), NodeId(6)] });
    let hex = hex::encode(encode(&tc).unwrap());
    let o = binc(&["dump-packet", "--hex", &hex]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("TC") || text.contains("Tc"), "{text}");
    assert!(text.contains("origin"), "{text}");
}

#[test]
fn dump_packet_rejects_garbage() {
    assert_ne!(code(&binc(&["dump-packet", "--hex", "zz"])), 0);
    let tc = Message::Tc(TcMsg { seq: SeqNum(7), origin: NodeId(3), advertised: vec![NodeId(5)] });
    let bytes = encode(&tc).unwrap();
    assert_ne!(code(&binc(&["dump-packet", "--hex", &hex::encode(&bytes[..bytes.len() - 1])])), 0);
}
