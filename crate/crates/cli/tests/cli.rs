use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fdconv::harness::{load_checkpoint, EpochMetrics, ModelKind};

const SMALL: &str = "\
k = 3
c_in = 1
c_out = 4
n = 4
bands = 0, 1/8, 1/2
steps = 12
batch = 8
seed = 3
dataset.size = 40
dataset.s = 16
";

fn fdconv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdconv")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path) -> String {
    let p = dir.join("small.conf");
    fs::write(&p, SMALL).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn check_suite_passes() {
    let o = fdconv(&["check", "--suite", "fdw"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("PASS fdw/")));
    assert!(!text.contains("FAIL"));
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let o = fdconv(&["check", "--suite", "nonsense"]);
    assert!(!o.status.success());
}

#[test]
fn train_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("run");
    let o = fdconv(&["train", "--config", &cfg, "--out", out.to_str().unwrap(), "--baseline"]);
    assert!(
        o.status.success(),
        "{}\n{}",
        stdout(&o),
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(stdout(&o).contains("held-out accuracy"));

    for kind in [ModelKind::FdConv, ModelKind::Static] {
        let ckpt = load_checkpoint(&out.join(format!("{}.fdcv", kind.as_str()))).unwrap();
        assert_eq!(ckpt.kind, kind);
        assert_eq!(ckpt.step, 12);
        let log = fs::read_to_string(out.join(format!("{}_metrics.log", kind.as_str()))).unwrap();
        let parsed: Vec<EpochMetrics> = log.lines().map(|l| EpochMetrics::parse(l).unwrap()).collect();
        assert_eq!(parsed, ckpt.log);
        assert_eq!(
            parsed.iter().all(|m| m.max_similarity.is_some()),
            kind == ModelKind::FdConv
        );
    }

    let report = dir.path().join("report");
    let o = fdconv(&[
        "analyze",
        "--checkpoint",
        out.join("fdconv.fdcv").to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
        "--pad",
        "16",
    ]);
    assert!(
        o.status.success(),
        "{}\n{}",
        stdout(&o),
        String::from_utf8_lossy(&o.stderr)
    );
    let text = stdout(&o);
    assert!(
        text.contains("PASS orthogonality") && text.contains("PASS native disjointness"),
        "{text}"
    );
    for i in 0..4 {
        assert!(report.join(format!("spectrum_{i}.csv")).exists());
    }
    assert!(report.join("similarity.csv").exists());
    assert!(report.join("modulation_class1_band1.csv").exists());
}

#[test]
fn bench_prints_timings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let o = fdconv(&["bench", "--config", &cfg, "--repeats", "2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("direct") && text.contains("fourier"), "{text}");
}

#[test]
fn bad_inputs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.conf");
    fs::write(&bad, "k = 3\nwidth = 9\n").unwrap();
    let o = fdconv(&[
        "train",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("width"));

    let junk = dir.path().join("junk.fdcv");
    fs::write(&junk, b"not a checkpoint").unwrap();
    let o = fdconv(&[
        "analyze",
        "--checkpoint",
        junk.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
