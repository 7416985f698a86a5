use ascsense::harness::ExperimentConfig;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ascsense"));
    c.arg("-q");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn default_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("config/default.toml")
}

/// A short-CPI configuration for fast end-to-end runs.
fn small_config(dir: &Path) -> PathBuf {
    let text = std::fs::read_to_string(default_config())
        .unwrap()
        .replace("snapshots = 100 ", "snapshots = 40 ")
        .replace("warmup_snapshots = 48", "warmup_snapshots = 16");
    let p = dir.join("small.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn shipped_config_is_the_library_default() {
    let cfg = ExperimentConfig::load(&default_config()).unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
}

#[test]
fn simulate_then_replay_reproduces_in_memory_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let (a, b) = (dir.path().join("sim"), dir.path().join("replay"));
    let o = run(&["simulate", "--config", s(&cfg), "--methods", "prop_sub,evlp,synchronized", "--snr", "25", "--out", s(&a)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["csi.bin", "reference.bin", "truth.csv", "offsets.csv", "config.toml"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let o = run(&[
        "replay",
        s(&a.join("csi.bin")),
        "--reference",
        s(&a.join("reference.bin")),
        "--config",
        s(&a.join("config.toml")),
        "--out",
        s(&b),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["estimates.csv", "cgs.csv", "tos.csv"] {
        let (x, y) = (std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs");
    }
    let est = std::fs::read_to_string(a.join("estimates.csv")).unwrap();
    assert_eq!(est.lines().filter(|l| l.starts_with("prop_sub,")).count(), 3);
    assert!(!est.contains("synchronized"));
}

#[test]
fn sweep_smoke_completes_quickly_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let args = ["sweep", "--methods", "prop_sub,synchronized", "--snr", "25", "--trials", "10", "--workers", "1"];
    let a = dir.path().join("a");
    let o = bin().args(args).args(["--out", s(&a)]).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(start.elapsed().as_secs_f64() < 60.0);
    let trials = std::fs::read_to_string(a.join("trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 1 + 20);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("prop_sub") && stdout.contains("synchronized"));

    // The logged configuration reproduces the run bit-exactly.
    let b = dir.path().join("b");
    let o = run(&["sweep", "--config", s(&a.join("config.toml")), "--workers", "2", "--out", s(&b)]);
    assert_eq!(code(&o), 0);
    for f in ["trials.csv", "targets.csv", "delay_error.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sweep_check_fails_when_criteria_lack_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = run(&["sweep", "--config", s(&cfg), "--methods", "ifft", "--snr", "25", "--trials", "1", "--check", "--out", s(dir.path())]);
    assert_eq!(code(&o), 1);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("FAIL 2 ")), "{stdout}");
}

#[test]
fn calibrate_writes_a_reference() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["calibrate", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("clock error: true"));
    let r = ascsense::residual::ReferenceStaticResponse::load(&dir.path().join("reference.bin")).unwrap();
    assert_eq!(r.subcarriers(), 32);
    assert!(r.clock_error().unwrap().abs() <= 50e-9 + 1e-9);
}

#[test]
fn failures_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["sweep", "--no-such-flag"])), 2);
    assert_eq!(code(&run(&[])), 2);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "trails = 3\n").unwrap();
    assert_eq!(code(&run(&["sweep", "--config", s(&bad), "--out", s(dir.path())])), 3);
    assert_eq!(code(&run(&["sweep", "--trials", "0", "--out", s(dir.path())])), 3);
    assert_eq!(code(&run(&["sweep", "--config", s(&dir.path().join("none.toml"))])), 4);

    let missing = dir.path().join("missing.bin");
    let o = run(&["replay", s(&missing), "--reference", s(&missing), "--out", s(dir.path())]);
    assert_eq!(code(&o), 4);

    let junk = dir.path().join("junk.bin");
    std::fs::write(&junk, b"not a dump").unwrap();
    let o = run(&["replay", s(&junk), "--reference", s(&junk), "--out", s(dir.path())]);
    assert_eq!(code(&o), 5);
}
