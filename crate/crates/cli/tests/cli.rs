use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use phasegi_cli::report::Report;

fn presets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets")
}

fn phasegi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasegi")).args(args).output().expect("spawn phasegi")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, edit: impl Fn(String) -> String) -> PathBuf {
    let text = std::fs::read_to_string(presets().join("paper_fig2_analog.toml")).unwrap();
    let path = dir.join("exp.toml");
    std::fs::write(&path, edit(text)).unwrap();
    path
}

#[test]
fn invalid_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |t| t.replace("r_s_m = 5.0", "r_s_m = -1.0"));
    let out = phasegi(&["simulate", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let cfg = write_config(dir.path(), |t| t.replace("kind = \"lamella\"", "kind = \"cube\""));
    let out = phasegi(&["phantom", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_and_bad_arguments_exit_with_2() {
    assert_eq!(phasegi(&["psf"]).status.code(), Some(2));
    assert_eq!(phasegi(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn strict_turns_near_field_violation_into_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |t| t.replace("r_s_m = 5.0", "r_s_m = 50.0"));
    let out_dir = dir.path().join("run");
    let lax = phasegi(&["simulate", "--config", s(&cfg), "--out", s(&out_dir)]);
    assert!(lax.status.success());
    assert!(String::from_utf8_lossy(&lax.stderr).contains("near-field"));
    let report = Report::parse(&std::fs::read_to_string(out_dir.join("simulate_report.txt")).unwrap());
    assert_eq!(report.get("near_field"), Some("violated"));

    let strict_dir = dir.path().join("strict");
    let strict = phasegi(&["simulate", "--strict", "--config", s(&cfg), "--out", s(&strict_dir)]);
    assert_eq!(strict.status.code(), Some(3));
    assert!(!strict_dir.join("simulate_report.txt").exists());
}

#[test]
fn simulate_reconstruct_compare_profile() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let cfg = presets().join("paper_fig2_analog.toml");
    assert!(phasegi(&["simulate", "--config", s(&cfg), "--out", s(&run)]).status.success());
    // Reconstruct picks up the config saved by simulate.
    let rec = phasegi(&["reconstruct", "--out", s(&run)]);
    assert!(rec.status.success(), "{}", String::from_utf8_lossy(&rec.stderr));
    for f in ["ratio.gir", "valid.gir", "oracle.gir", "ghost_flat.gir", "refs/index.csv", "buckets_t06.gib"] {
        assert!(run.join(f).exists(), "{f}");
    }

    let cmp = dir.path().join("cmp");
    let out = phasegi(&[
        "compare",
        "--direct",
        s(&run.join("oracle.gir")),
        "--ghost",
        s(&run.join("ratio.gir")),
        "--valid",
        s(&run.join("valid.gir")),
        "--out",
        s(&cmp),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = Report::parse(&String::from_utf8(out.stdout).unwrap());
    let rms: f64 = report.get("rms").unwrap().parse().unwrap();
    assert!(rms < 1e-6, "rms {rms}");
    assert!(cmp.join("profile_ghost.csv").exists());

    let csv = dir.path().join("p/row.csv");
    let out = phasegi(&["profile", "--raster", s(&run.join("ratio.gir")), "--index", "7", "--out", s(&csv)]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("position_m,value"));
    assert_eq!(text.lines().count(), 351);
}

#[test]
fn compare_rejects_mismatched_grids() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(phasegi(&["phantom", "--config", s(&presets().join("paper_fig1e.toml")), "--out", s(&a)])
        .status
        .success());
    assert!(phasegi(&["phantom", "--config", s(&presets().join("paper_fig2_analog.toml")), "--out", s(&b)])
        .status
        .success());
    let out = phasegi(&[
        "compare",
        "--direct",
        s(&a.join("thickness.gir")),
        "--ghost",
        s(&b.join("thickness.gir")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_override_changes_the_phantom() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = presets().join("paper_fig2_analog.toml");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(phasegi(&["phantom", "--config", s(&cfg), "--out", s(&a), "--seed", "1"]).status.success());
    assert!(phasegi(&["phantom", "--config", s(&cfg), "--out", s(&b), "--seed", "2"]).status.success());
    let read = |d: &Path| std::fs::read(d.join("thickness.gir")).unwrap();
    assert_ne!(read(&a), read(&b));
}
