use std::path::Path;
use std::process::{Command, Output};

use aga_cli::config::ExperimentConfig;

fn aga(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aga"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn write_config(dir: &Path) -> String {
    let text = r#"
out_dir = "run"

[suite]
num_track_videos = 2
num_swap_videos = 2
seed = 7
frames = 12
"#;
    let path = dir.join("exp.toml");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn config_roundtrips_through_toml() {
    let cfg = ExperimentConfig::default();
    let back = ExperimentConfig::from_toml(&cfg.to_toml(), "inline").unwrap();
    assert_eq!(back.to_toml(), cfg.to_toml());
}

#[test]
fn unknown_config_key_is_rejected() {
    let err = ExperimentConfig::from_toml("bogus = 1", "inline").unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn full_run_through_binary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    for cmd in ["generate", "track", "evaluate"] {
        let out = aga(&[cmd, "--config", &cfg, "--variant", "full,no-app"], dir.path());
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let report = dir.path().join("run/report");
    for f in ["report.json", "summary.csv", "long.csv"] {
        assert!(report.join(f).is_file(), "{f} missing");
    }
    let summary = std::fs::read_to_string(report.join("summary.csv")).unwrap();
    assert!(summary.starts_with("variant,kind,videos,"));
    assert_eq!(summary.lines().count(), 5);
}

#[test]
fn exit_codes_by_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());

    let out = aga(&["track", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[io]"));

    let out = aga(&["generate", "--config", &cfg, "--variant", "nope"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    let out = aga(&["generate", "--config", "missing.toml"], dir.path());
    assert_ne!(out.status.code(), Some(0));

    assert!(aga(&["generate", "--config", &cfg], dir.path()).status.success());
    let video = dir.path().join("run/dataset/videos/track-0000.jsonl");
    let text = std::fs::read_to_string(&video).unwrap();
    std::fs::write(&video, &text[..text.len() / 2]).unwrap();
    let out = aga(&["track", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}
