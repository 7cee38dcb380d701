//! The `panelwright` binary: exit codes and end-to-end runs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn panelwright(ws: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_panelwright"))
        .arg("-w")
        .arg(ws)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn missing_script_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = panelwright(dir.path(), &["--mock", "parse", "no_such_script.fountain"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn strict_mode_rejects_stray_transitions() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("bad.fountain");
    std::fs::write(&script, "INT. HALL - DAY\n\nCUT TO BLACK\n\nANA\nHello.\n").unwrap();
    let s = script.to_str().unwrap();
    let out = panelwright(dir.path(), &["--mock", "parse", s, "--strict"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(code(&panelwright(dir.path(), &["--mock", "parse", s])), 0);
}

#[test]
fn backends_are_required() {
    let dir = tempfile::tempdir().unwrap();
    let script = fixtures().join("scripts/two_scenes.fountain");
    let out = panelwright(dir.path(), &["parse", script.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn stages_out_of_order_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&panelwright(dir.path(), &["--mock", "shoot"])), 2);
    assert_eq!(code(&panelwright(dir.path(), &["--mock", "bogus"])), 2);
}

#[test]
fn mock_run_writes_every_stage_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let script = fixtures().join("scripts/two_scenes.fountain");
    let args = ["--mock", "--seed", "7", "run", script.to_str().unwrap()];
    let out = panelwright(dir.path(), &args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("mean"), "{stdout}");
    for f in ["manifest.json", "ir/script.json", "db/script.json", "board/storyboard.json", "eval/report.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let again = panelwright(dir.path(), &args);
    assert_eq!(code(&again), 0);
    assert_eq!(String::from_utf8_lossy(&again.stdout).matches("skipped").count(), 5);
}

#[test]
fn fit_niqe_writes_a_loadable_model() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixtures().join("niqe/corpus");
    let out = panelwright(dir.path(), &["fit-niqe", corpus.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let path = dir.path().join("models/niqe_pristine.json");
    let model = panelwright_core::quality::PristineModel::load(&path).unwrap();
    assert_eq!(model.image_count, 25);

    let few = tempfile::tempdir().unwrap();
    let out = panelwright(dir.path(), &["fit-niqe", few.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}
