//! Stage gating, resumption and determinism of the mock pipeline.

use std::path::PathBuf;

use panelwright_core::pipeline::{Pipeline, PipelineConfig, StageOutcome, IR_FILE};
use panelwright_core::workspace::{Stage, Workspace};

fn script(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/scripts").join(name)
}

fn outcomes(p: &Pipeline, stop: Option<Stage>) -> Vec<(Stage, StageOutcome)> {
    p.run(&script("two_scenes.fountain"), stop).unwrap().stages
}

#[test]
fn same_seed_gives_identical_workspaces() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        outcomes(&Pipeline::new(d.path(), PipelineConfig::mock(7)).unwrap(), None);
    }
    let digest = |d: &tempfile::TempDir| Workspace::open(d.path()).unwrap().digest().unwrap();
    assert_eq!(digest(&a), digest(&b));

    let c = tempfile::tempdir().unwrap();
    outcomes(&Pipeline::new(c.path(), PipelineConfig::mock(8)).unwrap(), None);
    assert_ne!(digest(&a), digest(&c));
}

#[test]
fn resuming_skips_finished_stages() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(dir.path(), PipelineConfig::mock(7)).unwrap();
    let first = outcomes(&p, Some(Stage::Shoot));
    assert_eq!(first.len(), 3);
    assert!(first.iter().all(|(_, o)| *o == StageOutcome::Ran));
    let second = outcomes(&p, None);
    let skipped: Vec<Stage> = second.iter().filter(|(_, o)| *o == StageOutcome::Skipped).map(|(s, _)| *s).collect();
    assert_eq!(skipped, [Stage::Parse, Stage::Direct, Stage::Shoot]);
    assert!(outcomes(&p, None).iter().all(|(_, o)| *o == StageOutcome::Skipped));
}

#[test]
fn later_stage_refuses_to_run_early() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(dir.path(), PipelineConfig::mock(7)).unwrap();
    let err = p.board().unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert_eq!(err.stage, Some(Stage::Board));
    p.parse(&script("two_scenes.fountain")).unwrap();
    assert_eq!(p.shoot().unwrap_err().exit_code(), 2);
    p.direct().unwrap();
    p.shoot().unwrap();
}

#[test]
fn edited_outputs_block_downstream_and_rerun_on_resume() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(dir.path(), PipelineConfig::mock(7)).unwrap();
    outcomes(&p, Some(Stage::Direct));
    let ir = dir.path().join(IR_FILE);
    let text = std::fs::read_to_string(&ir).unwrap();
    std::fs::write(&ir, text.replace("MARA", "MAUD")).unwrap();
    let err = p.shoot().unwrap_err();
    assert!(err.to_string().contains("changed"), "{err}");
    let again = outcomes(&p, Some(Stage::Direct));
    assert_eq!(again, [(Stage::Parse, StageOutcome::Ran), (Stage::Direct, StageOutcome::Ran)]);
}

#[test]
fn rerunning_a_stage_invalidates_its_successors() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(dir.path(), PipelineConfig::mock(7)).unwrap();
    outcomes(&p, None);
    let mut cfg = PipelineConfig::mock(7);
    cfg.rounds = 3;
    let p3 = Pipeline::new(dir.path(), cfg).unwrap();
    p3.direct().unwrap();
    let ws = Workspace::open(dir.path()).unwrap();
    let m = ws.manifest().unwrap();
    assert!(m.stages.contains_key(&Stage::Direct));
    assert!(!m.stages.contains_key(&Stage::Shoot));
    assert!(!m.stages.contains_key(&Stage::Eval));
    let rerun = p3.run(&script("two_scenes.fountain"), None).unwrap().stages;
    assert_eq!(rerun[0].1, StageOutcome::Skipped);
    assert!(rerun[2..].iter().all(|(_, o)| *o == StageOutcome::Ran));
}

#[test]
fn concurrent_runs_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(dir.path(), PipelineConfig::mock(7)).unwrap();
    let _held = Workspace::open(dir.path()).unwrap().lock().unwrap();
    let err = p.run(&script("two_scenes.fountain"), None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn shoot_reuses_its_cache() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(dir.path(), PipelineConfig::mock(7)).unwrap();
    outcomes(&p, Some(Stage::Shoot));
    let ws = Workspace::open(dir.path()).unwrap();
    let before = ws.output_digest(Stage::Shoot).unwrap();
    p.shoot().unwrap();
    assert_eq!(ws.output_digest(Stage::Shoot).unwrap(), before);
}

#[test]
fn prose_input_goes_through_extraction() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::mock(2);
    cfg.source.kind = panelwright_core::script_ir::SourceKind::Prose;
    let p = Pipeline::new(dir.path(), cfg).unwrap();
    let s = p.run(&script("lantern_fox.txt"), None).unwrap();
    assert_eq!(s.stages.len(), 5);
    let db = std::fs::read_to_string(dir.path().join("db/dialogues.json")).unwrap();
    assert!(db.contains("Then I will carry it until spring,"), "{db}");
    let chars = std::fs::read_to_string(dir.path().join("db/characters.json")).unwrap();
    assert!(chars.contains("\"fox\"") && chars.contains("\"heron\""), "{chars}");
}
