//! Speaker retrieval on the ten-character fixture.

use std::path::PathBuf;

use panelwright_core::backends::MockBackend;
use panelwright_core::director::{all_targets, refine_entities, ElementDatabase, PromptSet, RecordRef, DEFAULT_WINDOW};
use panelwright_core::script_ir::parse_screenplay;

/// Cue lines of the fixture in order, with the speaker each one names.
const CUES: &[(&str, &str)] = &[
    ("MAYOR GRANT", "mayor-grant"),
    ("GRANT", "grant"),
    ("TOM", "tom"),
    ("OLD TOM (V.O.)", "old-tom"),
    ("DR. VOSS", "dr-voss"),
    ("MAYOR GRANT", "mayor-grant"),
    ("CAPTAIN REYES", "captain-reyes"),
    ("NURSE VOSS", "nurse-voss"),
    ("DR. VOSS", "dr-voss"),
    ("REYES", "reyes"),
    ("THE HARBOUR MASTER", "the-harbour-master"),
    ("MARISOL", "marisol"),
    ("TOM", "tom"),
    ("OLD TOM", "old-tom"),
    ("CAPTAIN REYES", "captain-reyes"),
    ("GRANT", "grant"),
    ("MAYOR GRANT (CONT'D)", "mayor-grant"),
    ("THE HARBOUR MASTER", "the-harbour-master"),
];

fn fixture() -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/scripts/ten_characters.fountain");
    std::fs::read_to_string(p).unwrap()
}

fn check_rank_one(db: &ElementDatabase) {
    assert_eq!(db.characters.len(), 10);
    assert_eq!(db.dialogues.len(), CUES.len());
    for (seg, (cue, want)) in db.dialogues.iter().zip(CUES) {
        assert_eq!(seg.speaker_id, *want, "segment {}", seg.id);
        let ranked = db.lookup(cue);
        assert_eq!(ranked.first().map(|m| &m.record), Some(&RecordRef::Character(want.to_string())), "{cue}");
        let ctx = db.retrieve_context(seg.id, DEFAULT_WINDOW).unwrap();
        assert_eq!(ctx.speaker.id, *want);
    }
}

#[test]
fn speaker_is_rank_one_for_every_segment() {
    let ir = parse_screenplay(&fixture()).unwrap();
    check_rank_one(&ElementDatabase::from_ir(&ir));
}

#[test]
fn refinement_keeps_speaker_rank_one() {
    let ir = parse_screenplay(&fixture()).unwrap();
    let backend = MockBackend::new(3);
    let mut log = Vec::new();
    let (refined, _) = refine_entities(&ir, &all_targets(&ir), 2, &PromptSet::default(), &backend, &mut log).unwrap();
    check_rank_one(&ElementDatabase::from_ir(&refined));
}

#[test]
fn shared_tokens_do_not_outrank_the_exact_name() {
    let ir = parse_screenplay(&fixture()).unwrap();
    let db = ElementDatabase::from_ir(&ir);
    let ranked = db.lookup("VOSS");
    assert!(ranked.iter().all(|m| !m.exact_alias));
    for id in ["dr-voss", "nurse-voss"] {
        assert!(ranked.iter().any(|m| m.record == RecordRef::Character(id.into())));
    }
    assert_eq!(db.lookup("DR. VOSS")[0].record, RecordRef::Character("dr-voss".into()));
    assert_eq!(db.lookup("harbour master")[0].record, RecordRef::Character("the-harbour-master".into()));
}
