//! Line grammar for screenplay-formatted text.
//!
//! ```text
//! scene heading   INT. CAFE - DAY | EXT. PIER - NIGHT | INT./EXT. CAR
//! cue             ALL-CAPS name, optional (V.O.)-style extension, followed
//!                 by a non-blank line
//! parenthetical   ( ... ) directly after a cue or between dialogue lines
//! dialogue        non-blank lines after a cue, up to the next blank line
//! action          any other line inside a scene
//! ```

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;

use super::{
    normalize_name, normalize_newlines, segment_pages, CharacterRecord, DialogueSegment,
    InteriorExterior, IrError, RawScript, Scene, ScriptIR, SourceKind, SpotRecord, TimeOfDay,
};

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// Raise [`IrError::UnparsableLine`] instead of demoting unknown lines to action.
    pub strict: bool,
    /// Split the text into pages holding at most this many cues.
    pub max_segments_per_page: Option<usize>,
}

/// Lenient single-page parse.
pub fn parse_screenplay(text: &str) -> Result<ScriptIR, IrError> {
    parse_screenplay_with(text, &ParseOptions::default())
}

pub(crate) struct Heading {
    pub name: String,
    pub interior_exterior: InteriorExterior,
    pub time_of_day: TimeOfDay,
}

fn heading_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(INT\./EXT\.?|EXT\./INT\.?|INT/EXT\.?|I/E\.?|INT\.|EXT\.)\s+(\S.*)$").unwrap()
    })
}

fn heading_prefix_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(INT|EXT|I/E)[./\s]").unwrap())
}

pub(crate) fn parse_heading(line: &str) -> Option<Heading> {
    let caps = heading_re().captures(line.trim())?;
    let interior_exterior = match &caps[1] {
        "INT." => InteriorExterior::Interior,
        "EXT." => InteriorExterior::Exterior,
        _ => InteriorExterior::Unknown,
    };
    let rest = caps[2].trim();
    let (name, time_of_day) = match rest.rsplit_once(" - ") {
        Some((name, time)) => match time_word(time.trim()) {
            Some(tod) => (name.trim(), tod),
            None => (rest, TimeOfDay::Unknown),
        },
        None => (rest, TimeOfDay::Unknown),
    };
    if name.is_empty() || name.chars().any(char::is_lowercase) {
        return None;
    }
    Some(Heading {
        name: name.to_string(),
        interior_exterior,
        time_of_day,
    })
}

fn time_word(word: &str) -> Option<TimeOfDay> {
    match word {
        "DAY" | "MORNING" | "AFTERNOON" | "NOON" | "DAWN" | "SUNRISE" => Some(TimeOfDay::Day),
        "NIGHT" | "EVENING" | "DUSK" | "MIDNIGHT" | "SUNSET" => Some(TimeOfDay::Night),
        "CONTINUOUS" | "LATER" | "MOMENTS LATER" | "SAME" => Some(TimeOfDay::Unknown),
        _ => None,
    }
}

pub fn is_scene_heading(line: &str) -> bool {
    parse_heading(line).is_some()
}

fn looks_like_heading(line: &str) -> bool {
    heading_prefix_re().is_match(line.trim())
}

fn is_parenthetical(line: &str) -> bool {
    let t = line.trim();
    t.len() >= 2 && t.starts_with('(') && t.ends_with(')')
}

/// Cue name with any trailing `(V.O.)`-style extension removed, if the
/// line has the shape of a character cue.
pub(crate) fn cue_name(line: &str) -> Option<&str> {
    let t = line.trim();
    if t.is_empty() || t.chars().count() > 50 || t.ends_with(':') || looks_like_heading(t) {
        return None;
    }
    let name = match t.find('(') {
        Some(i) if t.ends_with(')') => t[..i].trim_end(),
        Some(_) => return None,
        None => t,
    };
    if name.is_empty() || !name.chars().any(char::is_uppercase) {
        return None;
    }
    let ok = name.chars().all(|c| {
        (c.is_alphabetic() && !c.is_lowercase())
            || c.is_ascii_digit()
            || matches!(c, ' ' | '.' | '\'' | '-' | '&')
    });
    if ok && !t.chars().any(char::is_lowercase) {
        Some(name)
    } else {
        None
    }
}

/// True when line `i` opens a dialogue block.
pub(crate) fn is_cue_at(lines: &[&str], i: usize) -> bool {
    cue_name(lines[i]).is_some()
        && lines
            .get(i + 1)
            .is_some_and(|next| !next.trim().is_empty() && !is_scene_heading(next))
}

enum State {
    Idle,
    Action,
    AfterCue {
        speaker: String,
        cue_line: usize,
        cue_text: String,
        parenthetical: Option<String>,
    },
    Dialogue {
        speaker: String,
        start: usize,
        end: usize,
        parenthetical: Option<String>,
    },
}

struct Builder {
    raw: RawScript,
    characters: Vec<CharacterRecord>,
    spots: Vec<SpotRecord>,
    scenes: Vec<Scene>,
    dialogues: Vec<DialogueSegment>,
    /// (scene, paragraph) for every action paragraph.
    paragraphs: Vec<(usize, String)>,
    current_action: Vec<String>,
    scene_speakers: Vec<String>,
    cue_page: usize,
}

impl Builder {
    fn current_scene(&self) -> Option<&Scene> {
        self.scenes.last()
    }

    fn flush_action(&mut self) {
        if self.current_action.is_empty() {
            return;
        }
        let para = self.current_action.join(" ");
        self.current_action.clear();
        if let Some(scene) = self.current_scene() {
            let (idx, spot_id) = (scene.index, scene.spot_id.clone());
            if let Some(spot) = self.spots.iter_mut().find(|s| s.id == spot_id) {
                append_paragraph(&mut spot.description, &para);
            }
            self.paragraphs.push((idx, para));
        }
    }

    fn character_for_cue(&mut self, name: &str) -> Result<String, IrError> {
        let id = normalize_name(name)?;
        if !self.characters.iter().any(|c| c.id == id) {
            self.characters.push(CharacterRecord::new(id.clone(), name.to_string()));
        }
        Ok(id)
    }

    fn emit(&mut self, speaker: String, start: usize, end: usize, parenthetical: Option<String>) {
        let scene = self.current_scene().expect("cue accepted only inside a scene");
        let (scene_idx, spot_id) = (scene.index, scene.spot_id.clone());
        let addressee = self
            .scene_speakers
            .iter()
            .rev()
            .find(|s| **s != speaker)
            .cloned();
        self.scene_speakers.push(speaker.clone());
        let id = self.dialogues.len();
        self.dialogues.push(DialogueSegment {
            id,
            speaker_id: speaker,
            spot_id,
            addressee_ids: addressee.into_iter().collect(),
            line: self.raw.text[start..end].to_string(),
            parenthetical,
            page: self.cue_page,
            scene: scene_idx,
        });
    }
}

fn append_paragraph(target: &mut String, para: &str) {
    if !target.is_empty() {
        target.push('\n');
    }
    target.push_str(para);
}

/// Parses screenplay text into a [`ScriptIR`].
pub fn parse_screenplay_with(text: &str, opts: &ParseOptions) -> Result<ScriptIR, IrError> {
    let text = normalize_newlines(text);
    if text.trim().is_empty() {
        return Err(IrError::EmptyScript);
    }
    let raw = match opts.max_segments_per_page {
        Some(max) => segment_pages(&text, max),
        None => RawScript::new(&text, SourceKind::Screenplay),
    };

    // (byte offset, line without newline)
    let mut offsets = Vec::new();
    let mut pos = 0;
    for line in text.split('\n') {
        offsets.push(pos);
        pos += line.len() + 1;
    }
    let lines: Vec<&str> = text.split('\n').collect();
    let page_starts = raw.page_byte_offsets();
    let page_of = |byte: usize| page_starts.iter().rposition(|&s| s <= byte).unwrap_or(0);

    let mut b = Builder {
        raw,
        characters: Vec::new(),
        spots: Vec::new(),
        scenes: Vec::new(),
        dialogues: Vec::new(),
        paragraphs: Vec::new(),
        current_action: Vec::new(),
        scene_speakers: Vec::new(),
        cue_page: 0,
    };
    let mut state = State::Idle;

    let unparsable = |i: usize| IrError::UnparsableLine {
        line_no: i + 1,
        text: lines[i].to_string(),
    };

    for (i, line) in lines.iter().enumerate() {
        let trimmed = line.trim();
        let content_start = offsets[i] + (line.len() - line.trim_start().len());
        let content_end = offsets[i] + line.trim_end().len();

        if trimmed.is_empty() {
            match std::mem::replace(&mut state, State::Idle) {
                State::Dialogue { speaker, start, end, parenthetical } => {
                    b.emit(speaker, start, end, parenthetical)
                }
                State::AfterCue { cue_line, cue_text, parenthetical, .. } => {
                    if opts.strict {
                        return Err(unparsable(cue_line));
                    }
                    if !cue_text.is_empty() {
                        b.current_action.push(cue_text);
                    }
                    b.current_action.extend(parenthetical.map(|p| format!("({p})")));
                    b.flush_action();
                }
                State::Action => b.flush_action(),
                State::Idle => {}
            }
            continue;
        }

        if let Some(h) = parse_heading(trimmed) {
            match std::mem::replace(&mut state, State::Idle) {
                State::Dialogue { speaker, start, end, parenthetical } => {
                    b.emit(speaker, start, end, parenthetical)
                }
                State::AfterCue { cue_line, .. } if opts.strict => return Err(unparsable(cue_line)),
                _ => {}
            }
            b.flush_action();
            let spot_id = normalize_name(&h.name)?;
            if !b.spots.iter().any(|s| s.id == spot_id) {
                let mut spot = SpotRecord::new(spot_id.clone(), h.name.clone());
                spot.interior_exterior = h.interior_exterior;
                spot.time_of_day = h.time_of_day;
                b.spots.push(spot);
            }
            let index = b.scenes.len();
            b.scenes.push(Scene {
                index,
                spot_id,
                heading: trimmed.to_string(),
                page: page_of(offsets[i]),
            });
            b.scene_speakers.clear();
            continue;
        }

        state = match std::mem::replace(&mut state, State::Idle) {
            State::AfterCue { speaker, cue_line, cue_text, parenthetical } => {
                if parenthetical.is_none() && is_parenthetical(trimmed) {
                    let inner = trimmed[1..trimmed.len() - 1].trim().to_string();
                    State::AfterCue {
                        speaker,
                        cue_line,
                        cue_text,
                        parenthetical: Some(inner),
                    }
                } else {
                    State::Dialogue {
                        speaker,
                        start: content_start,
                        end: content_end,
                        parenthetical,
                    }
                }
            }
            State::Dialogue { speaker, start, end, parenthetical } => {
                if is_parenthetical(trimmed) {
                    b.emit(speaker.clone(), start, end, parenthetical);
                    let inner = trimmed[1..trimmed.len() - 1].trim().to_string();
                    State::AfterCue {
                        speaker,
                        cue_line: i,
                        cue_text: String::new(),
                        parenthetical: Some(inner),
                    }
                } else {
                    State::Dialogue {
                        speaker,
                        start,
                        end: content_end,
                        parenthetical,
                    }
                }
            }
            prev @ (State::Idle | State::Action) => {
                let fresh_block = matches!(prev, State::Idle);
                if fresh_block && is_cue_at(&lines, i) {
                    let name = cue_name(trimmed).expect("checked by is_cue_at");
                    if b.scenes.is_empty() {
                        return Err(IrError::DialogueBeforeScene {
                            line_no: i + 1,
                            cue: name.to_string(),
                        });
                    }
                    b.flush_action();
                    let speaker = b.character_for_cue(name)?;
                    b.cue_page = page_of(offsets[i]);
                    State::AfterCue {
                        speaker,
                        cue_line: i,
                        cue_text: trimmed.to_string(),
                        parenthetical: None,
                    }
                } else if b.scenes.is_empty() {
                    if opts.strict {
                        return Err(unparsable(i));
                    }
                    State::Action
                } else if opts.strict
                    && (looks_like_heading(trimmed)
                        || (is_parenthetical(trimmed) && fresh_block)
                        || (fresh_block && cue_name(trimmed).is_some()))
                {
                    return Err(unparsable(i));
                } else {
                    b.current_action.push(trimmed.to_string());
                    State::Action
                }
            }
        };
    }

    match state {
        State::Dialogue { speaker, start, end, parenthetical } => b.emit(speaker, start, end, parenthetical),
        State::AfterCue { cue_line, cue_text, .. } => {
            if opts.strict {
                return Err(unparsable(cue_line));
            }
            if !cue_text.is_empty() {
                b.current_action.push(cue_text);
            }
        }
        _ => {}
    }
    b.flush_action();

    attach_character_mentions(&mut b.characters, &b.paragraphs);

    let ir = ScriptIR {
        raw: b.raw,
        characters: b.characters,
        spots: b.spots,
        scenes: b.scenes,
        dialogues: b.dialogues,
    };
    ir.validate()?;
    Ok(ir)
}

/// Copies every action paragraph that mentions a character by name into
/// that character's coarse description.
fn attach_character_mentions(characters: &mut [CharacterRecord], paragraphs: &[(usize, String)]) {
    let patterns: HashMap<String, Regex> = characters
        .iter()
        .map(|c| {
            let re = Regex::new(&format!(r"(?i)\b{}\b", regex::escape(&c.name))).unwrap();
            (c.id.clone(), re)
        })
        .collect();
    for (_, para) in paragraphs {
        for c in characters.iter_mut() {
            if patterns[&c.id].is_match(para) && !c.coarse_description.contains(para.as_str()) {
                append_paragraph(&mut c.coarse_description, para);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cue() {
        let ir = parse_screenplay("INT. CAFE - DAY\nJESSE\nHello.").unwrap();
        assert_eq!(ir.spots.len(), 1);
        let s = &ir.spots[0];
        assert_eq!((s.name.as_str(), s.interior_exterior, s.time_of_day), ("CAFE", InteriorExterior::Interior, TimeOfDay::Day));
        assert_eq!(ir.characters.len(), 1);
        assert_eq!(ir.characters[0].name, "JESSE");
        assert_eq!(ir.dialogues.len(), 1);
        assert_eq!(ir.dialogues[0].speaker_id, "jesse");
        assert_eq!(ir.dialogues[0].line, "Hello.");
    }

    #[test]
    fn parenthetical_attaches() {
        let ir = parse_screenplay("EXT. PIER - NIGHT\nCELINE\n(softly)\nLook.").unwrap();
        assert_eq!(ir.dialogues[0].parenthetical.as_deref(), Some("softly"));
        assert_eq!(ir.dialogues[0].line, "Look.");
        assert_eq!(ir.spots[0].time_of_day, TimeOfDay::Night);
        assert_eq!(ir.spots[0].interior_exterior, InteriorExterior::Exterior);
    }

    #[test]
    fn mid_speech_parenthetical_starts_new_segment() {
        let ir = parse_screenplay("INT. ROOM - DAY\n\nANNA\nFirst.\n(beat)\nSecond.\n").unwrap();
        assert_eq!(ir.dialogues.len(), 2);
        assert_eq!(ir.dialogues[1].parenthetical.as_deref(), Some("beat"));
        assert_eq!(ir.dialogues[1].speaker_id, "anna");
    }

    #[test]
    fn multi_line_dialogue_is_verbatim_slice() {
        let text = "INT. ROOM - DAY\n\n    ANNA\n    One line,\n    and another.\n";
        let ir = parse_screenplay(text).unwrap();
        assert_eq!(ir.dialogues[0].line, "One line,\n    and another.");
        assert!(text.contains(&ir.dialogues[0].line));
    }

    #[test]
    fn cue_before_scene_is_rejected() {
        let err = parse_screenplay("JESSE\nHello.\n\nINT. CAFE - DAY\n").unwrap_err();
        assert!(matches!(err, IrError::DialogueBeforeScene { line_no: 1, .. }));
    }

    #[test]
    fn strict_mode_names_the_line() {
        let text = "INT. CAFE - DAY\n\nCUT TO BLACK\n\nJESSE\nHi.\n";
        assert!(parse_screenplay(text).is_ok());
        let err = parse_screenplay_with(text, &ParseOptions { strict: true, ..Default::default() }).unwrap_err();
        assert_eq!(err, IrError::UnparsableLine { line_no: 3, text: "CUT TO BLACK".into() });
    }

    #[test]
    fn lenient_orphan_cue_becomes_action() {
        let ir = parse_screenplay("INT. CAFE - DAY\n\nSILENCE\n\nJESSE\nHi.\n").unwrap();
        assert!(ir.spots[0].description.contains("SILENCE"));
        assert_eq!(ir.characters.len(), 1);
    }

    #[test]
    fn cue_extension_is_stripped() {
        let ir = parse_screenplay("INT. CAFE - DAY\n\nJESSE (V.O.)\nHi.\n\nJESSE (CONT'D)\nAgain.\n").unwrap();
        assert_eq!(ir.characters.len(), 1);
        assert_eq!(ir.characters[0].name, "JESSE");
        assert_eq!(ir.dialogues.len(), 2);
    }

    #[test]
    fn addressee_is_previous_distinct_speaker() {
        let text = "INT. CAFE - DAY\n\nA\none\n\nA\ntwo\n\nB\nthree\n\nA\nfour\n\nEXT. STREET - DAY\n\nB\nfive\n";
        let ir = parse_screenplay(text).unwrap();
        let addr: Vec<Vec<&str>> = ir
            .dialogues
            .iter()
            .map(|d| d.addressee_ids.iter().map(String::as_str).collect())
            .collect();
        assert_eq!(addr, vec![vec![], vec![], vec!["a"], vec!["b"], vec![]]);
    }

    #[test]
    fn action_goes_to_spot_and_mentioned_characters() {
        let text = "INT. CAFE - DAY\n\nCELINE, thirties, sits in a red dress.\nShe waits.\n\nCELINE\nHi.\n";
        let ir = parse_screenplay(text).unwrap();
        assert_eq!(ir.spots[0].description, "CELINE, thirties, sits in a red dress. She waits.");
        assert!(ir.characters[0].coarse_description.contains("red dress"));
    }

    #[test]
    fn spots_are_reused_across_scenes() {
        let text = "INT. CAFE - DAY\n\nA\nx\n\nEXT. PIER - NIGHT\n\nB\ny\n\nINT. CAFE - DAY\n\nA\nz\n";
        let ir = parse_screenplay(text).unwrap();
        assert_eq!(ir.spots.len(), 2);
        assert_eq!(ir.scenes.len(), 3);
        assert_eq!(ir.dialogues[2].spot_id, "cafe");
        assert_eq!(ir.dialogues[2].scene, 2);
    }

    #[test]
    fn crlf_input() {
        let ir = parse_screenplay("INT. CAFE - DAY\r\nJESSE\r\nHello.\r\n").unwrap();
        assert_eq!(ir.dialogues[0].line, "Hello.");
        assert!(!ir.raw.text.contains('\r'));
    }

    #[test]
    fn heading_variants() {
        let h = parse_heading("INT./EXT. CAR - NIGHT").unwrap();
        assert_eq!((h.name.as_str(), h.interior_exterior, h.time_of_day), ("CAR", InteriorExterior::Unknown, TimeOfDay::Night));
        let h = parse_heading("INT. HOUSE - KITCHEN").unwrap();
        assert_eq!(h.name, "HOUSE - KITCHEN");
        assert_eq!(h.time_of_day, TimeOfDay::Unknown);
        assert!(parse_heading("INT.").is_none());
        assert!(parse_heading("Interesting times").is_none());
    }
}
