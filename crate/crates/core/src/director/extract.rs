//! Element extraction: screenplay parsing reconciled with the backend, or
//! backend-led extraction for prose.

use std::sync::LazyLock;

use regex::Regex;
use serde::Deserialize;
use serde_json::Value;

use super::prompts::{PromptId, PromptSet};
use super::reply::ask;
use super::DirectorError;
use crate::backends::Backend;
use crate::script_ir::{
    normalize_name, parse_screenplay_with, CharacterRecord, DialogueSegment, InteriorExterior, ParseOptions,
    RawScript, Scene, ScriptIR, SourceKind, SpotRecord, TimeOfDay,
};

/// Spot used for prose that never names a location.
pub const DEFAULT_SPOT_NAME: &str = "STORY";

static QUOTED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#""[^"\n]*"|“[^”]*”"#).unwrap());

#[derive(Debug, Clone, Default, Deserialize)]
pub struct ExtractReply {
    #[serde(default)]
    pub characters: Vec<ExtractedCharacter>,
    #[serde(default)]
    pub spots: Vec<ExtractedSpot>,
    #[serde(default)]
    pub dialogues: Vec<ExtractedDialogue>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExtractedCharacter {
    pub name: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExtractedSpot {
    pub name: String,
    #[serde(default)]
    pub interior_exterior: Option<String>,
    #[serde(default)]
    pub time_of_day: Option<String>,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExtractedDialogue {
    pub speaker: Option<String>,
    pub line: String,
    #[serde(default)]
    pub spot: Option<String>,
    #[serde(default)]
    pub addressees: Vec<String>,
    #[serde(default)]
    pub parenthetical: Option<String>,
}

fn parse_reply(v: Value) -> Result<ExtractReply, String> {
    serde_json::from_value(v).map_err(|e| format!("extraction schema: {e}"))
}

fn append_text(target: &mut String, text: &str) {
    let text = text.trim();
    if text.is_empty() || target.contains(text) {
        return;
    }
    if !target.is_empty() {
        target.push('\n');
    }
    target.push_str(text);
}

/// Index of the character a surface form refers to, by name or alias.
fn resolve_character(characters: &[CharacterRecord], surface: &str) -> Option<usize> {
    let slug = normalize_name(surface).ok()?;
    let stripped = ["the-", "a-", "an-"]
        .iter()
        .find_map(|a| slug.strip_prefix(a))
        .map(str::to_string);
    characters.iter().position(|c| {
        c.surface_forms().any(|f| {
            normalize_name(f)
                .map(|n| n == slug || stripped.as_deref() == Some(n.as_str()))
                .unwrap_or(false)
        })
    })
}

/// Runs extraction for either source kind.
pub fn extract_elements(
    raw: &RawScript,
    opts: &ParseOptions,
    prompts: &PromptSet,
    backend: &dyn Backend,
    log: &mut Vec<String>,
) -> Result<ScriptIR, DirectorError> {
    if raw.text.trim().is_empty() {
        return Err(DirectorError::InvalidArgument("script is empty".into()));
    }
    let kind = match raw.source_kind {
        SourceKind::Screenplay => "screenplay",
        SourceKind::Prose => "prose",
    };
    let user = prompts
        .get(PromptId::Extract)
        .render(&[("source_kind", kind), ("script", &raw.text)])?;
    match raw.source_kind {
        SourceKind::Screenplay => {
            let mut ir = parse_screenplay_with(&raw.text, opts)?;
            let reply = ask(backend, PromptId::Extract, &user, "script", log, parse_reply)?;
            reconcile(&mut ir, &reply, log);
            ir.validate()?;
            Ok(ir)
        }
        SourceKind::Prose => {
            let text = raw.text.clone();
            let reply = ask(backend, PromptId::Extract, &user, "script", log, |v| {
                let r = parse_reply(v)?;
                check_verbatim(&text, &r)?;
                Ok(r)
            })?;
            build_prose_ir(raw, &reply, log)
        }
    }
}

/// Folds backend output into a parsed screenplay. Only aliases,
/// descriptions and addressees are taken; nothing the parser found is
/// removed or renamed.
fn reconcile(ir: &mut ScriptIR, reply: &ExtractReply, log: &mut Vec<String>) {
    for xc in &reply.characters {
        let Some(i) = resolve_character(&ir.characters, &xc.name) else {
            log.push(format!("[reconcile] ignored character {:?} unknown to the parser", xc.name));
            continue;
        };
        for alias in &xc.aliases {
            let taken = resolve_character(&ir.characters, alias);
            if taken.is_none() && normalize_name(alias).is_ok() {
                ir.characters[i].aliases.push(alias.trim().to_string());
            }
        }
        append_text(&mut ir.characters[i].coarse_description, &xc.description);
    }
    for xs in &reply.spots {
        let Ok(slug) = normalize_name(&xs.name) else { continue };
        if let Some(s) = ir.spots.iter_mut().find(|s| s.id == slug) {
            append_text(&mut s.description, &xs.description);
        }
    }
    for xd in &reply.dialogues {
        let Some(speaker) = xd.speaker.as_deref().and_then(|s| resolve_character(&ir.characters, s)) else {
            continue;
        };
        let speaker_id = ir.characters[speaker].id.clone();
        let addressees: Vec<String> = xd
            .addressees
            .iter()
            .filter_map(|a| resolve_character(&ir.characters, a))
            .map(|i| ir.characters[i].id.clone())
            .collect();
        if let Some(seg) = ir
            .dialogues
            .iter_mut()
            .find(|d| d.speaker_id == speaker_id && d.line.trim() == xd.line.trim())
        {
            for a in addressees {
                if a != seg.speaker_id && !seg.addressee_ids.contains(&a) {
                    seg.addressee_ids.push(a);
                }
            }
        }
    }
}

/// Every line must occur in the source, in reply order.
fn check_verbatim(text: &str, reply: &ExtractReply) -> Result<(), String> {
    let mut cursor = 0;
    for (i, d) in reply.dialogues.iter().enumerate() {
        let line = d.line.trim();
        if line.is_empty() {
            return Err(format!("dialogue {i} has an empty line"));
        }
        match text[cursor..].find(line) {
            Some(p) => cursor += p + line.len(),
            None => {
                return Err(format!(
                    "dialogue {i} line {line:?} is not a verbatim substring of the script following the previous line"
                ))
            }
        }
    }
    Ok(())
}

fn interior(s: Option<&str>) -> InteriorExterior {
    match s.map(|s| s.trim().to_uppercase()).as_deref() {
        Some("INT") | Some("INTERIOR") => InteriorExterior::Interior,
        Some("EXT") | Some("EXTERIOR") => InteriorExterior::Exterior,
        _ => InteriorExterior::Unknown,
    }
}

fn time_of_day(s: Option<&str>) -> TimeOfDay {
    match s.map(|s| s.trim().to_uppercase()).as_deref() {
        Some("DAY") => TimeOfDay::Day,
        Some("NIGHT") => TimeOfDay::Night,
        _ => TimeOfDay::Unknown,
    }
}

fn build_prose_ir(raw: &RawScript, reply: &ExtractReply, log: &mut Vec<String>) -> Result<ScriptIR, DirectorError> {
    let schema = |m: String| DirectorError::SchemaViolation(m);
    let mut ir = ScriptIR::empty(raw.clone());

    for xc in &reply.characters {
        let id = normalize_name(&xc.name).map_err(|e| schema(format!("character name: {e}")))?;
        let i = match resolve_character(&ir.characters, &xc.name) {
            Some(i) => i,
            None => {
                ir.characters.push(CharacterRecord::new(id, xc.name.trim().to_string()));
                ir.characters.len() - 1
            }
        };
        for a in &xc.aliases {
            if resolve_character(&ir.characters, a).is_none() && normalize_name(a).is_ok() {
                ir.characters[i].aliases.push(a.trim().to_string());
            }
        }
        append_text(&mut ir.characters[i].coarse_description, &xc.description);
    }
    for xs in &reply.spots {
        let id = normalize_name(&xs.name).map_err(|e| schema(format!("spot name: {e}")))?;
        if ir.spot(&id).is_some() {
            continue;
        }
        let mut s = SpotRecord::new(id, xs.name.trim().to_string());
        s.interior_exterior = interior(xs.interior_exterior.as_deref());
        s.time_of_day = time_of_day(xs.time_of_day.as_deref());
        s.description = xs.description.trim().to_string();
        ir.spots.push(s);
    }
    if ir.spots.is_empty() {
        ir.spots.push(SpotRecord::new(
            normalize_name(DEFAULT_SPOT_NAME).expect("non-empty"),
            DEFAULT_SPOT_NAME.to_string(),
        ));
    }

    // Locate each line and attribute it.
    let mut cursor = 0;
    let mut active_spot = ir.spots[0].id.clone();
    let mut positions = Vec::new();
    for xd in &reply.dialogues {
        let line = xd.line.trim();
        let start = cursor + raw.text[cursor..].find(line).ok_or_else(|| schema(format!("line {line:?} not found")))?;
        cursor = start + line.len();
        let speaker_name = xd
            .speaker
            .as_deref()
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| DirectorError::UnattributableDialogue { line: line.to_string() })?;
        let speaker = match resolve_character(&ir.characters, speaker_name) {
            Some(i) => i,
            None => {
                let id = normalize_name(speaker_name).map_err(|e| schema(format!("speaker: {e}")))?;
                ir.characters.push(CharacterRecord::new(id, speaker_name.trim().to_string()));
                ir.characters.len() - 1
            }
        };
        if let Some(spot) = xd.spot.as_deref() {
            match normalize_name(spot).ok().filter(|s| ir.spot(s).is_some()) {
                Some(s) => active_spot = s,
                None => log.push(format!("[extract] unknown spot {spot:?}; keeping {active_spot}")),
            }
        }
        let speaker_id = ir.characters[speaker].id.clone();
        let mut addressee_ids: Vec<String> = Vec::new();
        for a in &xd.addressees {
            if let Some(i) = resolve_character(&ir.characters, a) {
                let id = ir.characters[i].id.clone();
                if id != speaker_id && !addressee_ids.contains(&id) {
                    addressee_ids.push(id);
                }
            }
        }
        let id = ir.dialogues.len();
        ir.dialogues.push(DialogueSegment {
            id,
            speaker_id,
            spot_id: active_spot.clone(),
            addressee_ids,
            line: raw.text[start..start + line.len()].to_string(),
            parenthetical: xd.parenthetical.clone().filter(|p| !p.trim().is_empty()),
            page: raw.page_of_byte(start),
            scene: 0,
        });
        positions.push(start);
    }

    // Scenes are maximal runs of segments at one spot.
    for i in 0..ir.dialogues.len() {
        let new_scene = i == 0 || ir.dialogues[i - 1].spot_id != ir.dialogues[i].spot_id;
        if new_scene {
            let spot_id = ir.dialogues[i].spot_id.clone();
            let heading = ir.spot(&spot_id).map(|s| s.name.clone()).unwrap_or_default();
            ir.scenes.push(Scene { index: ir.scenes.len(), spot_id, heading, page: ir.dialogues[i].page });
        }
        ir.dialogues[i].scene = ir.scenes.len() - 1;
    }
    if ir.scenes.is_empty() {
        ir.scenes.push(Scene { index: 0, spot_id: ir.spots[0].id.clone(), heading: ir.spots[0].name.clone(), page: 0 });
    }

    // Narration (text outside quotations) goes to the spot active at that
    // point and, when it names a character, to that character too.
    for para in raw.text.split("\n\n") {
        let offset = para.as_ptr() as usize - raw.text.as_ptr() as usize;
        let narration = QUOTED.replace_all(para, " ");
        let narration = narration.split_whitespace().collect::<Vec<_>>().join(" ");
        let narration = narration.trim_matches(|c: char| c == ',' || c.is_whitespace());
        if narration.len() < 2 {
            continue;
        }
        let seg = positions.iter().rposition(|&p| p <= offset + para.len());
        let spot_id = seg.map(|s| ir.dialogues[s].spot_id.clone()).unwrap_or_else(|| ir.spots[0].id.clone());
        if let Some(spot) = ir.spot_mut(&spot_id) {
            append_text(&mut spot.description, narration);
        }
        for c in ir.characters.iter_mut() {
            let mentioned = c.surface_forms().any(|f| {
                Regex::new(&format!(r"(?i)\b{}\b", regex::escape(f.trim())))
                    .map(|re| re.is_match(narration))
                    .unwrap_or(false)
            });
            if mentioned {
                append_text(&mut c.coarse_description, narration);
            }
        }
    }

    ir.validate().map_err(|e| schema(e.to_string()))?;
    Ok(ir)
}
