//! Structured intermediate representation of a dialogue script.
//!
//! A [`ScriptIR`] holds the raw text, the characters and spots (locations)
//! found in it, the scenes, and the ordered dialogue segments. Screenplay
//! text is parsed deterministically by [`parse_screenplay`]; prose is left
//! to the director's model-backed extraction.

mod names;
mod pages;
mod parse;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use names::normalize_name;
pub use pages::segment_pages;
pub use parse::{is_scene_heading, parse_screenplay, parse_screenplay_with, ParseOptions};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IrError {
    #[error("line {line_no}: unparsable line {text:?}")]
    UnparsableLine { line_no: usize, text: String },
    #[error("line {line_no}: dialogue cue {cue:?} appears before any scene heading")]
    DialogueBeforeScene { line_no: usize, cue: String },
    #[error("{0:?} is empty after normalization")]
    EmptyAfterNormalization(String),
    #[error("script text is empty")]
    EmptyScript,
    #[error("invalid script IR: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Screenplay,
    Prose,
}

/// Script text plus page boundaries, expressed as character offsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawScript {
    pub text: String,
    pub source_kind: SourceKind,
    pub pages: Vec<usize>,
}

impl RawScript {
    /// Single-page script. CRLF line endings are folded to LF.
    pub fn new(text: &str, source_kind: SourceKind) -> Self {
        RawScript {
            text: normalize_newlines(text),
            source_kind,
            pages: vec![0],
        }
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    /// Byte offsets of each page start.
    pub fn page_byte_offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.pages.len());
        let mut targets = self.pages.iter().copied().peekable();
        for (ci, (bi, _)) in self.text.char_indices().enumerate() {
            while targets.peek() == Some(&ci) {
                out.push(bi);
                targets.next();
            }
        }
        // offsets equal to the char length map to the end
        for _ in targets {
            out.push(self.text.len());
        }
        out
    }

    pub fn page_slices(&self) -> Vec<&str> {
        let starts = self.page_byte_offsets();
        starts
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let e = starts.get(i + 1).copied().unwrap_or(self.text.len());
                &self.text[s..e]
            })
            .collect()
    }

    /// Page index containing the given byte offset.
    pub fn page_of_byte(&self, byte: usize) -> usize {
        let starts = self.page_byte_offsets();
        starts.iter().rposition(|&s| s <= byte).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), IrError> {
        if self.pages.is_empty() {
            return Err(IrError::Invalid("script has no pages".into()));
        }
        let len = self.text.chars().count();
        if self.pages[0] != 0 {
            return Err(IrError::Invalid("first page must start at offset 0".into()));
        }
        for w in self.pages.windows(2) {
            if w[0] >= w[1] {
                return Err(IrError::Invalid("page offsets must be strictly increasing".into()));
            }
        }
        if self.pages.iter().any(|&p| p > len || (p == len && p != 0)) {
            return Err(IrError::Invalid("page offset beyond text".into()));
        }
        Ok(())
    }
}

pub(crate) fn normalize_newlines(text: &str) -> String {
    text.replace("\r\n", "\n").replace('\r', "\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InteriorExterior {
    #[serde(rename = "INT")]
    Interior,
    #[serde(rename = "EXT")]
    Exterior,
    #[serde(rename = "UNKNOWN")]
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TimeOfDay {
    #[serde(rename = "DAY")]
    Day,
    #[serde(rename = "NIGHT")]
    Night,
    #[serde(rename = "UNKNOWN")]
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileField {
    AgeBand,
    Hair,
    Clothing,
    Build,
    Features,
}

impl ProfileField {
    pub const ALL: [ProfileField; 5] = [
        ProfileField::AgeBand,
        ProfileField::Hair,
        ProfileField::Clothing,
        ProfileField::Build,
        ProfileField::Features,
    ];

    pub fn key(self) -> &'static str {
        match self {
            ProfileField::AgeBand => "age_band",
            ProfileField::Hair => "hair",
            ProfileField::Clothing => "clothing",
            ProfileField::Build => "build",
            ProfileField::Features => "features",
        }
    }
}

/// Refined visual description of a character.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisualProfile {
    pub age_band: String,
    pub hair: String,
    pub clothing: String,
    pub build: String,
    pub features: String,
}

impl VisualProfile {
    pub fn get(&self, field: ProfileField) -> &str {
        match field {
            ProfileField::AgeBand => &self.age_band,
            ProfileField::Hair => &self.hair,
            ProfileField::Clothing => &self.clothing,
            ProfileField::Build => &self.build,
            ProfileField::Features => &self.features,
        }
    }

    pub fn get_mut(&mut self, field: ProfileField) -> &mut String {
        match field {
            ProfileField::AgeBand => &mut self.age_band,
            ProfileField::Hair => &mut self.hair,
            ProfileField::Clothing => &mut self.clothing,
            ProfileField::Build => &mut self.build,
            ProfileField::Features => &mut self.features,
        }
    }

    pub fn is_complete(&self) -> bool {
        ProfileField::ALL.iter().all(|f| !self.get(*f).trim().is_empty())
    }

    pub fn gaps(&self) -> Vec<ProfileField> {
        ProfileField::ALL
            .into_iter()
            .filter(|f| self.get(*f).trim().is_empty())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterRecord {
    pub id: String,
    pub name: String,
    pub aliases: Vec<String>,
    pub coarse_description: String,
    pub refined_profile: VisualProfile,
    pub refinement_round: u32,
}

impl CharacterRecord {
    pub fn new(id: String, name: String) -> Self {
        CharacterRecord {
            id,
            name,
            aliases: Vec::new(),
            coarse_description: String::new(),
            refined_profile: VisualProfile::default(),
            refinement_round: 0,
        }
    }

    /// Canonical name followed by aliases.
    pub fn surface_forms(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.name.as_str()).chain(self.aliases.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpotRecord {
    pub id: String,
    pub name: String,
    pub interior_exterior: InteriorExterior,
    pub time_of_day: TimeOfDay,
    pub description: String,
    /// Visual detail added by refinement; the source-grounded
    /// `description` is never rewritten.
    #[serde(default)]
    pub refined_details: String,
    pub refinement_round: u32,
}

impl SpotRecord {
    pub fn new(id: String, name: String) -> Self {
        SpotRecord {
            id,
            name,
            interior_exterior: InteriorExterior::Unknown,
            time_of_day: TimeOfDay::Unknown,
            description: String::new(),
            refined_details: String::new(),
            refinement_round: 0,
        }
    }
}

/// One contiguous stretch of action at a single spot, opened by a scene
/// heading (screenplay) or by a change of spot (prose).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub index: usize,
    pub spot_id: String,
    pub heading: String,
    pub page: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueSegment {
    pub id: usize,
    pub speaker_id: String,
    pub spot_id: String,
    pub addressee_ids: Vec<String>,
    pub line: String,
    pub parenthetical: Option<String>,
    pub page: usize,
    pub scene: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptIR {
    pub raw: RawScript,
    pub characters: Vec<CharacterRecord>,
    pub spots: Vec<SpotRecord>,
    pub scenes: Vec<Scene>,
    pub dialogues: Vec<DialogueSegment>,
}

impl ScriptIR {
    pub fn empty(raw: RawScript) -> Self {
        ScriptIR {
            raw,
            characters: Vec::new(),
            spots: Vec::new(),
            scenes: Vec::new(),
            dialogues: Vec::new(),
        }
    }

    pub fn character(&self, id: &str) -> Option<&CharacterRecord> {
        self.characters.iter().find(|c| c.id == id)
    }

    pub fn character_mut(&mut self, id: &str) -> Option<&mut CharacterRecord> {
        self.characters.iter_mut().find(|c| c.id == id)
    }

    pub fn spot(&self, id: &str) -> Option<&SpotRecord> {
        self.spots.iter().find(|s| s.id == id)
    }

    pub fn spot_mut(&mut self, id: &str) -> Option<&mut SpotRecord> {
        self.spots.iter_mut().find(|s| s.id == id)
    }

    /// Segments belonging to a scene, in order.
    pub fn scene_segments(&self, scene: usize) -> impl Iterator<Item = &DialogueSegment> {
        self.dialogues.iter().filter(move |d| d.scene == scene)
    }

    /// Checks every structural invariant of the IR.
    pub fn validate(&self) -> Result<(), IrError> {
        self.raw.validate()?;
        let mut ids = HashSet::new();
        let mut names = HashSet::new();
        for c in &self.characters {
            if c.name.trim().is_empty() {
                return Err(IrError::Invalid(format!("character {:?} has an empty name", c.id)));
            }
            if !ids.insert(c.id.as_str()) {
                return Err(IrError::Invalid(format!("duplicate character id {:?}", c.id)));
            }
            if !names.insert(normalize_name(&c.name)?) {
                return Err(IrError::Invalid(format!("duplicate character name {:?}", c.name)));
            }
            if c.refinement_round >= 1 && !c.refined_profile.is_complete() {
                return Err(IrError::Invalid(format!(
                    "character {:?} is marked refined but has profile gaps",
                    c.id
                )));
            }
        }
        let mut spot_ids = HashSet::new();
        for s in &self.spots {
            if s.name.trim().is_empty() {
                return Err(IrError::Invalid(format!("spot {:?} has an empty name", s.id)));
            }
            if !spot_ids.insert(s.id.as_str()) {
                return Err(IrError::Invalid(format!("duplicate spot id {:?}", s.id)));
            }
        }
        for (i, sc) in self.scenes.iter().enumerate() {
            if sc.index != i {
                return Err(IrError::Invalid(format!("scene {i} has index {}", sc.index)));
            }
            if !spot_ids.contains(sc.spot_id.as_str()) {
                return Err(IrError::Invalid(format!("scene {i} refers to unknown spot {:?}", sc.spot_id)));
            }
        }
        let mut prev: Option<(usize, usize)> = None;
        for (i, d) in self.dialogues.iter().enumerate() {
            if d.id != i {
                return Err(IrError::Invalid(format!("segment at position {i} has id {}", d.id)));
            }
            if !ids.contains(d.speaker_id.as_str()) {
                return Err(IrError::Invalid(format!("segment {i}: unknown speaker {:?}", d.speaker_id)));
            }
            if !spot_ids.contains(d.spot_id.as_str()) {
                return Err(IrError::Invalid(format!("segment {i}: unknown spot {:?}", d.spot_id)));
            }
            for a in &d.addressee_ids {
                if !ids.contains(a.as_str()) {
                    return Err(IrError::Invalid(format!("segment {i}: unknown addressee {a:?}")));
                }
            }
            if d.line.trim().is_empty() {
                return Err(IrError::Invalid(format!("segment {i}: empty line")));
            }
            if d.page >= self.raw.pages.len() {
                return Err(IrError::Invalid(format!("segment {i}: page {} out of range", d.page)));
            }
            match self.scenes.get(d.scene) {
                Some(sc) if sc.spot_id == d.spot_id => {}
                _ => return Err(IrError::Invalid(format!("segment {i}: scene {} mismatch", d.scene))),
            }
            if let Some(p) = prev {
                if (d.page, d.scene) < p {
                    return Err(IrError::Invalid(format!("segment {i} is out of order")));
                }
            }
            prev = Some((d.page, d.scene));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("script IR serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}
