//! Project database with alias and lexical indices.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{DirectorError, DirectorEvent};
use crate::script_ir::{normalize_name, CharacterRecord, DialogueSegment, ScriptIR, SpotRecord};

/// Default number of earlier segments supplied as context.
pub const DEFAULT_WINDOW: usize = 6;

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "from", "has", "have", "he", "her", "his", "i",
    "in", "is", "it", "its", "me", "my", "of", "on", "or", "she", "so", "that", "the", "their", "them", "they",
    "this", "to", "was", "we", "were", "with", "you", "your",
];

const ARTICLES: &[&str] = &["the-", "a-", "an-"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "lowercase")]
pub enum RecordRef {
    Character(String),
    Spot(String),
}

/// Position of an indexed record; orders characters, then spots, then
/// dialogue segments, each by declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RecordKey {
    Character(usize),
    Spot(usize),
    Dialogue(usize),
}

/// Content words of a text as slugs.
pub fn content_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| c.is_whitespace() || c == '-' || c == '/')
        .filter_map(|w| normalize_name(w).ok())
        .filter(|t| t.len() > 1 && !STOPWORDS.contains(&t.as_str()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementDatabase {
    pub characters: Vec<CharacterRecord>,
    pub spots: Vec<SpotRecord>,
    pub dialogues: Vec<DialogueSegment>,
    pub alias_index: BTreeMap<String, RecordRef>,
    pub lexical_index: BTreeMap<String, BTreeSet<RecordKey>>,
    /// Aliases claimed by more than one record while indexing.
    pub events: Vec<DirectorEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedContext {
    pub segment_id: usize,
    pub speaker: CharacterRecord,
    pub addressees: Vec<CharacterRecord>,
    pub spot: SpotRecord,
    pub recent_segments: Vec<DialogueSegment>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Match {
    pub record: RecordRef,
    pub exact_alias: bool,
    pub overlap: usize,
}

fn alias_keys(surface: &str) -> Vec<String> {
    let Ok(slug) = normalize_name(surface) else {
        return Vec::new();
    };
    let mut keys = vec![slug.clone()];
    for a in ARTICLES {
        if let Some(rest) = slug.strip_prefix(a) {
            keys.push(rest.to_string());
        }
    }
    keys
}

impl ElementDatabase {
    pub fn build(characters: Vec<CharacterRecord>, spots: Vec<SpotRecord>, dialogues: Vec<DialogueSegment>) -> Self {
        let mut alias_index: BTreeMap<String, RecordRef> = BTreeMap::new();
        let mut events = Vec::new();
        let mut claim = |key: String, r: RecordRef, events: &mut Vec<DirectorEvent>| match alias_index.get(&key) {
            None => {
                alias_index.insert(key, r);
            }
            Some(existing) if *existing != r => events.push(DirectorEvent::DuplicateAlias {
                alias: key,
                kept: existing.clone(),
                dropped: r,
            }),
            Some(_) => {}
        };
        for c in &characters {
            for form in c.surface_forms() {
                for key in alias_keys(form) {
                    claim(key, RecordRef::Character(c.id.clone()), &mut events);
                }
            }
        }
        for s in &spots {
            for key in alias_keys(&s.name) {
                claim(key, RecordRef::Spot(s.id.clone()), &mut events);
            }
        }

        let mut lexical_index: BTreeMap<String, BTreeSet<RecordKey>> = BTreeMap::new();
        let mut add = |text: &str, key: RecordKey| {
            for t in content_tokens(text) {
                lexical_index.entry(t).or_default().insert(key);
            }
        };
        for (i, c) in characters.iter().enumerate() {
            let k = RecordKey::Character(i);
            for form in c.surface_forms() {
                add(form, k);
            }
            add(&c.coarse_description, k);
            for f in crate::script_ir::ProfileField::ALL {
                add(c.refined_profile.get(f), k);
            }
        }
        for (i, s) in spots.iter().enumerate() {
            let k = RecordKey::Spot(i);
            add(&s.name, k);
            add(&s.description, k);
            add(&s.refined_details, k);
        }
        for (i, d) in dialogues.iter().enumerate() {
            add(&d.line, RecordKey::Dialogue(i));
        }

        ElementDatabase { characters, spots, dialogues, alias_index, lexical_index, events }
    }

    pub fn from_ir(ir: &ScriptIR) -> Self {
        Self::build(ir.characters.clone(), ir.spots.clone(), ir.dialogues.clone())
    }

    /// Rebuilds both indices from the records alone.
    pub fn rebuild(&self) -> Self {
        Self::build(self.characters.clone(), self.spots.clone(), self.dialogues.clone())
    }

    pub fn character(&self, id: &str) -> Option<&CharacterRecord> {
        self.characters.iter().find(|c| c.id == id)
    }

    pub fn spot(&self, id: &str) -> Option<&SpotRecord> {
        self.spots.iter().find(|s| s.id == id)
    }

    /// Character and spot records ranked for a free-text query: exact alias
    /// match first, then by number of shared content tokens, then by
    /// declaration order. Records sharing nothing with the query are left out.
    pub fn lookup(&self, query: &str) -> Vec<Match> {
        // a cue extension such as "(V.O.)" is not part of the name
        let bare = match query.trim_end().strip_suffix(')').and_then(|q| q.rfind('(').map(|i| &q[..i])) {
            Some(name) if !name.trim().is_empty() => name.trim(),
            _ => query,
        };
        let exact: Option<&RecordRef> = alias_keys(bare).iter().find_map(|k| self.alias_index.get(k));
        let mut overlap: BTreeMap<RecordKey, usize> = BTreeMap::new();
        let tokens: BTreeSet<String> = content_tokens(bare).into_iter().collect();
        for t in &tokens {
            if let Some(keys) = self.lexical_index.get(t) {
                for k in keys {
                    if !matches!(k, RecordKey::Dialogue(_)) {
                        *overlap.entry(*k).or_default() += 1;
                    }
                }
            }
        }
        let refer = |k: &RecordKey| match k {
            RecordKey::Character(i) => RecordRef::Character(self.characters[*i].id.clone()),
            RecordKey::Spot(i) => RecordRef::Spot(self.spots[*i].id.clone()),
            RecordKey::Dialogue(_) => unreachable!("dialogues are filtered out"),
        };
        let mut ranked: Vec<(bool, usize, RecordKey)> = Vec::new();
        for i in 0..self.characters.len() {
            let k = RecordKey::Character(i);
            ranked.push((exact == Some(&refer(&k)), overlap.get(&k).copied().unwrap_or(0), k));
        }
        for i in 0..self.spots.len() {
            let k = RecordKey::Spot(i);
            ranked.push((exact == Some(&refer(&k)), overlap.get(&k).copied().unwrap_or(0), k));
        }
        ranked.retain(|(e, o, _)| *e || *o > 0);
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));
        ranked
            .into_iter()
            .map(|(e, o, k)| Match { record: refer(&k), exact_alias: e, overlap: o })
            .collect()
    }

    /// Speaker, addressees, spot and up to `window` earlier segments of the
    /// same uninterrupted run at the segment's spot.
    pub fn retrieve_context(&self, segment_id: usize, window: usize) -> Result<RetrievedContext, DirectorError> {
        let pos = self
            .dialogues
            .iter()
            .position(|d| d.id == segment_id)
            .ok_or(DirectorError::UnknownSegment(segment_id))?;
        let seg = &self.dialogues[pos];
        let missing = |what: &str, id: &str| DirectorError::UnknownRecord(format!("{what} {id:?} of segment {segment_id}"));
        let speaker = self.character(&seg.speaker_id).ok_or_else(|| missing("speaker", &seg.speaker_id))?.clone();
        let mut addressees = Vec::new();
        for a in seg.addressee_ids.iter().filter(|a| **a != seg.speaker_id) {
            let rec = self.character(a).ok_or_else(|| missing("addressee", a))?;
            if !addressees.iter().any(|x: &CharacterRecord| x.id == rec.id) {
                addressees.push(rec.clone());
            }
        }
        let spot = self.spot(&seg.spot_id).ok_or_else(|| missing("spot", &seg.spot_id))?.clone();
        let mut start = pos;
        while start > 0
            && pos - start < window
            && self.dialogues[start - 1].spot_id == seg.spot_id
            && self.dialogues[start - 1].scene == seg.scene
        {
            start -= 1;
        }
        Ok(RetrievedContext {
            segment_id,
            speaker,
            addressees,
            spot,
            recent_segments: self.dialogues[start..pos].to_vec(),
        })
    }
}
