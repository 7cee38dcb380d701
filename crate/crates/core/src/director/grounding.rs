//! Visual facts stated in the source text itself. Refinement treats these
//! as fixed: the backend may fill other gaps but never overrides them.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::{Regex, RegexBuilder};

use crate::script_ir::{CharacterRecord, ProfileField};

fn ci(pattern: &str) -> Regex {
    RegexBuilder::new(pattern).case_insensitive(true).build().expect("valid pattern")
}

const GARMENTS: &str = "dress|coat|overcoat|jacket|shirt|suit|sweater|jumper|raincoat|skirt|jeans|trousers|uniform|hat|scarf|gown|blouse|t-shirt|hoodie|vest|cardigan|boots|apron|tuxedo|cap";
const MARKS: &str = "glasses|spectacles|beard|moustache|mustache|scar|freckles|tattoo|earrings|dimples|mole|eyepatch|goatee|sunglasses";
const DECADES: &str = "teens|twenties|thirties|forties|fifties|sixties|seventies|eighties";

static CLOTHING: LazyLock<Regex> = LazyLock::new(|| {
    ci(&format!(
        r"\b(?:wearing|wears|dressed in|in)\s+(?:(?:an?|the|his|her|their)\s+)?((?:[a-z-]+\s+){{0,3}}(?:{GARMENTS}))\b"
    ))
});
static HAIR: LazyLock<Regex> = LazyLock::new(|| ci(r"\b((?:[a-z-]+\s+){0,3}hair)\b"));

static AGE: LazyLock<Regex> = LazyLock::new(|| {
    ci(&format!(r"\b((?:early|mid|late)[- ](?:{DECADES})|\d{{1,2}}[- ]year[- ]old|\d0s)\b"))
});
static BUILD: LazyLock<Regex> = LazyLock::new(|| {
    ci(r"\b(slender|slim|stocky|lanky|petite|heavyset|muscular|athletic|wiry|plump|broad-shouldered|burly|willowy)\b")
});
static FEATURES: LazyLock<Regex> = LazyLock::new(|| {
    ci(&format!(r"\b((?:[a-z-]+\s+){{0,3}}(?:{MARKS}))\b"))
});
static SENTENCE_END: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[.!?](?:\s+|$)").unwrap());

/// Words that end a descriptive phrase when read right to left.
const PHRASE_STOP: &[&str] = &[
    "with", "and", "wore", "her", "his", "their", "the", "a", "an", "has", "had", "of", "in", "wears", "wearing", "is",
];

/// Position of every mention of any character in `text`, in order.
fn mentions(text: &str, characters: &[CharacterRecord]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (ci, c) in characters.iter().enumerate() {
        for form in c.surface_forms() {
            let form = form.trim();
            if form.is_empty() {
                continue;
            }
            let re = RegexBuilder::new(&format!(r"\b{}\b", regex::escape(form)))
                .case_insensitive(true)
                .build()
                .expect("escaped pattern");
            out.extend(re.find_iter(text).map(|m| (m.start(), ci)));
        }
    }
    out.sort();
    out.dedup_by_key(|m| m.0);
    out
}

fn field_matches(sentence: &str) -> Vec<(usize, ProfileField, String)> {
    let mut out = Vec::new();
    for (field, re) in [
        (ProfileField::Clothing, &*CLOTHING),
        (ProfileField::AgeBand, &*AGE),
        (ProfileField::Build, &*BUILD),
    ] {
        for cap in re.captures_iter(sentence) {
            let g = cap.get(1).unwrap();
            out.push((g.start(), field, g.as_str().trim().to_string()));
        }
    }
    for (field, re, head) in [(ProfileField::Hair, &*HAIR, "hair"), (ProfileField::Features, &*FEATURES, "")] {
        for cap in re.captures_iter(sentence) {
            let g = cap.get(1).unwrap();
            // keep only the descriptive words: "has short dark hair" -> "short dark hair"
            let mut start = g.start();
            let mut offset = 0;
            for w in g.as_str().split_whitespace() {
                let at = g.as_str()[offset..].find(w).unwrap() + offset;
                offset = at + w.len();
                if PHRASE_STOP.contains(&w.to_lowercase().as_str()) {
                    start = g.start() + offset;
                }
            }
            let value = sentence[start..g.end()].trim();
            if value.len() > head.len() {
                out.push((start, field, value.to_string()));
            }
        }
    }
    out.sort_by_key(|m| m.0);
    out
}

/// Profile values stated verbatim in `text` for the character at index
/// `target`. Each stated fact belongs to the nearest character mentioned
/// before it, carrying over sentence boundaries. The first value found for
/// a field is kept.
pub fn grounded_fields(text: &str, characters: &[CharacterRecord], target: usize) -> BTreeMap<ProfileField, String> {
    let mut found = BTreeMap::new();
    for paragraph in text.split('\n') {
        let mut owner: Option<usize> = None;
        let mut start = 0;
        let mut bounds: Vec<(usize, usize)> = SENTENCE_END
            .find_iter(paragraph)
            .map(|m| {
                let b = (start, m.end());
                start = m.end();
                b
            })
            .collect();
        if start < paragraph.len() {
            bounds.push((start, paragraph.len()));
        }
        for (s, e) in bounds {
            let sentence = &paragraph[s..e];
            let ms = mentions(sentence, characters);
            for (pos, field, value) in field_matches(sentence) {
                let who = ms.iter().rev().find(|m| m.0 < pos).map(|m| m.1).or(owner);
                if who == Some(target) {
                    found.entry(field).or_insert(value);
                }
            }
            if let Some(last) = ms.last() {
                owner = Some(last.1);
            }
        }
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chars() -> Vec<CharacterRecord> {
        vec![
            CharacterRecord::new("jesse".into(), "JESSE".into()),
            CharacterRecord::new("celine".into(), "CELINE".into()),
        ]
    }

    #[test]
    fn facts_go_to_nearest_preceding_mention() {
        let text = "JESSE, in a navy coat, waves at CELINE, who wears a red dress. She has short dark hair and round glasses.";
        let c = chars();
        let celine = grounded_fields(text, &c, 1);
        assert_eq!(celine[&ProfileField::Clothing], "red dress");
        assert_eq!(celine[&ProfileField::Hair], "short dark hair");
        assert_eq!(celine[&ProfileField::Features], "round glasses");
        let jesse = grounded_fields(text, &c, 0);
        assert_eq!(jesse[&ProfileField::Clothing], "navy coat");
        assert_eq!(jesse.len(), 1);
    }

    #[test]
    fn age_and_build() {
        let text = "CELINE, early thirties and slender, reads.";
        let g = grounded_fields(text, &chars(), 1);
        assert_eq!(g[&ProfileField::AgeBand], "early thirties");
        assert_eq!(g[&ProfileField::Build], "slender");
    }

    #[test]
    fn unmentioned_character_gets_nothing() {
        assert!(grounded_fields("A man in a grey suit passes.", &chars(), 0).is_empty());
    }
}
