//! Canned "model" behind the mock chat backend.
//!
//! The responder recognises which instruction it was given from the
//! `TASK: <id>` line of the system prompt and answers in the same shape a
//! real model is asked for: a line of reasoning followed by one fenced
//! JSON block. The answers are schema-valid but deliberately imperfect in
//! one respect: refinement replies sometimes propose blanking or changing
//! fields that are already filled, which the director must ignore.

use regex::Regex;
use serde_json::{json, Value};
use std::sync::LazyLock;

use crate::digest::hash64;
use crate::script_ir::normalize_name;

const AGE: &[&str] = &["early twenties", "late twenties", "early thirties", "mid forties", "late fifties", "late teens"];
const HAIR: &[&str] = &[
    "short black hair",
    "shoulder-length brown hair",
    "curly red hair",
    "cropped grey hair",
    "long blond hair",
    "tousled dark hair",
];
const CLOTHING: &[&str] = &[
    "navy overcoat",
    "white linen shirt",
    "green wool sweater",
    "grey suit",
    "yellow raincoat",
    "denim jacket",
];
const BUILD: &[&str] = &["slender", "tall and lanky", "stocky", "athletic", "petite", "broad-shouldered"];
const FEATURES: &[&str] = &[
    "round glasses",
    "a faint scar on the chin",
    "freckles",
    "a trimmed beard",
    "silver earrings",
    "dimples",
];
const SPOT_DETAILS: &[&str] = &[
    "warm tungsten light and wood panelling",
    "cold blue moonlight on wet cobblestones",
    "bright overcast daylight and pale walls",
    "late sun through tall windows",
    "neon signs reflected in puddles",
    "dusty shelves and a single hanging bulb",
];

/// Chance, in percent, that a refinement reply proposes emptying a field
/// that already has a value.
const BLANKING_PERCENT: u64 = 20;

const SPEECH_VERBS: &[&str] = &[
    "said", "says", "asked", "asks", "replied", "replies", "answered", "cried", "whispered", "shouted", "murmured",
    "called", "added", "continued", "exclaimed", "muttered", "repeated", "insisted", "began", "went", "warned",
    "sighed", "laughed", "agreed", "explained", "admitted", "protested", "snapped",
];
const PRONOUNS: &[&str] = &["he", "she", "they", "i", "we", "you", "it"];

static TASK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"TASK:\s*(\w+)").unwrap());
static QUOTE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#""([^"\n]+)"|“([^”]+)”"#).unwrap());
static ROUND: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"Refinement round:\s*(\d+)").unwrap());

pub fn respond(seed: u64, system: &str, user: &str) -> String {
    let task = TASK
        .captures(system)
        .map(|c| c[1].to_string())
        .unwrap_or_default();
    let (reasoning, answer) = match task.as_str() {
        "I0_extract" => extract(user),
        "I1_refine" => refine(seed, user),
        "I2_view_select" => view_select(user),
        "I3_boundary" => ("The planned boxes already respect the thirds lines.".to_string(), json!({"adjustments": []})),
        "I4_compose" => ("Compose the panel as laid out.".to_string(), json!({"description": "as planned"})),
        _ => ("No recognised task.".to_string(), json!({})),
    };
    format!(
        "Reasoning: {reasoning}\n\n```json\n{}\n```\n",
        serde_json::to_string_pretty(&answer).expect("json")
    )
}

fn between<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = text.find(open)? + open.len();
    let end = start + text[start..].find(close)?;
    Some(text[start..end].trim_matches('\n'))
}

fn pick(seed: u64, parts: &[&str], options: &[&'static str]) -> &'static str {
    let mut bytes: Vec<&[u8]> = parts.iter().map(|p| p.as_bytes()).collect();
    let s = seed.to_le_bytes();
    bytes.push(&s);
    options[(hash64(&bytes) % options.len() as u64) as usize]
}

fn chance(seed: u64, parts: &[&str], percent: u64) -> bool {
    let mut bytes: Vec<&[u8]> = parts.iter().map(|p| p.as_bytes()).collect();
    let s = seed.to_le_bytes();
    bytes.push(&s);
    bytes.push(b"chance");
    hash64(&bytes) % 100 < percent
}

fn refine(seed: u64, user: &str) -> (String, Value) {
    let round = ROUND
        .captures(user)
        .map(|c| c[1].to_string())
        .unwrap_or_else(|| "1".into());
    let record: Value = between(user, "<<<RECORD", "RECORD>>>")
        .and_then(|r| serde_json::from_str(r).ok())
        .unwrap_or(Value::Null);
    let id = record["id"].as_str().unwrap_or("unknown").to_string();
    if record["kind"] == "spot" {
        let details = pick(seed, &[&id, "details", &round], SPOT_DETAILS);
        return (format!("The setting {id} needs lighting and texture."), json!({"details": details}));
    }
    let mut profile = serde_json::Map::new();
    for (field, vocab) in [
        ("age_band", AGE),
        ("hair", HAIR),
        ("clothing", CLOTHING),
        ("build", BUILD),
        ("features", FEATURES),
    ] {
        let current = record["profile"][field].as_str().unwrap_or("");
        let proposal = if !current.is_empty() && chance(seed, &[&id, field, &round], BLANKING_PERCENT) {
            ""
        } else {
            pick(seed, &[&id, field, &round], vocab)
        };
        profile.insert(field.to_string(), Value::String(proposal.to_string()));
    }
    (
        format!("Infer a plausible look for {id} from the excerpts, round {round}."),
        json!({"profile": profile}),
    )
}

fn view_select(user: &str) -> (String, Value) {
    let candidates: Value = between(user, "<<<CANDIDATES", "CANDIDATES>>>")
        .and_then(|c| serde_json::from_str(c).ok())
        .unwrap_or(Value::Null);
    let first = candidates[0]["view_index"].as_u64().unwrap_or(0);
    ("The best geometric candidate already fits the shot.".into(), json!({"view_index": first}))
}

fn extract(user: &str) -> (String, Value) {
    let script = between(user, "<<<SCRIPT", "SCRIPT>>>").unwrap_or("");
    let prose = user.contains("Source kind: prose");
    if !prose {
        return (
            "Screenplay structure already identifies cues and headings; nothing to add.".into(),
            json!({"characters": [], "spots": [], "dialogues": []}),
        );
    }
    let (characters, dialogues) = attribute_quotes(script);
    (
        "Find each quotation, then the speech verb and its subject next to it; unattributed lines alternate between the last two speakers."
            .into(),
        json!({"characters": characters, "spots": [], "dialogues": dialogues}),
    )
}

fn words(s: &str) -> Vec<&str> {
    s.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'' && c != '-'))
        .filter(|w| !w.is_empty())
        .collect()
}

fn is_verb(w: &str) -> bool {
    SPEECH_VERBS.contains(&w.to_lowercase().as_str())
}

/// Name phrase without article or trailing adverbs; `None` for pronouns.
fn clean_name(ws: &[&str]) -> Option<(String, bool)> {
    let mut ws: Vec<&str> = ws.to_vec();
    while ws.last().is_some_and(|w| w.len() > 3 && w.ends_with("ly")) {
        ws.pop();
    }
    let mut article = false;
    if ws
        .first()
        .is_some_and(|w| ["the", "a", "an"].contains(&w.to_lowercase().as_str()))
    {
        ws.remove(0);
        article = true;
    }
    if ws.is_empty() || ws.len() > 4 {
        return None;
    }
    if ws.len() == 1 && PRONOUNS.contains(&ws[0].to_lowercase().as_str()) {
        return None;
    }
    Some((ws.join(" "), article))
}

fn clause_after(text: &str) -> &str {
    let end = text
        .find(['.', '!', '?', ';', '\n', '"', '“', ':'])
        .unwrap_or(text.len());
    let clause = &text[..end];
    // "..., said Anna, turning away" keeps only the first comma clause
    let clause = clause.trim_start_matches([',', ' ']);
    clause.split(',').next().unwrap_or("")
}

fn clause_before(text: &str) -> &str {
    let start = text
        .rfind(['.', '!', '?', '\n', '"', '”'])
        .map(|i| i + text[i..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(0);
    text[start..].trim_end_matches([':', ',', ' '])
}

fn attribution(after: &str, before: &str) -> Option<(String, bool)> {
    let a = words(clause_after(after));
    if let Some(first) = a.first() {
        if is_verb(first) {
            return clean_name(&a[1..]);
        }
        if let Some(pos) = a.iter().position(|w| is_verb(w)) {
            return clean_name(&a[..pos]);
        }
    }
    let b = words(clause_before(before));
    if let Some(pos) = b.iter().rposition(|w| is_verb(w)) {
        if pos == b.len() - 1 {
            return clean_name(&b[..pos]);
        }
        if pos == 0 {
            return clean_name(&b[1..]);
        }
    }
    None
}

fn attribute_quotes(script: &str) -> (Vec<Value>, Vec<Value>) {
    let mut characters: Vec<(String, String, Vec<String>)> = Vec::new(); // (id, name, aliases)
    let mut dialogues = Vec::new();
    let mut speakers: Vec<String> = Vec::new();
    let mut prev_end = 0;
    let matches: Vec<_> = QUOTE.captures_iter(script).collect();
    for (k, cap) in matches.iter().enumerate() {
        let whole = cap.get(0).unwrap();
        let inner = cap.get(1).or_else(|| cap.get(2)).unwrap().as_str().trim();
        let next_start = matches
            .get(k + 1)
            .map(|m| m.get(0).unwrap().start())
            .unwrap_or(script.len());
        let after = &script[whole.end()..next_start];
        let before = &script[prev_end..whole.start()];
        prev_end = whole.end();

        let speaker = match attribution(after, before) {
            Some((name, article)) => {
                let id = normalize_name(&name).unwrap_or_default();
                match characters.iter_mut().find(|c| c.0 == id) {
                    Some(c) => {
                        if article && !c.2.iter().any(|a| a == &format!("the {name}")) {
                            c.2.push(format!("the {name}"));
                        }
                        Some(c.1.clone())
                    }
                    None => {
                        let aliases = if article { vec![format!("the {name}")] } else { vec![] };
                        characters.push((id, name.clone(), aliases));
                        Some(name)
                    }
                }
            }
            None => {
                let n = speakers.len();
                (n >= 2 && speakers[n - 1] != speakers[n - 2]).then(|| speakers[n - 2].clone())
            }
        };
        let addressees: Vec<String> = match &speaker {
            Some(s) => speakers.iter().rev().find(|p| *p != s).cloned().into_iter().collect(),
            None => vec![],
        };
        if let Some(s) = &speaker {
            speakers.push(s.clone());
        }
        dialogues.push(json!({
            "speaker": speaker,
            "line": inner,
            "spot": null,
            "addressees": addressees,
            "parenthetical": null,
        }));
    }
    let characters = characters
        .into_iter()
        .map(|(_, name, aliases)| json!({"name": name, "aliases": aliases, "description": ""}))
        .collect();
    (characters, dialogues)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn final_json(reply: &str) -> Value {
        let start = reply.rfind("```json").unwrap() + 7;
        let end = start + reply[start..].find("```").unwrap();
        serde_json::from_str(&reply[start..end]).unwrap()
    }

    #[test]
    fn attributes_trailing_speech_verb() {
        let user = "Source kind: prose\n<<<SCRIPT\n\"Please draw me a sheep,\" said the little prince.\nSCRIPT>>>";
        let v = final_json(&respond(0, "TASK: I0_extract", user));
        assert_eq!(v["dialogues"][0]["speaker"], "little prince");
        assert_eq!(v["dialogues"][0]["line"], "Please draw me a sheep,");
        assert_eq!(v["characters"][0]["aliases"][0], "the little prince");
    }

    #[test]
    fn alternates_unattributed_lines() {
        let text = "\"Hello,\" said Anna. \"Hi,\" Ben replied. \"How are you?\" \"Fine.\"";
        let user = format!("Source kind: prose\n<<<SCRIPT\n{text}\nSCRIPT>>>");
        let v = final_json(&respond(0, "TASK: I0_extract", &user));
        let speakers: Vec<&str> = v["dialogues"]
            .as_array()
            .unwrap()
            .iter()
            .map(|d| d["speaker"].as_str().unwrap())
            .collect();
        assert_eq!(speakers, ["Anna", "Ben", "Anna", "Ben"]);
        assert_eq!(v["dialogues"][1]["addressees"][0], "Anna");
    }

    #[test]
    fn lone_unattributed_quote_has_no_speaker() {
        let user = "Source kind: prose\n<<<SCRIPT\nShe looked up. \"Who's there?\"\nSCRIPT>>>";
        let v = final_json(&respond(0, "TASK: I0_extract", user));
        assert!(v["dialogues"][0]["speaker"].is_null());
    }

    #[test]
    fn refinement_is_deterministic_per_seed() {
        let user = "Refinement round: 1\n<<<RECORD\n{\"kind\":\"character\",\"id\":\"anna\",\"profile\":{}}\nRECORD>>>";
        let a = respond(4, "TASK: I1_refine", user);
        assert_eq!(a, respond(4, "TASK: I1_refine", user));
        let v = final_json(&a);
        for f in ["age_band", "hair", "clothing", "build", "features"] {
            assert!(!v["profile"][f].as_str().unwrap().is_empty());
        }
    }
}
