//! Coarse-to-fine enrichment of character and spot records.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};

use super::grounding::grounded_fields;
use super::prompts::{PromptId, PromptSet};
use super::reply::ask;
use super::{DirectorError, DirectorEvent};
use crate::backends::Backend;
use crate::script_ir::{CharacterRecord, ProfileField, ScriptIR, SpotRecord};

/// Coarse pass then detail pass.
pub const DEFAULT_ROUNDS: u32 = 2;

/// Dialogue lines of a character quoted back as context.
const CONTEXT_LINES: usize = 3;

#[derive(Debug, Deserialize)]
struct RefineReply {
    #[serde(default)]
    profile: Option<BTreeMap<String, String>>,
    #[serde(default)]
    details: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Character(usize),
    Spot(usize),
}

/// Every character and spot, in declaration order.
pub fn all_targets(ir: &ScriptIR) -> Vec<String> {
    ir.characters
        .iter()
        .map(|c| c.id.clone())
        .chain(ir.spots.iter().map(|s| s.id.clone()))
        .collect()
}

fn resolve(ir: &ScriptIR, id: &str) -> Result<Target, DirectorError> {
    if let Some(i) = ir.characters.iter().position(|c| c.id == id) {
        return Ok(Target::Character(i));
    }
    if let Some(i) = ir.spots.iter().position(|s| s.id == id) {
        return Ok(Target::Spot(i));
    }
    Err(DirectorError::UnknownRecord(id.to_string()))
}

enum Refined {
    Character(usize, CharacterRecord),
    Spot(usize, SpotRecord),
}

struct Outcome {
    record: Refined,
    log: Vec<String>,
    events: Vec<DirectorEvent>,
}

/// Refines the targeted records for `rounds` passes. Text-grounded values
/// are written first and never replaced; the backend only fills fields
/// that are still empty. Distinct records are refined concurrently and
/// merged back in target order.
pub fn refine_entities(
    ir: &ScriptIR,
    targets: &[String],
    rounds: u32,
    prompts: &PromptSet,
    backend: &dyn Backend,
    log: &mut Vec<String>,
) -> Result<(ScriptIR, Vec<DirectorEvent>), DirectorError> {
    if rounds == 0 {
        return Err(DirectorError::InvalidArgument("rounds must be at least 1".into()));
    }
    let resolved: Vec<Target> = targets.iter().map(|t| resolve(ir, t)).collect::<Result<_, _>>()?;
    let outcomes: Vec<Result<Outcome, DirectorError>> = resolved
        .par_iter()
        .map(|t| match t {
            Target::Character(i) => refine_character(ir, *i, rounds, prompts, backend),
            Target::Spot(i) => refine_spot(ir, *i, rounds, prompts, backend),
        })
        .collect();

    let mut out = ir.clone();
    let mut events = Vec::new();
    for o in outcomes {
        let o = o?;
        log.extend(o.log);
        for e in &o.events {
            log.push(format!("[event] {e}"));
        }
        events.extend(o.events);
        match o.record {
            Refined::Character(i, c) => out.characters[i] = c,
            Refined::Spot(i, s) => out.spots[i] = s,
        }
    }
    out.validate()?;
    Ok((out, events))
}

fn context_for(ir: &ScriptIR, speaker: Option<&str>, description: &str) -> String {
    let mut parts = Vec::new();
    if !description.trim().is_empty() {
        parts.push(description.trim().to_string());
    }
    if let Some(id) = speaker {
        parts.extend(
            ir.dialogues
                .iter()
                .filter(|d| d.speaker_id == id)
                .take(CONTEXT_LINES)
                .map(|d| format!("\"{}\"", d.line)),
        );
    }
    if parts.is_empty() {
        "(none)".into()
    } else {
        parts.join("\n")
    }
}

fn refine_character(
    ir: &ScriptIR,
    idx: usize,
    rounds: u32,
    prompts: &PromptSet,
    backend: &dyn Backend,
) -> Result<Outcome, DirectorError> {
    let mut rec = ir.characters[idx].clone();
    let mut log = Vec::new();
    let mut events = Vec::new();
    let grounded = grounded_fields(&rec.coarse_description, &ir.characters, idx);
    for (field, value) in &grounded {
        let slot = rec.refined_profile.get_mut(*field);
        if slot.trim().is_empty() {
            *slot = value.clone();
        }
    }
    let grounded_text = if grounded.is_empty() {
        "(none)".to_string()
    } else {
        grounded.iter().map(|(f, v)| format!("- {}: {v}", f.key())).collect::<Vec<_>>().join("\n")
    };
    let context = context_for(ir, Some(&rec.id), &rec.coarse_description);

    for _ in 0..rounds {
        let round = (rec.refinement_round + 1).to_string();
        let record = json!({
            "kind": "character",
            "id": rec.id,
            "name": rec.name,
            "aliases": rec.aliases,
            "profile": rec.refined_profile,
        });
        let user = prompts.get(PromptId::Refine).render(&[
            ("record_kind", "character"),
            ("record", &serde_json::to_string_pretty(&record).expect("json")),
            ("grounded", &grounded_text),
            ("context", &context),
            ("round", &round),
        ])?;
        let label = format!("{} round {round}", rec.id);
        let proposal = ask(backend, PromptId::Refine, &user, &label, &mut log, |v: Value| {
            let r: RefineReply = serde_json::from_value(v).map_err(|e| format!("refinement schema: {e}"))?;
            r.profile.ok_or_else(|| "missing \"profile\" object".to_string())
        })?;
        for field in ProfileField::ALL {
            let proposed = proposal.get(field.key()).map(|s| s.trim()).unwrap_or("");
            if let Some(g) = grounded.get(&field) {
                if !proposed.is_empty() && proposed != g {
                    events.push(DirectorEvent::ContradictionDetected {
                        record: rec.id.clone(),
                        field,
                        grounded: g.clone(),
                        proposed: proposed.to_string(),
                    });
                }
                continue;
            }
            let slot = rec.refined_profile.get_mut(field);
            if slot.trim().is_empty() && !proposed.is_empty() {
                *slot = proposed.to_string();
            }
        }
        rec.refinement_round += 1;
    }
    let gaps = rec.refined_profile.gaps();
    if !gaps.is_empty() {
        let names: Vec<&str> = gaps.iter().map(|f| f.key()).collect();
        return Err(DirectorError::SchemaViolation(format!(
            "character {} still lacks {} after {rounds} round(s)",
            rec.id,
            names.join(", ")
        )));
    }
    Ok(Outcome { record: Refined::Character(idx, rec), log, events })
}

fn refine_spot(
    ir: &ScriptIR,
    idx: usize,
    rounds: u32,
    prompts: &PromptSet,
    backend: &dyn Backend,
) -> Result<Outcome, DirectorError> {
    let mut rec = ir.spots[idx].clone();
    let mut log = Vec::new();
    let context = context_for(ir, None, &rec.description);
    for _ in 0..rounds {
        let round = (rec.refinement_round + 1).to_string();
        let record = json!({
            "kind": "spot",
            "id": rec.id,
            "name": rec.name,
            "interior_exterior": rec.interior_exterior,
            "time_of_day": rec.time_of_day,
            "details": rec.refined_details,
        });
        let user = prompts.get(PromptId::Refine).render(&[
            ("record_kind", "spot"),
            ("record", &serde_json::to_string_pretty(&record).expect("json")),
            ("grounded", "(none)"),
            ("context", &context),
            ("round", &round),
        ])?;
        let label = format!("{} round {round}", rec.id);
        let details = ask(backend, PromptId::Refine, &user, &label, &mut log, |v: Value| {
            let r: RefineReply = serde_json::from_value(v).map_err(|e| format!("refinement schema: {e}"))?;
            Ok(r.details.unwrap_or_default())
        })?;
        if rec.refined_details.trim().is_empty() && !details.trim().is_empty() {
            rec.refined_details = details.trim().to_string();
        }
        rec.refinement_round += 1;
    }
    Ok(Outcome { record: Refined::Spot(idx, rec), log, events: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::MockBackend;
    use crate::script_ir::parse_screenplay;

    const TEXT: &str = "INT. CAFE - DAY\n\nCELINE, early thirties, in a red dress, reads by the window.\n\nCELINE\nYou came back.\n\nJESSE\nI did.\n";

    #[test]
    fn one_round_fills_every_field() {
        let ir = parse_screenplay(TEXT).unwrap();
        let (out, _) =
            refine_entities(&ir, &["jesse".into()], 1, &PromptSet::default(), &MockBackend::new(3), &mut Vec::new())
                .unwrap();
        let j = out.character("jesse").unwrap();
        assert!(j.refined_profile.is_complete());
        assert_eq!(j.refinement_round, 1);
    }

    #[test]
    fn grounded_clothing_survives() {
        let ir = parse_screenplay(TEXT).unwrap();
        let (out, _) = refine_entities(&ir, &all_targets(&ir), 2, &PromptSet::default(), &MockBackend::new(9), &mut Vec::new())
            .unwrap();
        let c = out.character("celine").unwrap();
        assert_eq!(c.refined_profile.clothing, "red dress");
        assert_eq!(c.refined_profile.age_band, "early thirties");
        assert_eq!(c.refinement_round, 2);
        assert!(!out.spot("cafe").unwrap().refined_details.is_empty());
    }

    #[test]
    fn refining_a_complete_record_only_bumps_the_round() {
        let ir = parse_screenplay(TEXT).unwrap();
        let b = MockBackend::new(5);
        let (once, _) = refine_entities(&ir, &["jesse".into()], 1, &PromptSet::default(), &b, &mut Vec::new()).unwrap();
        let (twice, _) = refine_entities(&once, &["jesse".into()], 1, &PromptSet::default(), &b, &mut Vec::new()).unwrap();
        let (a, c) = (once.character("jesse").unwrap(), twice.character("jesse").unwrap());
        assert_eq!(a.refined_profile, c.refined_profile);
        assert_eq!(c.refinement_round, a.refinement_round + 1);
    }

    #[test]
    fn unknown_target_and_zero_rounds_are_rejected() {
        let ir = parse_screenplay(TEXT).unwrap();
        let b = MockBackend::new(0);
        assert!(matches!(
            refine_entities(&ir, &["nobody".into()], 1, &PromptSet::default(), &b, &mut Vec::new()),
            Err(DirectorError::UnknownRecord(_))
        ));
        assert!(refine_entities(&ir, &[], 0, &PromptSet::default(), &b, &mut Vec::new()).is_err());
    }
}
