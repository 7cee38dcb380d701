use serde::{Deserialize, Serialize};

use super::CinemaError;
use crate::script_ir::{CharacterRecord, InteriorExterior, ProfileField, SpotRecord, TimeOfDay};

pub const MAX_PROMPT_CHARS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Portrait,
    Landscape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Framing {
    FullBody,
    HalfBody,
    HeadAndShoulders,
}

/// Shared prompt scaffolding applied to every entity of one kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasePromptConfig {
    pub orientation: Orientation,
    pub framing: Framing,
    pub style_suffix: String,
    pub negative_terms: Vec<String>,
}

const STYLE: &str = "storyboard illustration, clean line art, soft flat colors, consistent character design";

impl BasePromptConfig {
    /// Full-body portrait on plain white, so figures can be keyed out later.
    pub fn characters() -> Self {
        BasePromptConfig {
            orientation: Orientation::Portrait,
            framing: Framing::FullBody,
            style_suffix: STYLE.into(),
            negative_terms: vec![
                "background clutter".into(),
                "scenery".into(),
                "text".into(),
                "watermark".into(),
                "cropped limbs".into(),
            ],
        }
    }

    pub fn spots() -> Self {
        BasePromptConfig {
            orientation: Orientation::Landscape,
            framing: Framing::FullBody,
            style_suffix: STYLE.into(),
            negative_terms: vec!["people".into(), "text".into(), "watermark".into()],
        }
    }

    pub fn negative_prompt(&self) -> String {
        self.negative_terms.join(", ")
    }

    /// Pixel size requested from the image backend.
    pub fn dimensions(&self) -> (u32, u32) {
        match self.orientation {
            Orientation::Portrait => (512, 768),
            Orientation::Landscape => (1024, 576),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum PromptSubject<'a> {
    Character(&'a CharacterRecord),
    Spot(&'a SpotRecord),
}

fn first_sentence(text: &str) -> &str {
    let text = text.lines().next().unwrap_or("").trim();
    match text.find(". ") {
        Some(i) => &text[..=i],
        None => text,
    }
}

fn framing_clause(cfg: &BasePromptConfig, subject: &PromptSubject<'_>) -> String {
    let orientation = match cfg.orientation {
        Orientation::Portrait => "portrait orientation",
        Orientation::Landscape => "landscape orientation",
    };
    match subject {
        PromptSubject::Character(_) => {
            let framing = match cfg.framing {
                Framing::FullBody => "full body",
                Framing::HalfBody => "half body",
                Framing::HeadAndShoulders => "head and shoulders",
            };
            format!("{framing}, standing, facing the viewer, {orientation}, plain white background")
        }
        PromptSubject::Spot(_) => format!("wide establishing view, {orientation}, no people"),
    }
}

fn profile_part(subject: &PromptSubject<'_>) -> Result<String, CinemaError> {
    match subject {
        PromptSubject::Character(c) => {
            if c.refinement_round == 0 {
                return Err(CinemaError::UnrefinedRecord(c.id.clone()));
            }
            let mut parts = vec![c.name.trim().to_string()];
            for f in [
                ProfileField::AgeBand,
                ProfileField::Hair,
                ProfileField::Clothing,
                ProfileField::Build,
                ProfileField::Features,
            ] {
                let v = c.refined_profile.get(f).trim();
                if !v.is_empty() {
                    parts.push(v.to_string());
                }
            }
            Ok(parts.join(", "))
        }
        PromptSubject::Spot(s) => {
            let mut parts = vec![s.name.trim().to_string()];
            match s.interior_exterior {
                InteriorExterior::Interior => parts.push("interior".into()),
                InteriorExterior::Exterior => parts.push("exterior".into()),
                InteriorExterior::Unknown => {}
            }
            match s.time_of_day {
                TimeOfDay::Day => parts.push("day".into()),
                TimeOfDay::Night => parts.push("night".into()),
                TimeOfDay::Unknown => {}
            }
            for extra in [s.refined_details.trim(), first_sentence(&s.description)] {
                if !extra.is_empty() {
                    parts.push(extra.to_string());
                }
            }
            Ok(parts.join(", "))
        }
    }
}

fn truncate_chars(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Profile fields in fixed order, then the framing clause, then the style
/// suffix. Over-long prompts lose the end of the suffix first.
pub fn build_base_prompt(subject: PromptSubject<'_>, cfg: &BasePromptConfig) -> Result<String, CinemaError> {
    let head = format!("{}, {}", profile_part(&subject)?, framing_clause(cfg, &subject));
    let head = truncate_chars(&head, MAX_PROMPT_CHARS).to_string();
    let suffix = cfg.style_suffix.trim();
    if suffix.is_empty() {
        return Ok(head);
    }
    let room = MAX_PROMPT_CHARS.saturating_sub(head.chars().count() + 2);
    let suffix = truncate_chars(suffix, room).trim_end();
    if suffix.is_empty() {
        Ok(head)
    } else {
        Ok(format!("{head}, {suffix}"))
    }
}
