//! Instruction templates with `{slot}` placeholders. `{{` and `}}` stand
//! for literal braces.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use super::DirectorError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PromptId {
    Extract,
    Refine,
    ViewSelect,
    Boundary,
    Compose,
}

impl PromptId {
    pub const ALL: [PromptId; 5] = [
        PromptId::Extract,
        PromptId::Refine,
        PromptId::ViewSelect,
        PromptId::Boundary,
        PromptId::Compose,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptId::Extract => "I0_extract",
            PromptId::Refine => "I1_refine",
            PromptId::ViewSelect => "I2_view_select",
            PromptId::Boundary => "I3_boundary",
            PromptId::Compose => "I4_compose",
        }
    }

    pub fn slots(self) -> &'static [&'static str] {
        match self {
            PromptId::Extract => &["source_kind", "script"],
            PromptId::Refine => &["record_kind", "record", "grounded", "context", "round"],
            PromptId::ViewSelect => &["shot", "subject", "candidates", "context"],
            PromptId::Boundary => &["shot", "layout"],
            PromptId::Compose => &["shot", "caption", "layout"],
        }
    }

    pub fn requires_cot(self) -> bool {
        matches!(self, PromptId::Extract | PromptId::Refine)
    }

    fn default_text(self) -> &'static str {
        match self {
            PromptId::Extract => include_str!("../../prompts/I0_extract.txt"),
            PromptId::Refine => include_str!("../../prompts/I1_refine.txt"),
            PromptId::ViewSelect => include_str!("../../prompts/I2_view_select.txt"),
            PromptId::Boundary => include_str!("../../prompts/I3_boundary.txt"),
            PromptId::Compose => include_str!("../../prompts/I4_compose.txt"),
        }
    }

    /// System message sent with every request of this kind.
    pub fn system_prompt(self) -> String {
        let role = match self {
            PromptId::Extract | PromptId::Refine => "the script director of a storyboard team",
            _ => "the storyboard artist of a storyboard team",
        };
        let style = if self.requires_cot() {
            "Reason step by step in plain text first."
        } else {
            "Keep any reasoning to a sentence or two."
        };
        format!(
            "You are {role}.\nTASK: {}\n{style} End your reply with exactly one fenced ```json block; \
             only that block is read.",
            self.as_str()
        )
    }
}

impl fmt::Display for PromptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: PromptId,
    pub template: String,
    pub requires_cot: bool,
    pieces: Vec<Piece>,
}

fn tokenize(template: &str) -> Result<Vec<Piece>, String> {
    let mut pieces = Vec::new();
    let mut text = String::new();
    let mut chars = template.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' if chars.peek() == Some(&'{') => {
                chars.next();
                text.push('{');
            }
            '}' if chars.peek() == Some(&'}') => {
                chars.next();
                text.push('}');
            }
            '{' => {
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some('}') => break,
                        Some(ch) if ch.is_ascii_lowercase() || ch == '_' || ch.is_ascii_digit() => name.push(ch),
                        Some(ch) => return Err(format!("unexpected {ch:?} inside placeholder")),
                        None => return Err("unterminated placeholder".into()),
                    }
                }
                if name.is_empty() {
                    return Err("empty placeholder {}".into());
                }
                pieces.push(Piece::Text(std::mem::take(&mut text)));
                pieces.push(Piece::Slot(name));
            }
            '}' => return Err("stray '}' (write '}}' for a literal brace)".into()),
            _ => text.push(c),
        }
    }
    pieces.push(Piece::Text(text));
    Ok(pieces)
}

impl PromptTemplate {
    /// Parses a template and checks its placeholders against the slot set
    /// documented for `id`.
    pub fn new(id: PromptId, template: &str) -> Result<Self, DirectorError> {
        let pieces = tokenize(template).map_err(|e| DirectorError::Template(format!("{id}: {e}")))?;
        let found: BTreeSet<&str> = pieces
            .iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s.as_str()),
                Piece::Text(_) => None,
            })
            .collect();
        let expected: BTreeSet<&str> = id.slots().iter().copied().collect();
        if found != expected {
            return Err(DirectorError::Template(format!(
                "{id}: placeholders {found:?} do not match the slot set {expected:?}"
            )));
        }
        Ok(PromptTemplate {
            id,
            template: template.to_string(),
            requires_cot: id.requires_cot(),
            pieces,
        })
    }

    pub fn builtin(id: PromptId) -> Self {
        Self::new(id, id.default_text()).expect("shipped templates are valid")
    }

    pub fn slot_names(&self) -> &'static [&'static str] {
        self.id.slots()
    }

    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, DirectorError> {
        let map: BTreeMap<&str, &str> = values.iter().copied().collect();
        let mut out = String::with_capacity(self.template.len());
        for p in &self.pieces {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(s) => out.push_str(
                    map.get(s.as_str())
                        .ok_or_else(|| DirectorError::Template(format!("{}: no value for {{{s}}}", self.id)))?,
                ),
            }
        }
        Ok(out)
    }
}

/// The five templates in use for a project.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    templates: BTreeMap<PromptId, PromptTemplate>,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            templates: PromptId::ALL.into_iter().map(|id| (id, PromptTemplate::builtin(id))).collect(),
        }
    }
}

impl PromptSet {
    /// Shipped templates, overridden by any `<id>.txt` found in `dir`.
    pub fn load(dir: &Path) -> Result<Self, DirectorError> {
        let mut set = Self::default();
        for id in PromptId::ALL {
            let path = dir.join(format!("{}.txt", id.as_str()));
            if path.is_file() {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| DirectorError::Template(format!("{}: {e}", path.display())))?;
                set.templates.insert(id, PromptTemplate::new(id, &text)?);
            }
        }
        Ok(set)
    }

    pub fn get(&self, id: PromptId) -> &PromptTemplate {
        &self.templates[&id]
    }

    /// Concatenated template texts, for change detection.
    pub fn fingerprint(&self) -> String {
        self.templates.values().map(|t| t.template.as_str()).collect::<Vec<_>>().join("\u{0}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_templates_match_slot_sets() {
        for id in PromptId::ALL {
            let t = PromptTemplate::builtin(id);
            assert_eq!(t.requires_cot, matches!(id, PromptId::Extract | PromptId::Refine));
        }
    }

    #[test]
    fn rejects_unknown_or_missing_slots() {
        assert!(PromptTemplate::new(PromptId::Boundary, "{shot} {layout} {extra}").is_err());
        assert!(PromptTemplate::new(PromptId::Boundary, "{shot}").is_err());
        assert!(PromptTemplate::new(PromptId::Boundary, "{shot} } {layout}").is_err());
    }

    #[test]
    fn renders_slots_and_literal_braces() {
        let t = PromptTemplate::new(PromptId::Boundary, "{{\"a\": {shot}}} / {layout}").unwrap();
        assert_eq!(t.render(&[("shot", "1"), ("layout", "L")]).unwrap(), "{\"a\": 1} / L");
        assert!(t.render(&[("shot", "1")]).is_err());
    }

    #[test]
    fn workspace_override_is_validated() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("I3_boundary.txt"), "{shot} only").unwrap();
        assert!(PromptSet::load(dir.path()).is_err());
        std::fs::write(dir.path().join("I3_boundary.txt"), "{shot} and {layout}").unwrap();
        let set = PromptSet::load(dir.path()).unwrap();
        assert_eq!(set.get(PromptId::Boundary).template, "{shot} and {layout}");
        assert_eq!(set.get(PromptId::Extract), &PromptTemplate::builtin(PromptId::Extract));
    }
}
