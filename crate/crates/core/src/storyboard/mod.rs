//! Storyboard assembly: shot plans, view choice, layout and compositing.

mod axis;
mod compose;
mod layout;
mod plan;
mod viewpoint;

use std::collections::BTreeMap;
use std::path::Path;

use image::RgbaImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::backends::{encode_png, Backend, ImageAsset};
use crate::cinematographer::MultiViewSet;
use crate::director::{ask, DirectorError, ElementDatabase, PromptId, PromptSet, DEFAULT_WINDOW};
use crate::script_ir::ScriptIR;

pub use axis::{check_axis_of_action, AxisReport, AxisViolation};
pub use compose::{
    caption_top, contact_sheet, cover_fit, draw_caption, is_backdrop, paste_character, wrap_caption, Placement,
    CAPTION_LINES,
};
pub use layout::{assign_boundaries, base_layout, iou, validate_layout, Anchor, LayoutBoundary};
pub use plan::{plan_shot_sequence, scene_cast, screen_positions, slot_centers, CameraSide, ShotPlan, ShotType};
pub use viewpoint::{desired_facing, rank_views, select_viewpoint, ViewSelection, RERANK_POOL};

pub const CANVAS_WIDTH: u32 = 1024;
pub const CANVAS_HEIGHT: u32 = 576;
/// Bottom edge of the picture area; the caption strip fills the rest.
pub const PICTURE_BOTTOM: f64 = 0.88;
pub const CONTACT_COLUMNS: u32 = 3;
pub const STORYBOARD_FILE: &str = "storyboard.json";
pub const CONTACT_SHEET_FILE: &str = "contact_sheet.png";

#[derive(Debug, Error)]
pub enum StoryboardError {
    #[error("no multi-view set for character {0}")]
    MissingViewSet(String),
    #[error("asset missing: {0}")]
    AssetMissing(String),
    #[error(transparent)]
    Director(#[from] DirectorError),
    #[error("storyboard I/O: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub index: usize,
    pub segment_id: Option<usize>,
    pub scene: usize,
    pub plan: ShotPlan,
    pub selections: Vec<ViewSelection>,
    pub boundaries: Vec<LayoutBoundary>,
    pub caption: String,
    pub caption_lines: Vec<String>,
    pub description: String,
    pub placements: Vec<Placement>,
    #[serde(skip)]
    pub image: RgbaImage,
}

impl Panel {
    pub fn file_name(&self) -> String {
        format!("panel_{:04}.png", self.index)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Storyboard {
    pub panels: Vec<Panel>,
    pub contact_sheet: RgbaImage,
}

#[derive(Serialize, Deserialize)]
struct BoardFile {
    panel_count: usize,
    panels: Vec<Panel>,
}

impl Storyboard {
    /// Number of panels, dialogue segments plus one establishing panel per
    /// scene.
    pub fn panel_count(&self) -> usize {
        self.panels.len()
    }

    pub fn to_json(&self) -> String {
        let file = BoardFile { panel_count: self.panels.len(), panels: self.panels.clone() };
        serde_json::to_string_pretty(&file).expect("storyboard serializes")
    }

    /// Writes panels, `storyboard.json` and the contact sheet into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), StoryboardError> {
        let io = |e: std::io::Error| StoryboardError::Io(e.to_string());
        std::fs::create_dir_all(dir).map_err(io)?;
        for p in &self.panels {
            std::fs::write(dir.join(p.file_name()), encode_png(&p.image)).map_err(io)?;
        }
        std::fs::write(dir.join(STORYBOARD_FILE), self.to_json()).map_err(io)?;
        std::fs::write(dir.join(CONTACT_SHEET_FILE), encode_png(&self.contact_sheet)).map_err(io)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, StoryboardError> {
        let text = std::fs::read_to_string(dir.join(STORYBOARD_FILE))
            .map_err(|e| StoryboardError::Io(format!("{}: {e}", STORYBOARD_FILE)))?;
        let file: BoardFile = serde_json::from_str(&text).map_err(|e| StoryboardError::Io(e.to_string()))?;
        let mut panels = file.panels;
        for p in &mut panels {
            let path = dir.join(p.file_name());
            p.image = image::open(&path)
                .map_err(|e| StoryboardError::AssetMissing(format!("{}: {e}", path.display())))?
                .to_rgba8();
        }
        let sheet = image::open(dir.join(CONTACT_SHEET_FILE)).map(|i| i.to_rgba8()).unwrap_or_default();
        Ok(Storyboard { panels, contact_sheet: sheet })
    }
}

#[derive(Debug, Clone, Default)]
pub struct BoardOptions {
    /// Camera side per scene index; scenes not listed use the default.
    pub camera_sides: BTreeMap<usize, CameraSide>,
}

#[derive(Debug)]
pub struct BoardOutcome {
    pub storyboard: Storyboard,
    pub log: Vec<String>,
}

/// Caption text for a panel: the scene heading for establishing shots,
/// `NAME: line` otherwise.
pub fn panel_caption(ir: &ScriptIR, plan: &ShotPlan) -> String {
    match plan.segment_id.and_then(|id| ir.dialogues.iter().find(|d| d.id == id)) {
        Some(d) => {
            let name = ir.character(&d.speaker_id).map(|c| c.name.as_str()).unwrap_or(&d.speaker_id);
            format!("{}: {}", name.to_uppercase(), d.line)
        }
        None => ir.scenes.iter().find(|s| s.index == plan.scene).map(|s| s.heading.clone()).unwrap_or_default(),
    }
}

struct Staged {
    plan: ShotPlan,
    selections: Vec<ViewSelection>,
    boundaries: Vec<LayoutBoundary>,
    spot_id: String,
}

#[derive(Deserialize)]
struct ComposeReply {
    description: String,
}

/// Builds the whole board. Planning, view choice and layout run in script
/// order; panels are composited in parallel.
pub fn build_storyboard(
    ir: &ScriptIR,
    sets: &BTreeMap<String, MultiViewSet>,
    backgrounds: &BTreeMap<String, ImageAsset>,
    prompts: &PromptSet,
    backend: &dyn Backend,
    opts: &BoardOptions,
) -> Result<BoardOutcome, StoryboardError> {
    let db = ElementDatabase::from_ir(ir);
    let plans = plan_shot_sequence(ir, &db, &opts.camera_sides);
    let mut log = Vec::new();
    let mut casts: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let mut staged = Vec::with_capacity(plans.len());
    for plan in plans {
        let cast = casts.entry(plan.scene).or_insert_with(|| scene_cast(ir, plan.scene)).clone();
        let spot_id = ir.scenes.iter().find(|s| s.index == plan.scene).map(|s| s.spot_id.clone()).unwrap_or_default();
        let context = match plan.segment_id {
            Some(id) => Some(db.retrieve_context(id, DEFAULT_WINDOW)?),
            None => None,
        };
        let selections = select_viewpoint(&plan, &cast, context.as_ref(), sets, prompts, backend, &mut log)?;
        let boundaries = assign_boundaries(&plan, &spot_id, &cast, &selections, sets, prompts, backend, &mut log)?;
        staged.push(Staged { plan, selections, boundaries, spot_id });
    }
    let results: Vec<Result<(Panel, Vec<String>), StoryboardError>> = staged
        .into_par_iter()
        .enumerate()
        .map(|(index, s)| compose_panel(index, s, ir, sets, backgrounds, prompts, backend))
        .collect();
    let mut panels = Vec::with_capacity(results.len());
    for r in results {
        let (panel, lines) = r?;
        log.extend(lines);
        panels.push(panel);
    }
    let images: Vec<&RgbaImage> = panels.iter().map(|p| &p.image).collect();
    let contact_sheet = contact_sheet(&images, CONTACT_COLUMNS);
    Ok(BoardOutcome { storyboard: Storyboard { panels, contact_sheet }, log })
}

fn compose_panel(
    index: usize,
    s: Staged,
    ir: &ScriptIR,
    sets: &BTreeMap<String, MultiViewSet>,
    backgrounds: &BTreeMap<String, ImageAsset>,
    prompts: &PromptSet,
    backend: &dyn Backend,
) -> Result<(Panel, Vec<String>), StoryboardError> {
    let mut log = Vec::new();
    let bg = backgrounds
        .get(&s.spot_id)
        .ok_or_else(|| StoryboardError::AssetMissing(format!("background for {}", s.spot_id)))?;
    let mut canvas = cover_fit(&bg.pixels, CANVAS_WIDTH, CANVAS_HEIGHT);
    let mut subjects: Vec<&LayoutBoundary> = s.boundaries.iter().filter(|b| b.z_order > 0).collect();
    subjects.sort_by_key(|b| b.z_order);
    let mut placements = Vec::new();
    for b in subjects {
        let sel = s
            .selections
            .iter()
            .find(|v| v.character_id == b.element_id)
            .ok_or_else(|| StoryboardError::MissingViewSet(b.element_id.clone()))?;
        let set = sets.get(&b.element_id).ok_or_else(|| StoryboardError::MissingViewSet(b.element_id.clone()))?;
        placements.push(paste_character(&mut canvas, set.view(sel.view_index), b));
    }
    let caption = panel_caption(ir, &s.plan);
    let (caption_lines, cut) = wrap_caption(&caption);
    if cut {
        log::warn!("panel {index}: caption ellipsized after {CAPTION_LINES} lines");
        log.push(format!("panel {index}: CaptionOverflow: caption ellipsized after {CAPTION_LINES} lines"));
    }
    draw_caption(&mut canvas, &caption_lines);

    let layout: Vec<_> = s.boundaries.iter().map(|b| json!({"element_id": b.element_id, "box": b.bounds})).collect();
    let shot = json!({"segment_id": s.plan.segment_id, "shot_type": s.plan.shot_type, "subjects": s.plan.subject_ids});
    let user = prompts.get(PromptId::Compose).render(&[
        ("shot", &shot.to_string()),
        ("caption", &caption),
        ("layout", &json!(layout).to_string()),
    ])?;
    let description = ask(backend, PromptId::Compose, &user, &format!("panel {index}"), &mut log, |v| {
        serde_json::from_value::<ComposeReply>(v)
            .map(|r| r.description)
            .map_err(|e| format!("compose schema: {e}"))
    })?;
    let panel = Panel {
        index,
        segment_id: s.plan.segment_id,
        scene: s.plan.scene,
        plan: s.plan,
        selections: s.selections,
        boundaries: s.boundaries,
        caption,
        caption_lines,
        description,
        placements,
        image: canvas,
    };
    Ok((panel, log))
}
