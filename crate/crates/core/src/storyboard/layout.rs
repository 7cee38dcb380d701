//! Normalized panel layout. Boxes are `[x0, y0, x1, y1]` in frame units;
//! everything above the caption strip is picture area.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::plan::{screen_positions, ShotPlan, ShotType};
use super::viewpoint::{shot_label, ViewSelection};
use super::{StoryboardError, CANVAS_HEIGHT, CANVAS_WIDTH, PICTURE_BOTTOM};
use crate::backends::Backend;
use crate::cinematographer::MultiViewSet;
use crate::director::{ask, PromptId, PromptSet};

/// Share of the source height kept for each framing, from the top.
pub const MEDIUM_ROWS: f64 = 0.55;
pub const CLOSEUP_ROWS: f64 = 0.42;
pub const FOREGROUND_ROWS: f64 = 0.45;

const FEATURED_HEIGHT: f64 = 0.62;
const FOREGROUND_HEIGHT: f64 = 0.80;
const CLOSEUP_HEIGHT: f64 = 0.62;
const MEDIUM_HEIGHT: f64 = 0.70;
const GROUP_HEIGHT: f64 = 0.72;
const MAX_ONE_ROW: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    ThirdsLeft,
    ThirdsRight,
    Center,
}

impl Anchor {
    fn of(x: f64) -> Self {
        if (x - 0.5).abs() < 1e-9 {
            Anchor::Center
        } else if x < 0.5 {
            Anchor::ThirdsLeft
        } else {
            Anchor::ThirdsRight
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutBoundary {
    pub segment_id: Option<usize>,
    pub element_id: String,
    #[serde(rename = "box")]
    pub bounds: [f64; 4],
    pub z_order: i32,
    pub anchor: Anchor,
    /// Share of the source image height used, measured from the top.
    pub source_rows: f64,
}

impl LayoutBoundary {
    pub fn center_x(&self) -> f64 {
        (self.bounds[0] + self.bounds[2]) / 2.0
    }

    pub fn width(&self) -> f64 {
        self.bounds[2] - self.bounds[0]
    }

    pub fn height(&self) -> f64 {
        self.bounds[3] - self.bounds[1]
    }
}

pub fn iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let area = |r: &[f64; 4]| (r[2] - r[0]) * (r[3] - r[1]);
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Box of height `h` whose width follows the source aspect, centered on
/// `cx` and shifted back inside the frame if needed.
fn aspect_box(cx: f64, y0: f64, h: f64, source_aspect: f64) -> [f64; 4] {
    let w = (h * CANVAS_HEIGHT as f64 * source_aspect / CANVAS_WIDTH as f64).min(1.0);
    let x0 = (cx - w / 2.0).clamp(0.0, 1.0 - w);
    [x0, y0, x0 + w, y0 + h]
}

fn thirds(side_x: f64) -> f64 {
    match Anchor::of(side_x) {
        Anchor::ThirdsLeft => 1.0 / 3.0,
        Anchor::ThirdsRight => 2.0 / 3.0,
        Anchor::Center => 0.5,
    }
}

/// Width over height of the used part of a view image.
fn source_aspect(set: &MultiViewSet, view: u8, rows: f64) -> f64 {
    let v = set.view(view);
    v.width as f64 / (v.height as f64 * rows)
}

/// Checks the box invariants for one panel.
pub fn validate_layout(plan: &ShotPlan, boundaries: &[LayoutBoundary]) -> Result<(), String> {
    let Some(bg) = boundaries.first() else {
        return Err("missing background".into());
    };
    if bg.bounds != [0.0, 0.0, 1.0, 1.0] || boundaries.iter().skip(1).any(|b| b.z_order <= bg.z_order) {
        return Err("background must be full-frame and lowest".into());
    }
    for b in boundaries {
        let [x0, y0, x1, y1] = b.bounds;
        let inside = (0.0..=1.0).contains(&x0) && (0.0..=1.0).contains(&y0) && x1 <= 1.0 && y1 <= 1.0;
        if !inside || x0 >= x1 || y0 >= y1 {
            return Err(format!("box of {} out of range: {:?}", b.element_id, b.bounds));
        }
    }
    if plan.shot_type != ShotType::OverShoulder {
        let subjects = &boundaries[1..];
        for (i, a) in subjects.iter().enumerate() {
            for b in &subjects[i + 1..] {
                if iou(&a.bounds, &b.bounds) >= 0.5 {
                    return Err(format!("{} and {} overlap too much", a.element_id, b.element_id));
                }
            }
        }
    }
    Ok(())
}

/// Geometric layout before any backend review.
pub fn base_layout(
    plan: &ShotPlan,
    spot_id: &str,
    cast: &[String],
    selections: &[ViewSelection],
    sets: &BTreeMap<String, MultiViewSet>,
    log: &mut Vec<String>,
) -> Result<Vec<LayoutBoundary>, StoryboardError> {
    let positions = screen_positions(cast, plan.camera_side);
    let mut out = vec![LayoutBoundary {
        segment_id: plan.segment_id,
        element_id: spot_id.to_string(),
        bounds: [0.0, 0.0, 1.0, 1.0],
        z_order: 0,
        anchor: Anchor::Center,
        source_rows: 1.0,
    }];
    let view_of = |id: &str| -> Result<(&MultiViewSet, u8), StoryboardError> {
        let set = sets.get(id).ok_or_else(|| StoryboardError::MissingViewSet(id.to_string()))?;
        let sel = selections
            .iter()
            .find(|s| s.character_id == id)
            .ok_or_else(|| StoryboardError::MissingViewSet(id.to_string()))?;
        Ok((set, sel.view_index))
    };
    let pos = |id: &str| positions.get(id).copied().unwrap_or(0.5);
    let mut push = |id: &str, bounds: [f64; 4], z: i32, anchor: Anchor, rows: f64| {
        out.push(LayoutBoundary {
            segment_id: plan.segment_id,
            element_id: id.to_string(),
            bounds,
            z_order: z,
            anchor,
            source_rows: rows,
        })
    };
    match plan.shot_type {
        ShotType::Establishing => {}
        ShotType::SingleMedium => {
            let id = &plan.subject_ids[0];
            let (set, view) = view_of(id)?;
            let cx = pos(id);
            let b = aspect_box(cx, 0.10, MEDIUM_HEIGHT, source_aspect(set, view, MEDIUM_ROWS));
            push(id, b, 1, Anchor::of(cx), MEDIUM_ROWS);
        }
        ShotType::SingleCloseup => {
            let id = &plan.subject_ids[0];
            let (set, view) = view_of(id)?;
            let cx = thirds(pos(id));
            let y0 = 1.0 / 3.0 - CLOSEUP_HEIGHT / 2.0;
            let b = aspect_box(cx, y0, CLOSEUP_HEIGHT, source_aspect(set, view, CLOSEUP_ROWS));
            push(id, b, 1, Anchor::of(cx), CLOSEUP_ROWS);
        }
        ShotType::OverShoulder => {
            let featured = &plan.subject_ids[0];
            let other = &plan.subject_ids[1];
            let (set, view) = view_of(featured)?;
            let mut fx = pos(featured);
            let ox = pos(other);
            if Anchor::of(fx) == Anchor::Center || (fx - 0.5).signum() == (ox - 0.5).signum() {
                // keep the pair's left/right order but split them across the frame
                fx = if fx > ox { 1.0 } else { 0.0 };
            }
            let cx = thirds(fx);
            let b = aspect_box(cx, 0.10, FEATURED_HEIGHT, source_aspect(set, view, MEDIUM_ROWS));
            push(featured, b, 1, Anchor::of(cx), MEDIUM_ROWS);
            // back-shoulder subject: large, flush with the near frame edge and
            // cut off by the bottom of the picture
            let (oset, oview) = view_of(other)?;
            let y0 = PICTURE_BOTTOM - FOREGROUND_HEIGHT;
            let w = aspect_box(0.5, y0, FOREGROUND_HEIGHT, source_aspect(oset, oview, FOREGROUND_ROWS));
            let w = w[2] - w[0];
            let near = if cx > 0.5 { [0.0, y0, w, PICTURE_BOTTOM] } else { [1.0 - w, y0, 1.0, PICTURE_BOTTOM] };
            push(other, near, 2, Anchor::of(1.0 - cx), FOREGROUND_ROWS);
        }
        ShotType::TwoShot => {
            let mut ids: Vec<&String> = plan.subject_ids.iter().collect();
            ids.sort_by(|a, b| pos(a).total_cmp(&pos(b)));
            let two_rows = ids.len() > MAX_ONE_ROW;
            if two_rows {
                log::info!("{}: {} subjects do not fit one row", shot_label(plan), ids.len());
                log.push(format!(
                    "{}: InfeasibleLayout: {} subjects, using two rows",
                    shot_label(plan),
                    ids.len()
                ));
            }
            for (i, id) in ids.iter().enumerate() {
                let (set, view) = view_of(id)?;
                let aspect = source_aspect(set, view, 1.0);
                let cx = pos(id);
                let b = if two_rows {
                    let y0 = if i % 2 == 0 { 0.10 } else { 0.48 };
                    aspect_box(cx, y0, 0.38, aspect)
                } else {
                    aspect_box(cx, 0.14, GROUP_HEIGHT, aspect)
                };
                push(id, b, 1 + (i % 2) as i32, Anchor::of(cx), 1.0);
            }
        }
    }
    Ok(out)
}

#[derive(serde::Deserialize)]
struct Adjustment {
    element_id: String,
    scale: f64,
}

#[derive(serde::Deserialize)]
struct BoundaryReply {
    adjustments: Vec<Adjustment>,
}

fn scaled(b: &LayoutBoundary, s: f64) -> LayoutBoundary {
    let cx = b.center_x();
    let (w, h) = (b.width() * s, b.height() * s);
    let mut out = b.clone();
    out.bounds = [cx - w / 2.0, b.bounds[1], cx + w / 2.0, b.bounds[1] + h];
    out
}

/// Lays out a panel and lets the backend rescale boxes within limits.
/// Proposals that would break an invariant are discarded with a log line.
#[allow(clippy::too_many_arguments)]
pub fn assign_boundaries(
    plan: &ShotPlan,
    spot_id: &str,
    cast: &[String],
    selections: &[ViewSelection],
    sets: &BTreeMap<String, MultiViewSet>,
    prompts: &PromptSet,
    backend: &dyn Backend,
    log: &mut Vec<String>,
) -> Result<Vec<LayoutBoundary>, StoryboardError> {
    let base = base_layout(plan, spot_id, cast, selections, sets, log)?;
    if plan.subject_ids.is_empty() {
        return Ok(base);
    }
    let layout: Vec<_> = base.iter().map(|b| json!({"element_id": b.element_id, "box": b.bounds})).collect();
    let shot = json!({"segment_id": plan.segment_id, "shot_type": plan.shot_type, "subjects": plan.subject_ids});
    let user = prompts
        .get(PromptId::Boundary)
        .render(&[("shot", &shot.to_string()), ("layout", &json!(layout).to_string())])?;
    let label = shot_label(plan);
    let reply = ask(backend, PromptId::Boundary, &user, &label, log, |v| {
        let r: BoundaryReply = serde_json::from_value(v).map_err(|e| format!("boundary schema: {e}"))?;
        Ok(r.adjustments)
    })?;
    let mut adjusted = base.clone();
    for a in &reply {
        let Some(b) = adjusted.iter_mut().skip(1).find(|b| b.element_id == a.element_id) else {
            log.push(format!("[{label}] ignoring adjustment for unknown element {}", a.element_id));
            continue;
        };
        if !(0.8..=1.2).contains(&a.scale) {
            log.push(format!("[{label}] ignoring scale {} for {}", a.scale, a.element_id));
            continue;
        }
        *b = scaled(b, a.scale);
    }
    if adjusted != base {
        if let Err(e) = validate_layout(plan, &adjusted).and(shot_rules(plan, &adjusted)) {
            log.push(format!("[{label}] discarding adjustments: {e}"));
            return Ok(base);
        }
    }
    Ok(adjusted)
}

/// Per-shot size rules that backend adjustments must keep.
fn shot_rules(plan: &ShotPlan, boundaries: &[LayoutBoundary]) -> Result<(), String> {
    match plan.shot_type {
        ShotType::SingleCloseup if !(0.6..=0.8).contains(&boundaries[1].height()) => {
            Err("close-up height outside [0.6, 0.8]".into())
        }
        ShotType::OverShoulder if boundaries[2].height() < 0.8 => Err("foreground shorter than 0.8".into()),
        _ if boundaries.iter().any(|b| b.z_order > 0 && b.bounds[3] > PICTURE_BOTTOM + 1e-9) => {
            Err("box reaches into the caption strip".into())
        }
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_basics() {
        assert_eq!(iou(&[0.0, 0.0, 1.0, 1.0], &[0.0, 0.0, 1.0, 1.0]), 1.0);
        assert_eq!(iou(&[0.0, 0.0, 0.5, 1.0], &[0.5, 0.0, 1.0, 1.0]), 0.0);
        assert!((iou(&[0.0, 0.0, 1.0, 1.0], &[0.0, 0.0, 0.5, 1.0]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn aspect_box_stays_inside() {
        let b = aspect_box(0.95, 0.1, 0.6, 1.0);
        assert!(b[2] <= 1.0 && b[0] >= 0.0);
        assert!(((b[2] - b[0]) - 0.6 * 576.0 / 1024.0).abs() < 1e-12);
    }
}
