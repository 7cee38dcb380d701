//! Choosing which of the eight turnaround views shows each subject.
//!
//! Facing angles use the turnaround convention: degrees clockwise seen
//! from above, 0 facing the camera, 90 facing screen-right, 180 facing
//! away. View `x` faces `45·x`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::plan::{screen_positions, ShotPlan, ShotType};
use super::StoryboardError;
use crate::backends::Backend;
use crate::cinematographer::{view_azimuth, MultiViewSet};
use crate::director::{ask, PromptId, PromptSet, RetrievedContext};

/// Candidates the backend may choose between.
pub const RERANK_POOL: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSelection {
    pub segment_id: Option<usize>,
    pub character_id: String,
    pub view_index: u8,
    pub score: f64,
}

fn angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// +1 for screen-right of center, -1 for left, 0 at center.
fn side_of(x: f64) -> f64 {
    if (x - 0.5).abs() < 1e-9 {
        0.0
    } else if x > 0.5 {
        1.0
    } else {
        -1.0
    }
}

/// Desired facing for each subject of a shot.
pub fn desired_facing(plan: &ShotPlan, positions: &BTreeMap<String, f64>) -> Vec<(String, f64)> {
    let side = |id: &String| positions.get(id).copied().map(side_of).unwrap_or(0.0);
    plan.subject_ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let s = side(id);
            let facing = match plan.shot_type {
                ShotType::Establishing | ShotType::SingleMedium => 0.0,
                // three-quarter toward the camera, turned toward the other party
                ShotType::SingleCloseup => -45.0 * s,
                ShotType::OverShoulder if i == 0 => -45.0 * s,
                // back-shoulder: three-quarter away, toward the featured subject
                ShotType::OverShoulder => 180.0 + 45.0 * s,
                ShotType::TwoShot => -45.0 * s,
            };
            (id.clone(), facing.rem_euclid(360.0))
        })
        .collect()
}

/// All eight views ordered by (angular cost, index), with their cost.
pub fn rank_views(facing: f64) -> Vec<(u8, f64)> {
    let mut ranked: Vec<(u8, f64)> = (0..8u8).map(|x| (x, angle_distance(facing, view_azimuth(x)))).collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    ranked
}

/// Log label naming the segment, or the scene for establishing shots.
pub(crate) fn shot_label(plan: &ShotPlan) -> String {
    match plan.segment_id {
        Some(id) => format!("segment {id}"),
        None => format!("scene {} establishing", plan.scene),
    }
}

fn score(cost: f64) -> f64 {
    1.0 - cost / 180.0
}

#[derive(Deserialize)]
struct ViewReply {
    view_index: u8,
}

/// Picks a view for every subject of `plan`. The geometric ranking decides
/// unless the backend picks another of the top candidates.
#[allow(clippy::too_many_arguments)]
pub fn select_viewpoint(
    plan: &ShotPlan,
    cast: &[String],
    context: Option<&RetrievedContext>,
    sets: &BTreeMap<String, MultiViewSet>,
    prompts: &PromptSet,
    backend: &dyn Backend,
    log: &mut Vec<String>,
) -> Result<Vec<ViewSelection>, StoryboardError> {
    let positions = screen_positions(cast, plan.camera_side);
    let mut out = Vec::new();
    for (id, facing) in desired_facing(plan, &positions) {
        if !sets.contains_key(&id) {
            return Err(StoryboardError::MissingViewSet(id));
        }
        let ranked = rank_views(facing);
        let pool: Vec<(u8, f64)> = ranked[..RERANK_POOL].to_vec();
        let candidates: Vec<Value> = pool
            .iter()
            .map(|(x, c)| json!({"view_index": x, "azimuth": view_azimuth(*x), "score": score(*c)}))
            .collect();
        let shot = json!({
            "segment_id": plan.segment_id,
            "shot_type": plan.shot_type,
            "camera_side": plan.camera_side,
            "subjects": plan.subject_ids,
            "desired_facing": facing,
        });
        let context_text = context.map(|c| serde_json::to_string(c).unwrap_or_default()).unwrap_or_default();
        let user = prompts.get(PromptId::ViewSelect).render(&[
            ("shot", &shot.to_string()),
            ("subject", &id),
            ("candidates", &serde_json::to_string(&candidates).unwrap_or_default()),
            ("context", &context_text),
        ])?;
        let label = format!("{} {id}", shot_label(plan));
        let allowed: Vec<u8> = pool.iter().map(|p| p.0).collect();
        let picked = ask(backend, PromptId::ViewSelect, &user, &label, log, |v| {
            let r: ViewReply = serde_json::from_value(v).map_err(|e| format!("view selection schema: {e}"))?;
            if allowed.contains(&r.view_index) {
                Ok(r.view_index)
            } else {
                Err(format!("view {} is not among the candidates {allowed:?}", r.view_index))
            }
        });
        let view = match picked {
            Ok(v) => v,
            Err(e) => {
                log.push(format!("[{label}] keeping geometric choice: {e}"));
                pool[0].0
            }
        };
        let cost = pool.iter().find(|p| p.0 == view).map(|p| p.1).unwrap_or(0.0);
        out.push(ViewSelection { segment_id: plan.segment_id, character_id: id, view_index: view, score: score(cost) });
    }
    Ok(out)
}
