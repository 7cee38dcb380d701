//! Shot grammar: an establishing shot per scene, alternating
//! over-the-shoulder coverage for two-party exchanges, close-ups when one
//! speaker holds the floor, and group framing for larger casts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::director::ElementDatabase;
use crate::script_ir::ScriptIR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotType {
    Establishing,
    SingleMedium,
    SingleCloseup,
    OverShoulder,
    TwoShot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraSide {
    #[default]
    LeftOfAxis,
    RightOfAxis,
}

impl CameraSide {
    pub fn flipped(self) -> Self {
        match self {
            CameraSide::LeftOfAxis => CameraSide::RightOfAxis,
            CameraSide::RightOfAxis => CameraSide::LeftOfAxis,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotPlan {
    /// `None` for establishing shots.
    pub segment_id: Option<usize>,
    pub scene: usize,
    pub shot_type: ShotType,
    pub camera_side: CameraSide,
    /// Featured subject first.
    pub subject_ids: Vec<String>,
}

/// Speakers and addressees of a scene in order of first appearance.
pub fn scene_cast(ir: &ScriptIR, scene: usize) -> Vec<String> {
    let mut cast: Vec<String> = Vec::new();
    for d in ir.scene_segments(scene) {
        for id in std::iter::once(&d.speaker_id).chain(&d.addressee_ids) {
            if !cast.contains(id) {
                cast.push(id.clone());
            }
        }
    }
    cast
}

/// Horizontal screen position (0..1) of each cast member. With the camera
/// left of the axis the first character to appear stands screen-right and
/// later ones fill in leftwards; the other side mirrors this.
pub fn screen_positions(cast: &[String], side: CameraSide) -> BTreeMap<String, f64> {
    let slots = slot_centers(cast.len());
    cast.iter()
        .enumerate()
        .map(|(i, id)| {
            let x = slots[slots.len() - 1 - i];
            let x = match side {
                CameraSide::LeftOfAxis => x,
                CameraSide::RightOfAxis => 1.0 - x,
            };
            (id.clone(), x)
        })
        .collect()
}

/// Evenly spread centers, left to right.
pub fn slot_centers(n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5],
        2 => vec![1.0 / 3.0, 2.0 / 3.0],
        3 => vec![0.2, 0.5, 0.8],
        n => (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect(),
    }
}

/// Plans every panel. `sides` overrides the camera side per scene.
pub fn plan_shot_sequence(
    ir: &ScriptIR,
    _db: &ElementDatabase,
    sides: &BTreeMap<usize, CameraSide>,
) -> Vec<ShotPlan> {
    let mut plans = Vec::new();
    for scene in &ir.scenes {
        let side = sides.get(&scene.index).copied().unwrap_or_default();
        let cast = scene_cast(ir, scene.index);
        plans.push(ShotPlan {
            segment_id: None,
            scene: scene.index,
            shot_type: ShotType::Establishing,
            camera_side: side,
            subject_ids: Vec::new(),
        });
        let mut run_speaker: Option<&str> = None;
        let mut run_len = 0;
        for d in ir.scene_segments(scene.index) {
            if run_speaker == Some(d.speaker_id.as_str()) {
                run_len += 1;
            } else {
                run_speaker = Some(&d.speaker_id);
                run_len = 1;
            }
            let others: Vec<String> = cast.iter().filter(|c| **c != d.speaker_id).cloned().collect();
            let (shot_type, subject_ids) = if others.is_empty() {
                (ShotType::SingleMedium, vec![d.speaker_id.clone()])
            } else if run_len >= 3 {
                (ShotType::SingleCloseup, vec![d.speaker_id.clone()])
            } else if others.len() == 1 {
                (ShotType::OverShoulder, vec![d.speaker_id.clone(), others[0].clone()])
            } else {
                let mut s = vec![d.speaker_id.clone()];
                s.extend(others);
                (ShotType::TwoShot, s)
            };
            plans.push(ShotPlan { segment_id: Some(d.id), scene: scene.index, shot_type, camera_side: side, subject_ids });
        }
    }
    plans
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::script_ir::parse_screenplay;

    fn plan(text: &str) -> Vec<ShotPlan> {
        let ir = parse_screenplay(text).unwrap();
        plan_shot_sequence(&ir, &ElementDatabase::from_ir(&ir), &BTreeMap::new())
    }

    fn types(p: &[ShotPlan]) -> Vec<ShotType> {
        p.iter().map(|s| s.shot_type).collect()
    }

    #[test]
    fn alternating_exchange() {
        let p = plan("INT. CAFE - DAY\n\nA\nOne.\n\nB\nTwo.\n\nA\nThree.\n");
        use ShotType::*;
        assert_eq!(types(&p), [Establishing, OverShoulder, OverShoulder, OverShoulder]);
        assert_eq!(p[2].subject_ids, ["b", "a"]);
    }

    #[test]
    fn third_consecutive_line_escalates() {
        let p = plan("INT. CAFE - DAY\n\nB\nHm.\n\nA\nOne.\n\nA\nTwo.\n\nA\nThree.\n");
        assert_eq!(p[4].shot_type, ShotType::SingleCloseup);
        assert_eq!(p[3].shot_type, ShotType::OverShoulder);
    }

    #[test]
    fn monologue_and_groups() {
        let p = plan("INT. CAFE - DAY\n\nA\nOne.\n\nA\nTwo.\n");
        assert_eq!(types(&p), [ShotType::Establishing, ShotType::SingleMedium, ShotType::SingleMedium]);
        let p = plan("INT. CAFE - DAY\n\nA\nOne.\n\nB\nTwo.\n\nC\nThree.\n");
        assert_eq!(p[3].shot_type, ShotType::TwoShot);
        assert_eq!(p[3].subject_ids, ["c", "a", "b"]);
    }

    #[test]
    fn first_speaker_is_screen_right_left_of_axis() {
        let cast = vec!["a".to_string(), "b".to_string()];
        let l = screen_positions(&cast, CameraSide::LeftOfAxis);
        assert!(l["a"] > l["b"]);
        let r = screen_positions(&cast, CameraSide::RightOfAxis);
        assert!(r["a"] < r["b"]);
    }
}
