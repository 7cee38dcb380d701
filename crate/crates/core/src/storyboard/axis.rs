//! Independent audit of screen direction: within a scene, two characters
//! seen together keep the same left/right order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Panel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisViolation {
    pub panel_index: usize,
    pub scene: usize,
    /// The pair, ordered by id.
    pub characters: (String, String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisReport {
    pub pairs_checked: usize,
    pub violations: Vec<AxisViolation>,
}

impl AxisReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// For every scene and co-present pair, the established ordering is the
/// majority one (the first seen on a tie); panels showing the opposite
/// ordering are violations.
pub fn check_axis_of_action(panels: &[Panel]) -> AxisReport {
    type Key = (usize, String, String);
    let mut seen: BTreeMap<Key, Vec<(usize, bool)>> = BTreeMap::new();
    for p in panels {
        let subjects: Vec<_> = p.boundaries.iter().filter(|b| b.z_order > 0).collect();
        for (i, a) in subjects.iter().enumerate() {
            for b in &subjects[i + 1..] {
                if a.element_id == b.element_id {
                    continue;
                }
                let (first, second) = if a.element_id < b.element_id { (a, b) } else { (b, a) };
                let first_left = first.center_x() < second.center_x();
                seen.entry((p.scene, first.element_id.clone(), second.element_id.clone()))
                    .or_default()
                    .push((p.index, first_left));
            }
        }
    }
    let mut report = AxisReport { pairs_checked: seen.len(), violations: Vec::new() };
    for ((scene, a, b), obs) in seen {
        let left = obs.iter().filter(|o| o.1).count();
        let right = obs.len() - left;
        let established = if left == right { obs[0].1 } else { left > right };
        for (panel_index, first_left) in obs {
            if first_left != established {
                report.violations.push(AxisViolation { panel_index, scene, characters: (a.clone(), b.clone()) });
            }
        }
    }
    report.violations.sort_by_key(|v| v.panel_index);
    report
}
