//! Dialogue-script to storyboard pipeline.
//!
//! Stages: [`script_ir`] parses scripts, [`director`] extracts and refines
//! entities, [`cinematographer`] renders reference and multi-view imagery
//! through [`backends`], [`storyboard`] plans and composites panels, and
//! [`quality`] scores the result. [`workspace`] and [`pipeline`] persist and
//! sequence the stages.

pub mod backends;
pub mod cinematographer;
pub mod digest;
pub mod director;
pub mod pipeline;
pub mod quality;
pub mod script_ir;
pub mod storyboard;
pub mod workspace;
