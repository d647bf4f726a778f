//! Deterministic synthetic surveillance scenes.
//!
//! Scenes are populated by parametric sprites whose kinematics are known in
//! closed form, so the renderer can emit exact per-pixel segmentation, flow
//! and depth next to each frame. These serve as oracle teachers and as the
//! ground truth for the benchmark's anomaly labels.

mod benchmark;
mod render;
mod script;

pub use benchmark::{
    kind_name, make_benchmark, write_video, BenchmarkInventory, SceneFile, VideoInventory,
};
pub use render::{render_scene, RenderedFrame, RenderedVideo};
pub use script::{
    AnomalyEvent, AnomalyKind, Geometry, SceneScript, ScriptSplit, ScriptedSprite, ShapeClass,
    SpriteSpec, FAST_FACTOR, TURN_PERIOD,
};
