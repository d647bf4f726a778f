//! Experiment drivers behind the `mtvad` command: benchmark generation,
//! pseudo-GT export, training, evaluation reports and ablation sweeps.

pub mod ablation;
pub mod commands;
pub mod manifest;
pub mod plot;
pub mod report;
pub mod workbench;

pub use ablation::{
    cmd_ablate, run_ablation, sweep_points, variant_for, SweepPoint, Variant, DIVERSE_TAGS,
};
pub use commands::{
    branch_task, cmd_eval, cmd_pseudo_gt, cmd_synth, cmd_train, evaluate, inventory_summary,
    load_models, PseudoGtSummary,
};
pub use manifest::{Ablation, ExperimentManifest, MANIFEST_COPY};
pub use report::{AblationReport, AblationRow, AucTable, EvalReport, VideoReport};
pub use workbench::Workbench;
