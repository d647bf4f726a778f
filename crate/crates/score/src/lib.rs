//! Inference: per-pixel anomaly maps, per-frame scores, temporal relaxation,
//! branch fusion and frame-level ROC-AUC.

mod anomaly;
mod auc;
mod fusion;
mod pipeline;
mod smoothing;

pub use anomaly::{anomaly_map, frame_score};
pub use auc::{aggregate_auc, frame_auc, AucResult};
pub use fusion::{fuse_and_flag, fused_scores, min_max, normalize, BranchStats};
pub use pipeline::{
    branch_maps, heatmap_png, score_prepared, score_video, write_records, BranchModel,
    BranchSeries, ScoreRecord, ScoreSeries,
};
pub use smoothing::{smooth_scores, SmoothingSpec};
