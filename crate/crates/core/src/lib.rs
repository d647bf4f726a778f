//! Core building blocks shared by every stage of the anomaly-detection pipeline:
//! frames and clips, dense per-pixel maps with their binary container, run
//! configuration, seeded random streams and the on-disk dataset layout.

pub mod config;
pub mod dataset;
pub mod densemap;
pub mod error;
pub mod frame;
pub mod rng;

pub use config::{
    AppearanceLoss, AttentionPosition, AucConvention, FlowEstimatorConfig, RunConfig,
    ScoreNormalization,
};
pub use dataset::{Dataset, Split, TestSplit, TrainSplit, VideoDir};
pub use densemap::{read_dense_map, write_dense_map, DenseMap, MapKind};
pub use error::{Error, Result};
pub use frame::{Clip, Frame};
pub use rng::{RngState, SeededRng};
