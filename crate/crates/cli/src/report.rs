use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use vad_core::{AucConvention, ScoreNormalization};

use crate::manifest::Ablation;

pub const REPORT_FILE: &str = "report.json";
pub const ABLATION_FILE: &str = "ablation.json";

/// Output of `eval`. The layout is documented in `docs/report.schema.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub dataset_hash: String,
    pub config_hash: String,
    pub seed: u64,
    pub convention: AucConvention,
    pub normalization: ScoreNormalization,
    pub thresholds: [f64; 2],
    pub auc: AucTable,
    pub videos: Vec<VideoReport>,
    pub artifacts: Artifacts,
}

/// Test-split AUC of each scored branch and of their fusion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AucTable {
    pub appearance_motion: Option<f64>,
    pub motion: Option<f64>,
    pub fused: Option<f64>,
    /// Videos left out of a per-video mean because they hold one class.
    pub excluded: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoReport {
    pub video_id: String,
    pub frames: usize,
    pub anomalous_frames: usize,
    /// Per-video AUCs; absent for a video holding one class only.
    pub appearance_motion: Option<f64>,
    pub motion: Option<f64>,
    pub fused: Option<f64>,
    /// Frames flagged by the OR rule at the configured thresholds.
    pub flagged_frames: Option<usize>,
}

/// Paths of the written artifacts, relative to the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifacts {
    pub scores: String,
    pub heatmaps: String,
    pub plots: String,
}

/// Output of `ablate`: one row per sweep point, in sweep order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationReport {
    pub sweep: Ablation,
    pub seed: u64,
    pub dataset_hash: String,
    /// Which score the AUC column measures.
    pub metric: String,
    /// Test videos the AUCs are computed over.
    pub videos: Vec<String>,
    pub rows: Vec<AblationRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationRow {
    pub name: String,
    pub auc: f64,
    /// 1 for the highest AUC; ties share a rank.
    pub rank: usize,
    pub seed: u64,
    pub dataset_hash: String,
    /// Config hash of every trained model behind the row.
    pub config_hashes: Vec<String>,
}

impl AblationReport {
    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Plain-text table, best row first.
    pub fn table(&self) -> String {
        let mut rows: Vec<&AblationRow> = self.rows.iter().collect();
        rows.sort_by_key(|r| r.rank);
        let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
        let mut s = format!(
            "{} ({}, seed {})\n",
            self.sweep.name(),
            self.metric,
            self.seed
        );
        s += &format!("{:>4}  {:<width$}  {:>7}\n", "rank", "name", "auc");
        for r in rows {
            s += &format!("{:>4}  {:<width$}  {:>7.4}\n", r.rank, r.name, r.auc);
        }
        s
    }
}

/// Ranks by descending AUC; equal AUCs share the better rank.
pub fn assign_ranks(rows: &mut [AblationRow]) {
    let aucs: Vec<f64> = rows.iter().map(|r| r.auc).collect();
    for r in rows.iter_mut() {
        r.rank = 1 + aucs.iter().filter(|&&a| a > r.auc).count();
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
