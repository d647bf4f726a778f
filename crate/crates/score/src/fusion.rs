use serde::{Deserialize, Serialize};
use vad_core::{Error, Result, ScoreNormalization};

/// Mean and standard deviation of a branch's relaxed scores on normal data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchStats {
    pub mean: f64,
    pub std: f64,
}

impl BranchStats {
    pub fn from_scores<'a>(series: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let all: Vec<f64> = series.into_iter().flatten().copied().collect();
        if all.is_empty() {
            return Err(Error::contract("no scores to summarise"));
        }
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let var = all.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
        Ok(Self {
            mean,
            std: var.sqrt(),
        })
    }
}

/// Maps a series onto `[0, 1]`; a constant series maps to zeros.
pub fn min_max(scores: &[f64]) -> Vec<f64> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    scores
        .iter()
        .map(|s| if span > 0.0 { (s - lo) / span } else { 0.0 })
        .collect()
}

/// Calibrates one video's relaxed scores of one branch.
pub fn normalize(
    scores: &[f64],
    mode: ScoreNormalization,
    stats: Option<BranchStats>,
) -> Result<Vec<f64>> {
    match mode {
        ScoreNormalization::PerVideoMinMax => Ok(min_max(scores)),
        ScoreNormalization::None => Ok(scores.to_vec()),
        ScoreNormalization::TrainStats => {
            let st = stats.ok_or_else(|| {
                Error::contract("train-statistics normalization needs branch statistics")
            })?;
            let sd = if st.std > 0.0 { st.std } else { 1.0 };
            Ok(scores.iter().map(|s| (s - st.mean) / sd).collect())
        }
    }
}

/// Per-frame flag: 1 when either branch exceeds its threshold.
pub fn fuse_and_flag(b1: &[f64], b2: &[f64], thresholds: [f64; 2]) -> Result<Vec<u8>> {
    Ok(fused_scores(b1, b2, thresholds)?
        .into_iter()
        .map(|s| (s > 0.0) as u8)
        .collect())
}

/// Continuous fused score `max(b1 - t1, b2 - t2)`; it is positive exactly
/// where [`fuse_and_flag`] flags a frame, so sweeping a common offset over
/// it traces the ROC of the OR rule.
pub fn fused_scores(b1: &[f64], b2: &[f64], thresholds: [f64; 2]) -> Result<Vec<f64>> {
    if b1.len() != b2.len() {
        return Err(Error::contract(format!(
            "branch series differ in length: {} vs {}",
            b1.len(),
            b2.len()
        )));
    }
    Ok(b1
        .iter()
        .zip(b2)
        .map(|(a, b)| (a - thresholds[0]).max(b - thresholds[1]))
        .collect())
}
