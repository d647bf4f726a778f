use serde::{Deserialize, Serialize};
use vad_core::{AucConvention, Error, Result};

/// Area under the ROC curve of `scores` against 0/1 `labels`; ties count
/// one half. Computed from midranks in `O(n log n)`.
pub fn frame_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::contract(format!("score {s} is not a number")));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::contract("labels must be 0 or 1"));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(
            "frame AUC needs both normal and anomalous frames".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of midranks (1-based) of the positive frames.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let positives = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += midrank * positives as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucResult {
    pub auc: f64,
    pub convention: AucConvention,
    /// Videos left out of a per-video mean because they hold one class only.
    pub excluded: Vec<String>,
}

/// AUC over several videos, given as `(video_id, scores, labels)`.
pub fn aggregate_auc(
    videos: &[(&str, &[f64], &[u8])],
    convention: AucConvention,
) -> Result<AucResult> {
    match convention {
        AucConvention::Pooled => {
            let scores: Vec<f64> = videos.iter().flat_map(|v| v.1.iter().copied()).collect();
            let labels: Vec<u8> = videos.iter().flat_map(|v| v.2.iter().copied()).collect();
            Ok(AucResult {
                auc: frame_auc(&scores, &labels)?,
                convention,
                excluded: Vec::new(),
            })
        }
        AucConvention::PerVideoMean => {
            let mut sum = 0.0;
            let mut used = 0;
            let mut excluded = Vec::new();
            for (id, s, l) in videos {
                match frame_auc(s, l) {
                    Ok(a) => {
                        sum += a;
                        used += 1;
                    }
                    Err(Error::UndefinedMetric(_)) => {
                        log::warn!(
                            "video {id} holds a single class and is left out of the per-video AUC"
                        );
                        excluded.push(id.to_string());
                    }
                    Err(e) => return Err(e),
                }
            }
            if used == 0 {
                return Err(Error::UndefinedMetric(
                    "no video contains both normal and anomalous frames".into(),
                ));
            }
            Ok(AucResult {
                auc: sum / used as f64,
                convention,
                excluded,
            })
        }
    }
}
