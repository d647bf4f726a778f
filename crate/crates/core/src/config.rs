use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Where the context-attention map modulates the student's feature maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionPosition {
    None,
    Encoder,
    Decoder,
    SkipConnection,
    FinalLayer,
}

impl AttentionPosition {
    pub const ALL: [AttentionPosition; 5] = [
        AttentionPosition::None,
        AttentionPosition::Encoder,
        AttentionPosition::Decoder,
        AttentionPosition::SkipConnection,
        AttentionPosition::FinalLayer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttentionPosition::None => "none",
            AttentionPosition::Encoder => "encoder",
            AttentionPosition::Decoder => "decoder",
            AttentionPosition::SkipConnection => "skip_connection",
            AttentionPosition::FinalLayer => "final_layer",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppearanceLoss {
    PatchMse,
    CrossEntropy,
}

/// Calibration applied to each branch's relaxed scores before fusion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreNormalization {
    /// Min-max to `[0, 1]` within each video.
    PerVideoMinMax,
    /// Standardize with mean and standard deviation of the branch's relaxed
    /// scores on the (normal-only) training split.
    TrainStats,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AucConvention {
    /// One AUC over the concatenation of every test video's frames.
    Pooled,
    /// Mean of per-video AUCs over videos that contain both classes.
    PerVideoMean,
}

/// Parameters of the built-in coarse-to-fine flow estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowEstimatorConfig {
    pub levels: usize,
    pub window: usize,
    pub search_radius: usize,
}

impl Default for FlowEstimatorConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            window: 7,
            search_radius: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Square frame side after ingestion, in pixels.
    pub input_size: usize,
    /// Patches per axis for the patch-max loss.
    pub patch_grid: usize,
    pub lr_init: f64,
    /// Epochs between learning-rate halvings.
    pub lr_halving_period: usize,
    pub epochs: usize,
    pub seed: u64,
    pub attention_position: AttentionPosition,
    pub scse_enabled: bool,
    /// Savitzky-Golay taps; odd.
    pub smoothing_window: usize,
    pub smoothing_order: usize,
    /// Thresholds on (appearance-motion, motion) normalized relaxed scores.
    pub branch_thresholds: [f64; 2],
    pub batch_size: usize,
    /// Training clips drawn per epoch; `None` uses every clip.
    pub clips_per_epoch: Option<usize>,
    pub unet_depth: usize,
    pub base_width: usize,
    pub attention_hidden: Vec<usize>,
    /// Foreground classes; segmentation maps carry one extra background channel.
    pub num_classes: usize,
    /// Motion-branch targets are `magnitude / ofm_scale`; 1.0 regresses raw
    /// pixels per frame.
    pub ofm_scale: f64,
    pub appearance_loss: AppearanceLoss,
    pub score_normalization: ScoreNormalization,
    pub auc_convention: AucConvention,
    pub flow: FlowEstimatorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input_size: 256,
            patch_grid: 4,
            lr_init: 0.001,
            lr_halving_period: 10,
            epochs: 30,
            seed: 0,
            attention_position: AttentionPosition::Decoder,
            scse_enabled: true,
            smoothing_window: 9,
            smoothing_order: 3,
            branch_thresholds: [0.5, 0.5],
            batch_size: 8,
            clips_per_epoch: None,
            unet_depth: 4,
            base_width: 16,
            attention_hidden: vec![8, 8],
            num_classes: 3,
            ofm_scale: 1.0,
            appearance_loss: AppearanceLoss::PatchMse,
            score_normalization: ScoreNormalization::PerVideoMinMax,
            auc_convention: AucConvention::Pooled,
            flow: FlowEstimatorConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.input_size == 0 {
            return fail("input_size must be positive".into());
        }
        if self.patch_grid == 0 {
            return fail("patch_grid must be at least 1".into());
        }
        if !self.input_size.is_multiple_of(self.patch_grid) {
            return fail(format!(
                "input_size {} not divisible by patch_grid {}",
                self.input_size, self.patch_grid
            ));
        }
        if !(self.lr_init.is_finite() && self.lr_init > 0.0) {
            return fail(format!("lr_init must be positive, got {}", self.lr_init));
        }
        if self.lr_halving_period == 0 {
            return fail("lr_halving_period must be at least 1".into());
        }
        if self.smoothing_window.is_multiple_of(2) {
            return fail(format!(
                "smoothing_window must be odd, got {}",
                self.smoothing_window
            ));
        }
        if self.smoothing_window <= self.smoothing_order {
            return fail(format!(
                "smoothing_window {} must exceed smoothing_order {}",
                self.smoothing_window, self.smoothing_order
            ));
        }
        if self.branch_thresholds.iter().any(|t| !t.is_finite()) {
            return fail("branch thresholds must be finite".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.clips_per_epoch == Some(0) {
            return fail("clips_per_epoch must be at least 1 when set".into());
        }
        if self.unet_depth < 2 {
            return fail(format!("unet_depth must be >= 2, got {}", self.unet_depth));
        }
        if self.base_width < 4 {
            return fail(format!("base_width must be >= 4, got {}", self.base_width));
        }
        let stride = 1usize << (self.unet_depth - 1);
        if !self.input_size.is_multiple_of(stride) {
            return fail(format!(
                "input_size {} not divisible by 2^(unet_depth-1) = {stride}",
                self.input_size
            ));
        }
        if self.attention_hidden.is_empty() || self.attention_hidden.contains(&0) {
            return fail("attention_hidden needs at least one nonzero width".into());
        }
        if self.num_classes == 0 {
            return fail("num_classes must be at least 1".into());
        }
        if !(self.ofm_scale.is_finite() && self.ofm_scale > 0.0) {
            return fail("ofm_scale must be positive".into());
        }
        if self.flow.levels == 0
            || self.flow.window.is_multiple_of(2)
            || self.flow.search_radius == 0
        {
            return fail("flow estimator needs levels >= 1, odd window, radius >= 1".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Copy with every scoring-only field (smoothing, thresholds,
    /// normalization, AUC convention) reset to its default.
    pub fn training_view(&self) -> Self {
        let d = Self::default();
        Self {
            smoothing_window: d.smoothing_window,
            smoothing_order: d.smoothing_order,
            branch_thresholds: d.branch_thresholds,
            score_normalization: d.score_normalization,
            auc_convention: d.auc_convention,
            ..self.clone()
        }
    }

    /// Hash of the fields that affect training; configurations that differ
    /// only in how scores are post-processed share trained checkpoints.
    pub fn training_hash(&self) -> String {
        self.training_view().hash()
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.input_size, 256);
        assert_eq!(cfg.patch_grid * cfg.patch_grid, 16);
        assert_eq!(cfg.lr_init, 0.001);
        assert_eq!(cfg.lr_halving_period, 10);
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn json_round_trip() {
        let cfg = RunConfig {
            attention_position: AttentionPosition::SkipConnection,
            ..RunConfig::default()
        };
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    fn invalid_config() -> impl Strategy<Value = RunConfig> {
        let base = RunConfig::default();
        prop_oneof![
            (1usize..20).prop_map(move |k| RunConfig {
                smoothing_window: 2 * k,
                ..RunConfig::default()
            }),
            (0usize..6).prop_map(|k| {
                let w = 2 * k + 1;
                RunConfig {
                    smoothing_window: w,
                    smoothing_order: w + k,
                    ..RunConfig::default()
                }
            }),
            Just(RunConfig {
                patch_grid: 0,
                ..base.clone()
            }),
            (-1.0f64..=0.0).prop_map(|lr| RunConfig {
                lr_init: lr,
                ..RunConfig::default()
            }),
            Just(RunConfig {
                lr_init: f64::NAN,
                ..RunConfig::default()
            }),
            (3usize..9).prop_map(|g| RunConfig {
                input_size: 256,
                patch_grid: g * 2 + 1,
                ..RunConfig::default()
            }),
            Just(RunConfig {
                unet_depth: 1,
                ..RunConfig::default()
            }),
            Just(RunConfig {
                lr_halving_period: 0,
                ..RunConfig::default()
            }),
        ]
    }

    proptest! {
        #[test]
        fn validation_rejects_invalid(cfg in invalid_config()) {
            prop_assert!(cfg.validate().is_err());
        }
    }
}
