use std::ops::Range;

use serde::{Deserialize, Serialize};
use vad_core::{AppearanceLoss, AttentionPosition, Error, Result, RunConfig};
use vad_nets::{ContextAttnSpec, Graph, NodeId, OutActivation, StudentSpec, Tensor, UNetSpec};

use crate::data::PreparedVideo;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    /// Two stacked frames in, segmentation scores out.
    AppearanceMotion,
    /// One frame in, foreground flow magnitude out.
    Motion,
}

/// Which segmentation the appearance-motion branch regresses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegTarget {
    /// The frame after the input pair.
    Future,
    /// The last frame of the input pair.
    Current,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BranchTask {
    pub kind: BranchKind,
    pub seg_target: SegTarget,
}

/// One training or scoring example.
#[derive(Clone, Debug)]
pub struct Sample {
    pub input: Tensor,
    pub context: Option<Tensor>,
    pub target: Tensor,
}

impl BranchTask {
    pub fn appearance() -> Self {
        Self {
            kind: BranchKind::AppearanceMotion,
            seg_target: SegTarget::Future,
        }
    }

    /// Appearance branch that segments the current frame instead of
    /// predicting the next one.
    pub fn segmentation() -> Self {
        Self {
            kind: BranchKind::AppearanceMotion,
            seg_target: SegTarget::Current,
        }
    }

    pub fn motion() -> Self {
        Self {
            kind: BranchKind::Motion,
            seg_target: SegTarget::Future,
        }
    }

    pub fn name(&self) -> &'static str {
        match (self.kind, self.seg_target) {
            (BranchKind::AppearanceMotion, SegTarget::Future) => "appearance_motion",
            (BranchKind::AppearanceMotion, SegTarget::Current) => "segmentation",
            (BranchKind::Motion, _) => "motion",
        }
    }

    /// Student architecture for this branch. Context attention and SCSE are
    /// motion-branch features; the appearance branch is a plain UNet.
    pub fn student_spec(&self, cfg: &RunConfig, image_channels: usize) -> StudentSpec {
        let (in_channels, out_channels, out_activation, pos, scse) = match self.kind {
            BranchKind::AppearanceMotion => (
                2 * image_channels,
                cfg.num_classes + 1,
                OutActivation::PerPixelSoftmax,
                AttentionPosition::None,
                false,
            ),
            BranchKind::Motion => (
                image_channels,
                1,
                OutActivation::Linear,
                cfg.attention_position,
                cfg.scse_enabled,
            ),
        };
        StudentSpec {
            unet: UNetSpec {
                in_channels,
                out_channels,
                depth: cfg.unet_depth,
                base_width: cfg.base_width,
                scse_enabled: scse,
                attention_position: pos,
                out_activation,
            },
            attention: (pos != AttentionPosition::None)
                .then(|| ContextAttnSpec::new(cfg.attention_hidden.clone())),
        }
    }

    /// Frames of a `len`-frame video this branch has a target for.
    pub fn frames(&self, len: usize) -> Range<usize> {
        match (self.kind, self.seg_target) {
            (BranchKind::AppearanceMotion, SegTarget::Future) => 1..len.saturating_sub(1),
            _ => 1..len,
        }
    }

    pub fn sample(&self, v: &PreparedVideo, t: usize, cfg: &RunConfig) -> Result<Sample> {
        if !self.frames(v.len()).contains(&t) {
            return Err(Error::contract(format!(
                "frame {t} of video {} has no {} target",
                v.id,
                self.name()
            )));
        }
        Ok(match self.kind {
            BranchKind::AppearanceMotion => Sample {
                input: Tensor::stack(&[&v.frames[t - 1], &v.frames[t]])?,
                context: None,
                target: match self.seg_target {
                    SegTarget::Future => v.seg[t + 1].clone(),
                    SegTarget::Current => v.seg[t].clone(),
                },
            },
            BranchKind::Motion => {
                let mut target = v.flow_mag[t].clone();
                target.scale(1.0 / cfg.ofm_scale);
                Sample {
                    input: v.frames[t].clone(),
                    context: Some(v.context[t].clone()),
                    target,
                }
            }
        })
    }

    /// Records the training loss of `pred` against `target` on `g`.
    pub fn loss(
        &self,
        g: &mut Graph,
        pred: NodeId,
        target: &Tensor,
        cfg: &RunConfig,
    ) -> Result<NodeId> {
        match (self.kind, cfg.appearance_loss) {
            (BranchKind::AppearanceMotion, AppearanceLoss::CrossEntropy) => {
                g.cross_entropy(pred, target)
            }
            _ => g.patch_mse(pred, target, cfg.patch_grid),
        }
    }
}
