use serde::{Deserialize, Serialize};
use vad_core::dataset::PseudoGt;
use vad_core::{DenseMap, Error, Frame, MapKind, Result, RunConfig, SeededRng, VideoDir};
use vad_synth::{render_scene, RenderedVideo, SceneFile};

use crate::features::{direction_features, flow_to_mag_ang, mask_flow, DirectionFeatures};
use crate::flow::estimate_dense_flow;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegSource {
    Oracle,
    PrecomputedFiles,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowSource {
    Oracle,
    PrecomputedFiles,
    BuiltinEstimator,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthSource {
    Oracle,
    PrecomputedFiles,
}

/// Where each kind of pseudo-ground-truth comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeacherSet {
    pub seg: SegSource,
    pub flow: FlowSource,
    pub depth: DepthSource,
}

impl TeacherSet {
    pub fn oracle() -> Self {
        Self {
            seg: SegSource::Oracle,
            flow: FlowSource::Oracle,
            depth: DepthSource::Oracle,
        }
    }

    pub fn files() -> Self {
        Self {
            seg: SegSource::PrecomputedFiles,
            flow: FlowSource::PrecomputedFiles,
            depth: DepthSource::PrecomputedFiles,
        }
    }

    fn needs_oracle(&self) -> bool {
        self.seg == SegSource::Oracle
            || self.flow == FlowSource::Oracle
            || self.depth == DepthSource::Oracle
    }
}

impl Default for TeacherSet {
    fn default() -> Self {
        Self::oracle()
    }
}

/// Everything the students need for frame `t`.
#[derive(Clone, Debug)]
pub struct TeacherBundle {
    pub seg: DenseMap,
    /// Segmentation of frame `t + 1`; absent for the last frame.
    pub seg_next: Option<DenseMap>,
    /// Flow magnitude in pixels per frame, zero outside the foreground.
    pub flow_mag: DenseMap,
    pub direction: DirectionFeatures,
    pub depth: DenseMap,
}

/// Teacher outputs for one video, with frames loaded once and oracle
/// renders cached.
pub struct VideoTeacher {
    video: VideoDir,
    set: TeacherSet,
    cfg: RunConfig,
    frames: Vec<Frame>,
    oracle: Option<RenderedVideo>,
}

impl VideoTeacher {
    pub fn open(video: &VideoDir, set: TeacherSet, cfg: &RunConfig) -> Result<Self> {
        let frames = video.load_frames(cfg.input_size)?;
        let oracle = if set.needs_oracle() {
            Some(render_oracle(video, cfg)?)
        } else {
            None
        };
        if let Some(o) = &oracle {
            if o.frames.len() != frames.len() {
                return Err(Error::Ingestion {
                    what: "oracle teacher".into(),
                    path: video.scene_path(),
                    reason: format!(
                        "scene has {} frames but the video has {}",
                        o.frames.len(),
                        frames.len()
                    ),
                });
            }
        }
        Ok(Self {
            video: video.clone(),
            set,
            cfg: cfg.clone(),
            frames,
            oracle,
        })
    }

    pub fn video(&self) -> &VideoDir {
        &self.video
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    fn oracle_frame(&self, t: usize) -> &vad_synth::RenderedFrame {
        &self
            .oracle
            .as_ref()
            .expect("oracle rendered on open")
            .frames[t]
    }

    fn check_plane(&self, map: DenseMap, what: PseudoGt, t: usize) -> Result<DenseMap> {
        let n = self.cfg.input_size;
        if map.height != n || map.width != n {
            return Err(Error::Ingestion {
                what: format!("{} pseudo-GT for frame {}", what.dir_name(), t),
                path: self.video.pseudo_gt_path(what, t),
                reason: format!("map is {}x{}, expected {n}x{n}", map.height, map.width),
            });
        }
        Ok(map)
    }

    pub fn seg(&self, t: usize) -> Result<DenseMap> {
        self.in_range(t)?;
        let map = match self.set.seg {
            SegSource::Oracle => return Ok(self.oracle_frame(t).seg.clone()),
            SegSource::PrecomputedFiles => self.video.read_pseudo_gt(PseudoGt::Seg, t)?,
        };
        let map = self.check_plane(map, PseudoGt::Seg, t)?;
        if map.kind != MapKind::SegmentationScores || map.channels != self.cfg.num_classes + 1 {
            return Err(Error::Ingestion {
                what: format!("seg pseudo-GT for frame {}", t),
                path: self.video.pseudo_gt_path(PseudoGt::Seg, t),
                reason: format!(
                    "expected {} segmentation channels, found {:?} with {}",
                    self.cfg.num_classes + 1,
                    map.kind,
                    map.channels
                ),
            });
        }
        Ok(map)
    }

    /// Flow into frame `t` from frame `t - 1`, on the grid of frame `t`.
    pub fn flow(&self, t: usize) -> Result<DenseMap> {
        self.in_range(t)?;
        let map = match self.set.flow {
            FlowSource::Oracle => return Ok(self.oracle_frame(t).flow.clone()),
            FlowSource::PrecomputedFiles => self.video.read_pseudo_gt(PseudoGt::Flow, t)?,
            FlowSource::BuiltinEstimator => {
                if t == 0 {
                    let n = self.cfg.input_size;
                    return Ok(DenseMap::zeros(MapKind::Flow, n, n, 2));
                }
                return estimate_dense_flow(&self.frames[t - 1], &self.frames[t], &self.cfg.flow);
            }
        };
        let map = self.check_plane(map, PseudoGt::Flow, t)?;
        if map.kind != MapKind::Flow {
            return Err(Error::Ingestion {
                what: format!("flow pseudo-GT for frame {}", t),
                path: self.video.pseudo_gt_path(PseudoGt::Flow, t),
                reason: format!("expected a flow map, found {:?}", map.kind),
            });
        }
        Ok(map)
    }

    pub fn depth(&self, t: usize) -> Result<DenseMap> {
        self.in_range(t)?;
        let map = match self.set.depth {
            DepthSource::Oracle => return Ok(self.oracle_frame(t).depth.clone()),
            DepthSource::PrecomputedFiles => self.video.read_pseudo_gt(PseudoGt::Depth, t)?,
        };
        let map = self.check_plane(map, PseudoGt::Depth, t)?;
        if map.kind != MapKind::Depth {
            return Err(Error::Ingestion {
                what: format!("depth pseudo-GT for frame {}", t),
                path: self.video.pseudo_gt_path(PseudoGt::Depth, t),
                reason: format!("expected a depth map, found {:?}", map.kind),
            });
        }
        Ok(map)
    }

    pub fn bundle(&self, t: usize) -> Result<TeacherBundle> {
        let seg = self.seg(t)?;
        let seg_next = if t + 1 < self.len() {
            Some(self.seg(t + 1)?)
        } else {
            None
        };
        let masked = mask_flow(&self.flow(t)?, &seg)?;
        let (flow_mag, ang) = flow_to_mag_ang(&masked)?;
        let direction = direction_features(&ang, &flow_mag)?;
        Ok(TeacherBundle {
            seg,
            seg_next,
            flow_mag,
            direction,
            depth: self.depth(t)?,
        })
    }

    fn in_range(&self, t: usize) -> Result<()> {
        if t >= self.len() {
            return Err(Error::contract(format!(
                "frame {t} is outside video {} of length {}",
                self.video.id,
                self.len()
            )));
        }
        Ok(())
    }
}

fn render_oracle(video: &VideoDir, cfg: &RunConfig) -> Result<RenderedVideo> {
    let path = video.scene_path();
    if !path.exists() {
        return Err(Error::Ingestion {
            what: "oracle teacher".into(),
            path,
            reason: "oracle sources need a synthetic video with scene.json".into(),
        });
    }
    let scene: SceneFile =
        serde_json::from_str(&video.read_scene_text()?).map_err(|e| Error::Ingestion {
            what: "oracle teacher".into(),
            path: path.clone(),
            reason: e.to_string(),
        })?;
    let mut rng = SeededRng::from_state(&scene.rng);
    render_scene(&scene.script, cfg, &mut rng, &video.id)
}

/// Teacher bundle for frame `t` of `video`. Opens the video afresh; use
/// [`VideoTeacher`] when iterating over many frames.
pub fn load_pseudo_gt(
    video: &VideoDir,
    t: usize,
    set: TeacherSet,
    cfg: &RunConfig,
) -> Result<TeacherBundle> {
    VideoTeacher::open(video, set, cfg)?.bundle(t)
}
