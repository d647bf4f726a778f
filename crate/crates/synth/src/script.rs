use serde::{Deserialize, Serialize};
use vad_core::{Error, Result};

/// Velocity multiplier applied during a fast-motion event.
pub const FAST_FACTOR: f64 = 2.0;
/// Frames between reversals during a sudden-direction-change event.
pub const TURN_PERIOD: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeClass {
    PedestrianBlob,
    CartBlob,
    Distractor,
}

impl ShapeClass {
    /// Segmentation channel; 0 is background.
    pub fn class_id(self) -> usize {
        match self {
            ShapeClass::PedestrianBlob => 1,
            ShapeClass::CartBlob => 2,
            ShapeClass::Distractor => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpriteSpec {
    pub shape_class: ShapeClass,
    /// Half-height in pixels at the nearest depth lane.
    pub size: f64,
    /// `[lateral, towards camera]` in pixels per frame at the nearest lane.
    pub velocity: [f64; 2],
    /// Depth lane at entry: 0 is far, 1 is next to the camera.
    pub depth_lane: f64,
    /// Vertical swing of the two foot sub-blobs, in pixels at the nearest lane.
    pub articulation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptedSprite {
    pub spec: SpriteSpec,
    /// First frame the sprite exists in.
    pub entry: usize,
    /// One past the last frame the sprite exists in.
    pub exit: usize,
    /// Lateral pixel position of the sprite center at `entry`.
    pub x0: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    UnseenClass,
    FastMotion,
    SuddenDirectionChange,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 3] = [
        AnomalyKind::UnseenClass,
        AnomalyKind::FastMotion,
        AnomalyKind::SuddenDirectionChange,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalyEvent {
    /// Inclusive frame range.
    pub frame_range: [usize; 2],
    pub sprite_index: usize,
    pub kind: AnomalyKind,
}

impl AnomalyEvent {
    pub fn covers(&self, t: usize) -> bool {
        (self.frame_range[0]..=self.frame_range[1]).contains(&t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptSplit {
    Train,
    Test,
}

/// Camera model: depth lane `d` places a sprite's center on row
/// `y_far + d * (y_near - y_far)` and scales it by `s_min + (1 - s_min) * d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub y_far: f64,
    pub y_near: f64,
    pub s_min: f64,
    /// Image-space shrink of motion along the camera axis relative to
    /// lateral motion of the same world speed.
    pub foreshortening: f64,
}

impl Geometry {
    pub fn for_height(height: usize) -> Self {
        let h = height as f64;
        Self {
            y_far: 0.2 * h,
            y_near: 0.82 * h,
            s_min: 0.35,
            foreshortening: 0.5,
        }
    }

    pub fn scale(&self, depth: f64) -> f64 {
        self.s_min + (1.0 - self.s_min) * depth
    }

    pub fn row(&self, depth: f64) -> f64 {
        self.y_far + depth * (self.y_near - self.y_far)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneScript {
    pub width: usize,
    pub height: usize,
    pub duration: usize,
    pub split: ScriptSplit,
    pub geometry: Geometry,
    /// Seed of the static background texture; videos of one scene share it.
    pub background_seed: u64,
    pub sprites: Vec<ScriptedSprite>,
    pub anomaly_events: Vec<AnomalyEvent>,
}

impl SceneScript {
    pub fn new(width: usize, height: usize, duration: usize, split: ScriptSplit) -> Self {
        Self {
            width,
            height,
            duration,
            split,
            geometry: Geometry::for_height(height),
            background_seed: 0,
            sprites: Vec::new(),
            anomaly_events: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Contract(m));
        if self.width == 0 || self.height == 0 || self.duration == 0 {
            return bad("scene needs positive size and duration".into());
        }
        if self.split == ScriptSplit::Train && !self.anomaly_events.is_empty() {
            return bad("anomaly events are only allowed in test scripts".into());
        }
        for (i, s) in self.sprites.iter().enumerate() {
            // Written negated so NaN sizes are refused too.
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(s.spec.size > 0.0) {
                return bad(format!("sprite {i} has non-positive size"));
            }
            if !(0.0..=1.0).contains(&s.spec.depth_lane) {
                return bad(format!("sprite {i} depth lane outside [0, 1]"));
            }
            if s.entry >= s.exit || s.exit > self.duration {
                return bad(format!("sprite {i} lifetime outside the scene"));
            }
            let speed = s.spec.velocity[0].hypot(s.spec.velocity[1]);
            if !speed.is_finite() || speed > self.width as f64 / 4.0 {
                return bad(format!("sprite {i} speed {speed} out of bounds"));
            }
        }
        for e in &self.anomaly_events {
            if e.frame_range[0] > e.frame_range[1] || e.frame_range[1] >= self.duration {
                return bad(format!("event range {:?} outside the scene", e.frame_range));
            }
            if e.sprite_index >= self.sprites.len() {
                return bad(format!("event names missing sprite {}", e.sprite_index));
            }
        }
        Ok(())
    }

    /// Per-frame 0/1 labels: 1 iff any anomaly event covers the frame.
    pub fn labels(&self) -> Vec<u8> {
        (0..self.duration)
            .map(|t| self.anomaly_events.iter().any(|e| e.covers(t)) as u8)
            .collect()
    }

    /// Velocity multiplier of sprite `i` for the step ending at frame `t`.
    pub(crate) fn multiplier(&self, i: usize, t: usize) -> f64 {
        let mut m = 1.0;
        for e in self
            .anomaly_events
            .iter()
            .filter(|e| e.sprite_index == i && e.covers(t))
        {
            match e.kind {
                AnomalyKind::FastMotion => m *= FAST_FACTOR,
                AnomalyKind::SuddenDirectionChange => {
                    if ((t - e.frame_range[0]) / TURN_PERIOD).is_multiple_of(2) {
                        m = -m;
                    }
                }
                AnomalyKind::UnseenClass => {}
            }
        }
        m
    }
}
