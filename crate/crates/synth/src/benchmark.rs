//! The seeded desk-scale benchmark: normal-only training videos and test
//! videos covering every anomaly kind, written in the standard dataset layout
//! together with oracle pseudo-GT.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use vad_core::dataset::{frame_file_name, map_file_name, write_labels, PseudoGt};
use vad_core::{write_dense_map, Error, Result, RngState, RunConfig, SeededRng};

use crate::render::{render_scene, trajectory, State};
use crate::script::{
    AnomalyEvent, AnomalyKind, SceneScript, ScriptSplit, ScriptedSprite, ShapeClass, SpriteSpec,
};

const DURATION: usize = 64;
const TRAIN_VIDEOS: usize = 10;
const SCENES: u64 = 4;

/// Contents of `scene.json`: the script plus the generator position used to
/// render it, so oracle teachers can re-render bit-identically.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneFile {
    pub script: SceneScript,
    pub rng: RngState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoInventory {
    pub id: String,
    pub split: String,
    pub frames: usize,
    pub tags: Vec<String>,
    pub anomaly_events: BTreeMap<String, usize>,
    pub anomalous_frames: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkInventory {
    pub seed: u64,
    pub input_size: usize,
    pub videos: Vec<VideoInventory>,
}

impl BenchmarkInventory {
    /// Number of events of `kind` over the test split.
    pub fn event_count(&self, kind: AnomalyKind) -> usize {
        let key = kind_name(kind);
        self.videos
            .iter()
            .filter_map(|v| v.anomaly_events.get(key))
            .sum()
    }

    pub fn tagged(&self, tag: &str) -> Vec<&VideoInventory> {
        self.videos
            .iter()
            .filter(|v| v.tags.iter().any(|t| t == tag))
            .collect()
    }

    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join("benchmark.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn kind_name(kind: AnomalyKind) -> &'static str {
    match kind {
        AnomalyKind::UnseenClass => "unseen_class",
        AnomalyKind::FastMotion => "fast_motion",
        AnomalyKind::SuddenDirectionChange => "sudden_direction_change",
    }
}

/// Writes the benchmark under `root` (created if absent) and returns its
/// inventory, which is also stored as `root/benchmark.json`.
pub fn make_benchmark(seed: u64, cfg: &RunConfig, root: &Path) -> Result<BenchmarkInventory> {
    cfg.validate()?;
    let mut videos = Vec::new();
    let mut stream = 0u64;
    let mut gen = Generator::new(seed, cfg.input_size);

    for i in 0..TRAIN_VIDEOS {
        let script = gen.normal_scene(ScriptSplit::Train, i as u64 % SCENES);
        videos.push((format!("train_{i:02}"), script, vec!["normal".to_string()]));
    }
    let test_plan: [(&str, &[AnomalyKind], &[&str]); 7] = [
        ("depth_00", &[AnomalyKind::FastMotion], &["depth_diverse"]),
        ("depth_01", &[AnomalyKind::FastMotion], &["depth_diverse"]),
        ("dir_00", &[AnomalyKind::FastMotion], &["direction_diverse"]),
        ("dir_01", &[AnomalyKind::FastMotion], &["direction_diverse"]),
        ("class_00", &[AnomalyKind::UnseenClass], &[]),
        ("turn_00", &[AnomalyKind::SuddenDirectionChange], &[]),
        (
            "mixed_00",
            &[
                AnomalyKind::UnseenClass,
                AnomalyKind::FastMotion,
                AnomalyKind::SuddenDirectionChange,
            ],
            &[],
        ),
    ];
    for (k, (id, kinds, tags)) in test_plan.iter().enumerate() {
        let lateral_fast = id.starts_with("depth");
        let script = gen.test_scene(k as u64 % SCENES, kinds, lateral_fast);
        videos.push((
            id.to_string(),
            script,
            tags.iter().map(|t| t.to_string()).collect(),
        ));
    }

    let mut inventory = BenchmarkInventory {
        seed,
        input_size: cfg.input_size,
        videos: Vec::new(),
    };
    for (id, script, tags) in videos {
        let split = match script.split {
            ScriptSplit::Train => "train",
            ScriptSplit::Test => "test",
        };
        let dir = root.join(split).join(&id);
        let rng = SeededRng::derive(seed, stream);
        stream += 1;
        write_video(&dir, &id, &script, rng, cfg)?;
        let mut events = BTreeMap::new();
        for e in &script.anomaly_events {
            *events.entry(kind_name(e.kind).to_string()).or_insert(0) += 1;
        }
        inventory.videos.push(VideoInventory {
            id,
            split: split.to_string(),
            frames: script.duration,
            tags,
            anomaly_events: events,
            anomalous_frames: script.labels().iter().map(|&l| l as usize).sum(),
        });
    }
    let path = root.join("benchmark.json");
    fs::write(&path, serde_json::to_string_pretty(&inventory)?).map_err(|e| Error::io(&path, e))?;
    Ok(inventory)
}

/// Renders `script` and writes it as one video directory with oracle pseudo-GT.
pub fn write_video(
    dir: &Path,
    id: &str,
    script: &SceneScript,
    mut rng: SeededRng,
    cfg: &RunConfig,
) -> Result<()> {
    let state = rng.state();
    let video = render_scene(script, cfg, &mut rng, id)?;
    let mkdir = |p: &Path| fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    mkdir(&dir.join("frames"))?;
    for which in [PseudoGt::Seg, PseudoGt::Flow, PseudoGt::Depth] {
        mkdir(&dir.join("pseudo_gt").join(which.dir_name()))?;
    }
    let scene = SceneFile {
        script: script.clone(),
        rng: state,
    };
    let scene_path = dir.join("scene.json");
    fs::write(&scene_path, serde_json::to_string_pretty(&scene)?)
        .map_err(|e| Error::io(&scene_path, e))?;
    write_labels(&dir.join("labels.json"), &script.labels())?;
    for (t, f) in video.frames.iter().enumerate() {
        f.frame.save(&dir.join("frames").join(frame_file_name(t)))?;
        let gt = dir.join("pseudo_gt");
        write_dense_map(&f.seg, &gt.join("seg").join(map_file_name(t)))?;
        write_dense_map(&f.flow, &gt.join("flow").join(map_file_name(t)))?;
        write_dense_map(&f.depth, &gt.join("depth").join(map_file_name(t)))?;
    }
    Ok(())
}

/// Script generator. All sizes scale with the frame side relative to 64 px.
struct Generator {
    rng: SeededRng,
    seed: u64,
    size: usize,
    r: f64,
}

impl Generator {
    fn new(seed: u64, size: usize) -> Self {
        Self {
            // stream far from the per-video render streams
            rng: SeededRng::derive(seed, 1 << 32),
            seed,
            size,
            r: size as f64 / 64.0,
        }
    }

    fn walker_speed(&mut self) -> f64 {
        self.rng.range(1.2, 1.7) * self.r
    }

    fn base_script(&self, split: ScriptSplit, scene: u64) -> SceneScript {
        let mut s = SceneScript::new(self.size, self.size, DURATION, split);
        s.background_seed = self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ scene;
        s
    }

    fn pedestrian(&mut self, velocity: [f64; 2], depth: f64) -> SpriteSpec {
        SpriteSpec {
            shape_class: ShapeClass::PedestrianBlob,
            size: 7.5 * self.r,
            velocity,
            depth_lane: depth,
            articulation: Some(1.2 * self.r),
        }
    }

    /// Lateral walker, already in view at frame 0 or entering from an edge.
    fn lateral(
        &mut self,
        s: &mut SceneScript,
        class: ShapeClass,
        entry: usize,
        in_view: bool,
    ) -> usize {
        let depth = self.rng.range(0.25, 0.95);
        let dir = if self.rng.uniform() < 0.5 { 1.0 } else { -1.0 };
        let speed = match class {
            ShapeClass::Distractor => self.rng.range(0.35, 0.6) * self.r,
            _ => self.walker_speed(),
        };
        let mut spec = self.pedestrian([dir * speed, 0.0], depth);
        spec.shape_class = class;
        match class {
            ShapeClass::CartBlob => {
                spec.size = 6.5 * self.r;
                spec.articulation = None;
            }
            ShapeClass::Distractor => {
                spec.size = 4.0 * self.r;
                spec.articulation = None;
            }
            ShapeClass::PedestrianBlob => {}
        }
        let w = self.size as f64;
        let margin = 1.3 * spec.size + 2.0;
        let x0 = if in_view {
            self.rng.range(0.15 * w, 0.85 * w)
        } else if dir > 0.0 {
            -margin
        } else {
            w + margin
        };
        s.sprites.push(ScriptedSprite {
            spec,
            entry,
            exit: DURATION,
            x0,
        });
        let i = s.sprites.len() - 1;
        self.trim_exit(s, i);
        i
    }

    /// Walker along the camera axis, in view for the whole video. The
    /// trajectory keeps clear of the depth range ends for `slack` extra
    /// frames so a fast-motion event still fits.
    fn axial(&mut self, s: &mut SceneScript, slack: usize) -> usize {
        for _ in 0..200 {
            let towards = self.rng.uniform() < 0.5;
            let depth = if towards {
                self.rng.range(0.05, 0.3)
            } else {
                self.rng.range(0.7, 0.95)
            };
            let speed = self.walker_speed();
            let vz = if towards { speed } else { -speed };
            let spec = self.pedestrian([0.0, vz], depth);
            let x0 = self.rng.range(0.2, 0.8) * self.size as f64;
            let sprite = ScriptedSprite {
                spec,
                entry: 0,
                exit: DURATION,
                x0,
            };
            let mut probe = s.clone();
            probe.duration = DURATION + slack;
            probe.sprites.push(ScriptedSprite {
                exit: DURATION + slack,
                ..sprite.clone()
            });
            if depth_in_range(&probe, probe.sprites.len() - 1) {
                s.sprites.push(sprite);
                return s.sprites.len() - 1;
            }
        }
        unreachable!("axial walker rejection sampling exhausted")
    }

    /// Ends a sprite's lifetime once it has left the frame for good.
    fn trim_exit(&self, s: &mut SceneScript, i: usize) {
        let vis = visibility(s, i);
        if let Some(last) = (0..DURATION).rev().find(|&t| vis[t] > 0.0) {
            s.sprites[i].exit = (last + 1).max(s.sprites[i].entry + 1);
        }
    }

    fn normal_scene(&mut self, split: ScriptSplit, scene: u64) -> SceneScript {
        let mut s = self.base_script(split, scene);
        self.lateral(&mut s, ShapeClass::PedestrianBlob, 0, true);
        self.lateral(&mut s, ShapeClass::PedestrianBlob, 0, true);
        self.axial(&mut s, if split == ScriptSplit::Test { 18 } else { 0 });
        self.lateral(&mut s, ShapeClass::Distractor, 0, true);
        let entry = 8 + self.rng.below(24);
        self.lateral(&mut s, ShapeClass::PedestrianBlob, entry, false);
        s
    }

    fn test_scene(&mut self, scene: u64, kinds: &[AnomalyKind], lateral_fast: bool) -> SceneScript {
        let mut s = self.normal_scene(ScriptSplit::Test, scene);
        // walker indices of normal_scene: 0, 1 lateral; 2 axial; 4 late lateral
        let solo = kinds.len() == 1;
        for (n, &kind) in kinds.iter().enumerate() {
            let start = 4 + 18 * n + self.rng.below(6);
            match kind {
                AnomalyKind::UnseenClass => {
                    let i = self.lateral(&mut s, ShapeClass::CartBlob, start.min(28), false);
                    let vis = visibility(&s, i);
                    let frames: Vec<usize> = (0..DURATION).filter(|&t| vis[t] >= 0.3).collect();
                    if let (Some(&a), Some(&b)) = (frames.first(), frames.last()) {
                        s.anomaly_events.push(AnomalyEvent {
                            frame_range: [a, b],
                            sprite_index: i,
                            kind,
                        });
                    }
                }
                AnomalyKind::FastMotion => {
                    let order: &[usize] = if lateral_fast { &[0, 1, 4] } else { &[2, 0, 1] };
                    let first = self.place_event(&mut s, order, kind, start);
                    if solo {
                        let rest: Vec<usize> = order
                            .iter()
                            .copied()
                            .filter(|&i| Some(i) != first)
                            .collect();
                        self.place_event(&mut s, &rest, kind, start + 28);
                    }
                }
                AnomalyKind::SuddenDirectionChange => {
                    let first = self.place_event(&mut s, &[0, 1, 4], kind, start);
                    if solo {
                        let rest: Vec<usize> = [2, 0, 1, 4]
                            .into_iter()
                            .filter(|&i| Some(i) != first)
                            .collect();
                        self.place_event(&mut s, &rest, kind, start + 28);
                    }
                }
            }
        }
        s
    }

    /// Tries candidate sprites in order, then later start frames, until an
    /// event fits; returns the sprite that received it.
    fn place_event(
        &mut self,
        s: &mut SceneScript,
        candidates: &[usize],
        kind: AnomalyKind,
        start: usize,
    ) -> Option<usize> {
        for offset in [0, 4, 8, 12, 16, 20] {
            for &i in candidates {
                if i < s.sprites.len() && self.add_motion_event(s, i, kind, start + offset) {
                    return Some(i);
                }
            }
        }
        None
    }

    /// Adds an event of 10-16 frames on sprite `i` starting near `start`,
    /// clipped to frames where the sprite stays well in view (and, for axial
    /// walkers, inside the depth range).
    fn add_motion_event(
        &mut self,
        s: &mut SceneScript,
        i: usize,
        kind: AnomalyKind,
        start: usize,
    ) -> bool {
        let len = 10 + self.rng.below(7);
        let saved_exit = s.sprites[i].exit;
        s.sprites[i].exit = DURATION;
        let vis = visibility(s, i);
        let Some(a) = (start..DURATION.saturating_sub(8)).find(|&t| vis[t] >= 0.6) else {
            s.sprites[i].exit = saved_exit;
            return false;
        };
        let mut b = (a + len - 1).min(DURATION - 1);
        loop {
            s.anomaly_events.push(AnomalyEvent {
                frame_range: [a, b],
                sprite_index: i,
                kind,
            });
            let vis = visibility(s, i);
            let ok = (a..=b).all(|t| vis[t] >= 0.6) && depth_in_range(s, i);
            if ok {
                self.trim_exit(s, i);
                return true;
            }
            s.anomaly_events.pop();
            if b <= a + 5 {
                s.sprites[i].exit = saved_exit;
                return false;
            }
            b -= 1;
        }
    }
}

fn depth_in_range(s: &SceneScript, i: usize) -> bool {
    trajectory(s, i)
        .iter()
        .flatten()
        .all(|st| (0.02..=0.98).contains(&st.depth))
}

/// Fraction of sprite `i`'s bounding box inside the frame, per frame.
fn visibility(s: &SceneScript, i: usize) -> Vec<f64> {
    let states = trajectory(s, i);
    let sp = &s.sprites[i];
    let (w, h) = (s.width as f64, s.height as f64);
    (0..s.duration)
        .map(|t| {
            if t < sp.entry || t >= sp.exit {
                return 0.0;
            }
            let Some(State { x, depth }) = states[t + 1] else {
                return 0.0;
            };
            let unit = s.geometry.scale(depth) * sp.spec.size;
            let half_w = 1.2 * unit;
            let (top, bottom) = (
                s.geometry.row(depth) - unit,
                s.geometry.row(depth) + 1.2 * unit,
            );
            let ix = ((x + half_w).min(w) - (x - half_w).max(0.0)).max(0.0);
            let iy = (bottom.min(h) - top.max(0.0)).max(0.0);
            ix * iy / (2.0 * half_w * (bottom - top))
        })
        .collect()
}
