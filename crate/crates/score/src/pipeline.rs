use std::fs;
use std::io::Write;
use std::path::Path;

use image::GrayImage;
use serde::{Deserialize, Serialize};
use vad_core::dataset::map_file_name;
use vad_core::{write_dense_map, DenseMap, Error, MapKind, Result, RunConfig, VideoDir};
use vad_nets::{Checkpoint, OutActivation, Student, Tensor};
use vad_teachers::TeacherSet;
use vad_train::{BranchKind, BranchTask, PreparedVideo};

use crate::anomaly::{anomaly_map, frame_score};
use crate::smoothing::{smooth_scores, SmoothingSpec};

/// A trained student together with the task it was trained for.
#[derive(Clone, Debug)]
pub struct BranchModel {
    pub task: BranchTask,
    pub student: Student,
}

impl BranchModel {
    pub fn load(task: BranchTask, checkpoint: &Path) -> Result<Self> {
        let ck = Checkpoint::load(checkpoint)?;
        let head = match task.kind {
            BranchKind::AppearanceMotion => OutActivation::PerPixelSoftmax,
            BranchKind::Motion => OutActivation::Linear,
        };
        if ck.student.spec.unet.out_activation != head {
            return Err(Error::Config(format!(
                "{} does not hold a {} student",
                checkpoint.display(),
                task.name()
            )));
        }
        Ok(Self {
            task,
            student: ck.student,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchSeries {
    pub task: BranchTask,
    /// Per-frame sum of the anomaly map.
    pub raw: Vec<f64>,
    /// `raw` after Savitzky-Golay relaxation.
    pub relaxed: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub video_id: String,
    pub labels: Vec<u8>,
    pub branches: Vec<BranchSeries>,
}

impl ScoreSeries {
    pub fn branch(&self, task: &BranchTask) -> Option<&BranchSeries> {
        self.branches.iter().find(|b| &b.task == task)
    }
}

/// One exported line per frame; the second branch is absent when a single
/// branch was scored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub video_id: String,
    pub frame: usize,
    pub raw_b1: f64,
    pub raw_b2: Option<f64>,
    pub relaxed_b1: f64,
    pub relaxed_b2: Option<f64>,
    pub label: u8,
}

fn to_map(t: &Tensor, kind: MapKind) -> Result<DenseMap> {
    let mut values = t.to_interleaved();
    if kind == MapKind::FlowMagnitude {
        // A magnitude estimate below zero means zero motion.
        values.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    DenseMap::new(kind, t.h, t.w, t.c, values)
}

/// Anomaly map of every frame the branch has a target for.
pub fn branch_maps(
    model: &BranchModel,
    video: &PreparedVideo,
    cfg: &RunConfig,
) -> Result<Vec<Option<DenseMap>>> {
    let kind = match model.task.kind {
        BranchKind::AppearanceMotion => MapKind::SegmentationScores,
        BranchKind::Motion => MapKind::FlowMagnitude,
    };
    let valid = model.task.frames(video.len());
    (0..video.len())
        .map(|t| {
            if !valid.contains(&t) {
                return Ok(None);
            }
            let s = model.task.sample(video, t, cfg)?;
            let pred = model.student.predict(&s.input, s.context.as_ref())?;
            let map = anomaly_map(&to_map(&pred, kind)?, &to_map(&s.target, kind)?)?;
            Ok(Some(map))
        })
        .collect()
}

/// Fills frames without a score from the nearest scored frame.
fn fill_edges(scores: &[Option<f64>]) -> Result<Vec<f64>> {
    let first = scores
        .iter()
        .position(Option::is_some)
        .ok_or_else(|| Error::contract("no frame could be scored"))?;
    let mut out = Vec::with_capacity(scores.len());
    let mut last = scores[first].unwrap();
    for s in scores {
        if let Some(v) = s {
            last = *v;
        }
        out.push(last);
    }
    for v in out.iter_mut().take(first) {
        *v = scores[first].unwrap();
    }
    Ok(out)
}

/// Writes a map as an 8-bit grey raster scaled so that `max` is white.
pub fn heatmap_png(map: &DenseMap, max: f64, path: &Path) -> Result<()> {
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    let pixels = (0..map.pixels())
        .map(|p| {
            (map.values[p * map.channels] as f64 * scale)
                .round()
                .clamp(0.0, 255.0) as u8
        })
        .collect();
    let img = GrayImage::from_raw(map.width as u32, map.height as u32, pixels)
        .ok_or_else(|| Error::contract("heatmap buffer size mismatch"))?;
    img.save(path)?;
    Ok(())
}

fn export_heatmaps(dir: &Path, maps: &[Option<DenseMap>]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let max = maps
        .iter()
        .flatten()
        .flat_map(|m| m.values.iter())
        .fold(0.0f64, |a, &v| a.max(v as f64));
    for (t, m) in maps.iter().enumerate() {
        if let Some(m) = m {
            let name = map_file_name(t);
            write_dense_map(m, &dir.join(&name))?;
            heatmap_png(m, max, &dir.join(name.replace(".vmap", ".png")))?;
        }
    }
    Ok(())
}

/// Scores every branch on one prepared video. Heatmaps go to
/// `heatmaps/<video>/<branch>/` when a directory is given.
pub fn score_prepared(
    models: &[BranchModel],
    video: &PreparedVideo,
    cfg: &RunConfig,
    heatmaps: Option<&Path>,
) -> Result<ScoreSeries> {
    let spec = SmoothingSpec::from_config(cfg)?;
    let labels = match &video.labels {
        Some(l) => l.clone(),
        None => {
            log::warn!(
                "video {} has no labels; treating every frame as normal",
                video.id
            );
            vec![0; video.len()]
        }
    };
    let mut branches = Vec::with_capacity(models.len());
    for m in models {
        let maps = branch_maps(m, video, cfg)?;
        let scores = maps
            .iter()
            .map(|o| o.as_ref().map(frame_score).transpose())
            .collect::<Result<Vec<_>>>()?;
        let raw = fill_edges(&scores)?;
        let relaxed = smooth_scores(&raw, &spec)?;
        if let Some(dir) = heatmaps {
            export_heatmaps(&dir.join(&video.id).join(m.task.name()), &maps)?;
        }
        branches.push(BranchSeries {
            task: m.task,
            raw,
            relaxed,
        });
    }
    Ok(ScoreSeries {
        video_id: video.id.clone(),
        labels,
        branches,
    })
}

/// Loads a video's frames and teacher outputs and scores it.
pub fn score_video(
    models: &[BranchModel],
    teachers: TeacherSet,
    video: &VideoDir,
    cfg: &RunConfig,
    heatmaps: Option<&Path>,
) -> Result<ScoreSeries> {
    let prepared = PreparedVideo::load(video, teachers, cfg)?;
    score_prepared(models, &prepared, cfg, heatmaps)
}

/// Writes one JSON line per frame of every series.
pub fn write_records(path: &Path, series: &[ScoreSeries]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for s in series {
        let b1 = s
            .branches
            .first()
            .ok_or_else(|| Error::contract(format!("series of {} has no branch", s.video_id)))?;
        let b2 = s.branches.get(1);
        for t in 0..s.labels.len() {
            let rec = ScoreRecord {
                video_id: s.video_id.clone(),
                frame: t,
                raw_b1: b1.raw[t],
                raw_b2: b2.map(|b| b.raw[t]),
                relaxed_b1: b1.relaxed[t],
                relaxed_b2: b2.map(|b| b.relaxed[t]),
                label: s.labels[t],
            };
            writeln!(f, "{}", serde_json::to_string(&rec)?).map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}
