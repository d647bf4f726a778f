use vad_core::{Error, Frame, Result, RunConfig, Split, VideoDir};
use vad_nets::Tensor;
use vad_teachers::{TeacherSet, VideoTeacher};

/// Every tensor a student or its loss needs for one video, indexed by
/// zero-based frame.
#[derive(Clone, Debug)]
pub struct PreparedVideo {
    pub id: String,
    pub split: Split,
    /// `[C, H, W]` images.
    pub frames: Vec<Tensor>,
    /// One-hot or score segmentation, background in channel 0.
    pub seg: Vec<Tensor>,
    /// Foreground-masked flow magnitude into each frame, `[1, H, W]`.
    pub flow_mag: Vec<Tensor>,
    /// Context stack `[X, Y, depth]` per frame.
    pub context: Vec<Tensor>,
    pub labels: Option<Vec<u8>>,
}

/// Planar copy of a frame's pixels.
pub fn frame_tensor(f: &Frame) -> Tensor {
    let mut data = vec![0.0; f.pixels.len()];
    let plane = f.height * f.width;
    for (i, px) in f.pixels.chunks_exact(f.channels).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            data[c * plane + i] = v as f64;
        }
    }
    Tensor {
        c: f.channels,
        h: f.height,
        w: f.width,
        data,
    }
}

impl PreparedVideo {
    pub fn load(video: &VideoDir, teachers: TeacherSet, cfg: &RunConfig) -> Result<Self> {
        let teacher = VideoTeacher::open(video, teachers, cfg)?;
        let n = teacher.len();
        if n < 3 {
            return Err(Error::Ingestion {
                what: format!("video {}", video.id),
                path: video.frames_dir(),
                reason: format!("needs at least 3 frames, found {n}"),
            });
        }
        let mut out = Self {
            id: video.id.clone(),
            split: video.split,
            frames: teacher.frames().iter().map(frame_tensor).collect(),
            seg: Vec::with_capacity(n),
            flow_mag: Vec::with_capacity(n),
            context: Vec::with_capacity(n),
            labels: video.labels()?,
        };
        if let Some(l) = &out.labels {
            if l.len() != n {
                return Err(Error::Ingestion {
                    what: format!("labels of video {}", video.id),
                    path: video.labels_path(),
                    reason: format!("{} labels for {n} frames", l.len()),
                });
            }
        }
        for t in 0..n {
            let b = teacher.bundle(t)?;
            let (h, w) = (b.flow_mag.height, b.flow_mag.width);
            let plane = |v: &[f32]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
            let mut ctx = plane(&b.direction.x);
            ctx.extend(plane(&b.direction.y));
            ctx.extend(plane(&b.depth.values));
            out.context.push(Tensor::new(3, h, w, ctx)?);
            out.flow_mag.push(Tensor::from_map(&b.flow_mag));
            out.seg.push(Tensor::from_map(&b.seg));
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// True when any frame is labelled anomalous.
    pub fn has_anomalies(&self) -> bool {
        self.labels.as_ref().is_some_and(|l| l.contains(&1))
    }
}

/// Loads every video of a split in directory order.
pub fn prepare_split(
    videos: &[VideoDir],
    teachers: TeacherSet,
    cfg: &RunConfig,
) -> Result<Vec<PreparedVideo>> {
    videos
        .iter()
        .map(|v| PreparedVideo::load(v, teachers, cfg))
        .collect()
}
