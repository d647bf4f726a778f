//! On-disk dataset layout.
//!
//! ```text
//! <root>/train/<video_id>/frames/frame_000001.png ...
//! <root>/test/<video_id>/frames/frame_000001.png ...
//! <root>/<split>/<video_id>/labels.json            per-frame 0/1 labels (array)
//! <root>/<split>/<video_id>/pseudo_gt/{seg,flow,depth}/frame_000001.vmap
//! <root>/<split>/<video_id>/scene.json             synthetic scene script, if any
//! ```
//!
//! File numbers start at 1; a frame's zero-based `index` is its file number
//! minus one. Every read made through a [`VideoDir`] is appended to the
//! dataset's access log.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

use crate::densemap::{read_dense_map, DenseMap};
use crate::error::{Error, Result};
use crate::frame::Frame;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Pseudo-ground-truth channels stored per frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PseudoGt {
    Seg,
    Flow,
    Depth,
}

impl PseudoGt {
    pub fn dir_name(self) -> &'static str {
        match self {
            PseudoGt::Seg => "seg",
            PseudoGt::Flow => "flow",
            PseudoGt::Depth => "depth",
        }
    }
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{:06}.png", index + 1)
}

pub fn map_file_name(index: usize) -> String {
    format!("frame_{:06}.vmap", index + 1)
}

type AccessLog = Arc<Mutex<Vec<PathBuf>>>;

#[derive(Clone, Debug)]
pub struct Dataset {
    root: PathBuf,
    log: AccessLog,
}

impl Dataset {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.join("train").is_dir() {
            return Err(Error::Ingestion {
                what: "dataset".into(),
                path: root.join("train"),
                reason: "missing train split".into(),
            });
        }
        Ok(Self {
            root,
            log: Arc::default(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn train(&self) -> TrainSplit {
        TrainSplit(self.split(Split::Train))
    }

    pub fn test(&self) -> TestSplit {
        TestSplit(self.split(Split::Test))
    }

    fn split(&self, split: Split) -> SplitDir {
        SplitDir {
            split,
            path: self.root.join(split.dir_name()),
            log: self.log.clone(),
        }
    }

    /// Every path read through this handle (or its clones) so far.
    pub fn access_log(&self) -> Vec<PathBuf> {
        self.log.lock().unwrap().clone()
    }

    /// SHA-256 over every file under the root, in sorted path order.
    pub fn content_hash(&self) -> Result<String> {
        tree_hash(&self.root)
    }
}

/// Hex SHA-256 over relative paths and contents of every file below `root`.
pub fn tree_hash(root: &Path) -> Result<String> {
    let mut files = Vec::new();
    collect_files(root, &mut files)?;
    files.sort();
    let mut hasher = Sha256::new();
    for f in files {
        let rel = f.strip_prefix(root).unwrap_or(&f);
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update([0u8]);
        hasher.update(fs::read(&f).map_err(|e| Error::io(&f, e))?);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
struct SplitDir {
    split: Split,
    path: PathBuf,
    log: AccessLog,
}

impl SplitDir {
    fn videos(&self) -> Result<Vec<VideoDir>> {
        if !self.path.is_dir() {
            return Ok(Vec::new());
        }
        let mut ids: Vec<String> = fs::read_dir(&self.path)
            .map_err(|e| Error::io(&self.path, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        ids.sort();
        Ok(ids
            .into_iter()
            .map(|id| VideoDir {
                split: self.split,
                path: self.path.join(&id),
                id,
                log: self.log.clone(),
            })
            .collect())
    }
}

/// Handle on the normal-only training split. Training code accepts only
/// this type, so it cannot reach test frames.
#[derive(Clone, Debug)]
pub struct TrainSplit(SplitDir);

#[derive(Clone, Debug)]
pub struct TestSplit(SplitDir);

impl TrainSplit {
    pub fn videos(&self) -> Result<Vec<VideoDir>> {
        self.0.videos()
    }
}

impl TestSplit {
    pub fn videos(&self) -> Result<Vec<VideoDir>> {
        self.0.videos()
    }
}

#[derive(Clone, Debug)]
pub struct VideoDir {
    pub split: Split,
    pub id: String,
    pub path: PathBuf,
    log: AccessLog,
}

impl VideoDir {
    /// Handle on a video directory outside any dataset (not access-logged
    /// against a dataset).
    pub fn detached(split: Split, path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        let id = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self {
            split,
            id,
            path,
            log: Arc::default(),
        }
    }

    fn record(&self, path: &Path) {
        self.log.lock().unwrap().push(path.to_path_buf());
    }

    pub fn frames_dir(&self) -> PathBuf {
        self.path.join("frames")
    }

    pub fn frame_path(&self, index: usize) -> PathBuf {
        self.frames_dir().join(frame_file_name(index))
    }

    pub fn pseudo_gt_path(&self, which: PseudoGt, index: usize) -> PathBuf {
        self.path
            .join("pseudo_gt")
            .join(which.dir_name())
            .join(map_file_name(index))
    }

    pub fn labels_path(&self) -> PathBuf {
        self.path.join("labels.json")
    }

    pub fn scene_path(&self) -> PathBuf {
        self.path.join("scene.json")
    }

    pub fn frame_count(&self) -> Result<usize> {
        let dir = self.frames_dir();
        let n = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok())
            .filter(|e| {
                let name = e.file_name();
                let name = name.to_string_lossy();
                name.starts_with("frame_") && name.ends_with(".png")
            })
            .count();
        Ok(n)
    }

    pub fn load_frame(&self, index: usize, size: usize) -> Result<Frame> {
        let path = self.frame_path(index);
        self.record(&path);
        Frame::load(&path, size, index, &self.id)
    }

    pub fn load_frames(&self, size: usize) -> Result<Vec<Frame>> {
        (0..self.frame_count()?)
            .map(|i| self.load_frame(i, size))
            .collect()
    }

    /// Per-frame labels, or `None` when the video has no labels file.
    pub fn labels(&self) -> Result<Option<Vec<u8>>> {
        let path = self.labels_path();
        if !path.exists() {
            return Ok(None);
        }
        self.record(&path);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let labels: Vec<u8> = serde_json::from_str(&text)?;
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Ingestion {
                what: "labels".into(),
                path,
                reason: "labels must be 0 or 1".into(),
            });
        }
        Ok(Some(labels))
    }

    pub fn read_pseudo_gt(&self, which: PseudoGt, index: usize) -> Result<DenseMap> {
        let path = self.pseudo_gt_path(which, index);
        if !path.exists() {
            return Err(Error::Ingestion {
                what: format!("{} pseudo-GT for frame {}", which.dir_name(), index),
                path,
                reason: "file not found".into(),
            });
        }
        self.record(&path);
        read_dense_map(&path)
    }

    pub fn read_scene_text(&self) -> Result<String> {
        let path = self.scene_path();
        self.record(&path);
        fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
    }
}

pub fn write_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let text = serde_json::to_string(labels)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
