use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use vad_core::{Error, Result, RunConfig, SeededRng, Split, TrainSplit};
use vad_nets::{Checkpoint, Graph, OptimizerState, Student};
use vad_teachers::TeacherSet;

use crate::adam::Adam;
use crate::data::{prepare_split, PreparedVideo};
use crate::loss::lr_at;
use crate::task::BranchTask;

pub const FINAL_DIR: &str = "final";
pub const BEST_DIR: &str = "best";
pub const LOG_FILE: &str = "train_log.jsonl";

/// Random streams; epochs draw from `SHUFFLE_STREAM + epoch`.
const INIT_STREAM: u64 = 0x1000;
const SHUFFLE_STREAM: u64 = 0x10_0000;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrainOptions {
    /// Continue from `final/` when it exists.
    pub resume: bool,
    /// Stop once this many epochs are complete, as if interrupted.
    pub stop_after: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
    /// Seconds since this process started training.
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub task: BranchTask,
    /// Epoch-mean loss of every completed epoch.
    pub losses: Vec<f64>,
    /// Zero-based epoch of the lowest mean loss.
    pub best_epoch: usize,
    pub final_dir: PathBuf,
    pub best_dir: PathBuf,
    pub log_path: PathBuf,
}

/// Trains one branch on the training split. See [`train_prepared`].
pub fn train_branch(
    task: &BranchTask,
    train: &TrainSplit,
    teachers: TeacherSet,
    cfg: &RunConfig,
    out: &Path,
    opts: &TrainOptions,
) -> Result<TrainReport> {
    let videos = prepare_split(&train.videos()?, teachers, cfg)?;
    train_prepared(task, &videos, cfg, out, opts)
}

fn check_normal_only(videos: &[PreparedVideo]) -> Result<()> {
    for v in videos {
        if v.split != Split::Train {
            return Err(Error::contract(format!(
                "video {} is not from the training split",
                v.id
            )));
        }
        if v.has_anomalies() {
            return Err(Error::Integrity(format!(
                "training video {} contains frames labelled anomalous",
                v.id
            )));
        }
    }
    Ok(())
}

fn argmin(losses: &[f64]) -> usize {
    let mut best = 0;
    for (i, l) in losses.iter().enumerate() {
        if *l < losses[best] {
            best = i;
        }
    }
    best
}

/// Runs `cfg.epochs` epochs of Adam on the branch loss over `videos`,
/// writing `final/` after every epoch, `best/` whenever the epoch-mean loss
/// improves, and one log line per epoch.
pub fn train_prepared(
    task: &BranchTask,
    videos: &[PreparedVideo],
    cfg: &RunConfig,
    out: &Path,
    opts: &TrainOptions,
) -> Result<TrainReport> {
    cfg.validate()?;
    check_normal_only(videos)?;
    let first = videos
        .first()
        .ok_or_else(|| Error::contract("no training videos"))?;
    let spec = task.student_spec(cfg, first.frames[0].c);
    let clips: Vec<(usize, usize)> = videos
        .iter()
        .enumerate()
        .flat_map(|(i, v)| task.frames(v.len()).map(move |t| (i, t)))
        .collect();
    if clips.is_empty() {
        return Err(Error::contract("training videos yield no clips"));
    }

    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let final_dir = out.join(FINAL_DIR);
    let best_dir = out.join(BEST_DIR);
    let log_path = out.join(LOG_FILE);

    let resumed = if opts.resume && final_dir.join(vad_nets::MANIFEST).exists() {
        let ck = Checkpoint::load(&final_dir)?;
        if ck.manifest.config.training_hash() != cfg.training_hash() {
            return Err(Error::Config(format!(
                "{} was trained with a different configuration",
                final_dir.display()
            )));
        }
        if ck.manifest.student != spec {
            return Err(Error::Config(format!(
                "{} holds a different architecture",
                final_dir.display()
            )));
        }
        let opt = ck.optimizer.ok_or_else(|| {
            Error::Integrity(format!("{} has no optimizer state", final_dir.display()))
        })?;
        log::info!(
            "{}: resuming after epoch {}",
            task.name(),
            ck.manifest.epoch
        );
        Some((ck.student, opt, ck.manifest.loss_history))
    } else {
        None
    };
    let (mut student, mut opt, mut losses) = match resumed {
        Some(r) => r,
        None => {
            let student = Student::new(&spec, &mut SeededRng::derive(cfg.seed, INIT_STREAM))?;
            let opt = OptimizerState::new(&student.params);
            fs::write(&log_path, "").map_err(|e| Error::io(&log_path, e))?;
            (student, opt, Vec::new())
        }
    };

    let adam = Adam::default();
    let per_epoch = cfg.clips_per_epoch.unwrap_or(clips.len()).min(clips.len());
    let stop = opts.stop_after.unwrap_or(cfg.epochs).min(cfg.epochs);
    let started = Instant::now();
    for epoch in losses.len()..stop {
        let lr = lr_at(epoch, cfg);
        let mut order = clips.clone();
        SeededRng::derive(cfg.seed, SHUFFLE_STREAM + epoch as u64).shuffle(&mut order);
        order.truncate(per_epoch);
        let mut total = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut acc = student.params.zeros_like();
            for &(v, t) in chunk {
                let s = task.sample(&videos[v], t, cfg)?;
                let mut g = Graph::new(&student.params);
                let x = g.input(s.input);
                let c = s.context.map(|c| g.input(c));
                let y = student.forward(&mut g, x, c)?;
                let l = task.loss(&mut g, y, &s.target, cfg)?;
                let value = g.value(l).data[0];
                if !value.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch });
                }
                total += value;
                acc.add_assign(&g.backward(l).params);
            }
            acc.scale(1.0 / chunk.len() as f64);
            adam.step(&mut student.params, &acc, &mut opt, lr);
        }
        let mean = total / per_epoch as f64;
        losses.push(mean);
        log::info!("{} epoch {epoch}: loss {mean:.6} lr {lr:e}", task.name());

        Checkpoint::save(&final_dir, &student, cfg, &losses, Some(&opt))?;
        if argmin(&losses) == epoch {
            Checkpoint::save(&best_dir, &student, cfg, &losses, None)?;
        }
        let entry = LogEntry {
            epoch,
            mean_loss: mean,
            lr,
            wall_time: started.elapsed().as_secs_f64(),
        };
        let mut f = OpenOptions::new()
            .append(true)
            .create(true)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?;
        writeln!(f, "{}", serde_json::to_string(&entry)?).map_err(|e| Error::io(&log_path, e))?;
    }
    if losses.is_empty() {
        return Err(Error::Config("training ran for zero epochs".into()));
    }
    Ok(TrainReport {
        task: *task,
        best_epoch: argmin(&losses),
        losses,
        final_dir,
        best_dir,
        log_path,
    })
}
