use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use anyhow::{bail, Context, Result};
use vad_core::{Dataset, RunConfig, ScoreNormalization};
use vad_score::{
    aggregate_auc, fused_scores, normalize, score_prepared, AucResult, BranchModel, BranchStats,
    ScoreSeries,
};
use vad_synth::BenchmarkInventory;
use vad_teachers::TeacherSet;
use vad_train::{
    prepare_split, train_prepared, BranchTask, PreparedVideo, TrainOptions, TrainReport, BEST_DIR,
};

/// One dataset with its teacher outputs loaded once and shared by every
/// training run and evaluation of an experiment.
pub struct Workbench {
    pub dataset: Dataset,
    pub teachers: TeacherSet,
    /// Configuration used to prepare the videos; only fields that shape
    /// the inputs (input size, flow estimator) matter for reuse.
    pub cfg: RunConfig,
    pub dataset_hash: String,
    train: OnceLock<Vec<PreparedVideo>>,
    test: OnceLock<Vec<PreparedVideo>>,
}

/// A trained branch and the report of its training run.
pub struct TrainedBranch {
    pub model: BranchModel,
    pub report: TrainReport,
    /// Training-split statistics of the relaxed scores, present when the
    /// configuration normalizes with them.
    pub stats: Option<BranchStats>,
}

impl Workbench {
    pub fn open(root: &Path, teachers: TeacherSet, cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let dataset = Dataset::open(root)?;
        let dataset_hash = dataset.content_hash()?;
        Ok(Self {
            dataset,
            teachers,
            cfg: cfg.clone(),
            dataset_hash,
            train: OnceLock::new(),
            test: OnceLock::new(),
        })
    }

    fn check_inputs(&self, cfg: &RunConfig) -> Result<()> {
        if cfg.input_size != self.cfg.input_size || cfg.flow != self.cfg.flow {
            bail!("configuration changes the prepared inputs; open a new workbench");
        }
        Ok(())
    }

    pub fn train_videos(&self) -> Result<&[PreparedVideo]> {
        if let Some(v) = self.train.get() {
            return Ok(v);
        }
        let videos = prepare_split(&self.dataset.train().videos()?, self.teachers, &self.cfg)?;
        Ok(self.train.get_or_init(|| videos))
    }

    pub fn test_videos(&self) -> Result<&[PreparedVideo]> {
        if let Some(v) = self.test.get() {
            return Ok(v);
        }
        let videos = prepare_split(&self.dataset.test().videos()?, self.teachers, &self.cfg)?;
        Ok(self.test.get_or_init(|| videos))
    }

    /// Test videos carrying any of `tags` in the benchmark inventory.
    pub fn tagged_test_ids(&self, tags: &[&str]) -> Result<Vec<String>> {
        let inv = BenchmarkInventory::load(self.dataset.root())
            .context("video tags need the benchmark inventory")?;
        Ok(inv
            .videos
            .iter()
            .filter(|v| v.split == "test" && v.tags.iter().any(|t| tags.contains(&t.as_str())))
            .map(|v| v.id.clone())
            .collect())
    }

    /// Trains `task` into `dir`, or picks up a finished or interrupted run
    /// there, and loads the best checkpoint.
    pub fn train(&self, task: BranchTask, cfg: &RunConfig, dir: &Path) -> Result<TrainedBranch> {
        self.check_inputs(cfg)?;
        let opts = TrainOptions {
            resume: true,
            stop_after: None,
        };
        let report = train_prepared(&task, self.train_videos()?, cfg, dir, &opts)
            .with_context(|| format!("training {} in {}", task.name(), dir.display()))?;
        let model = BranchModel::load(task, &dir.join(BEST_DIR))?;
        let stats = self.branch_stats(&model, cfg)?;
        Ok(TrainedBranch {
            model,
            report,
            stats,
        })
    }

    /// Training-split statistics of a branch's relaxed scores when the
    /// configuration normalizes with them, `None` otherwise.
    pub fn branch_stats(
        &self,
        model: &BranchModel,
        cfg: &RunConfig,
    ) -> Result<Option<BranchStats>> {
        if cfg.score_normalization != ScoreNormalization::TrainStats {
            return Ok(None);
        }
        let mut relaxed = Vec::new();
        for v in self.train_videos()? {
            let s = score_prepared(std::slice::from_ref(model), v, cfg, None)?;
            relaxed.push(s.branches[0].relaxed.clone());
        }
        Ok(Some(BranchStats::from_scores(
            relaxed.iter().map(Vec::as_slice),
        )?))
    }

    /// Scores the test split, or the listed videos of it, with every model.
    pub fn score(
        &self,
        models: &[BranchModel],
        cfg: &RunConfig,
        only: Option<&[String]>,
        heatmaps: Option<&Path>,
    ) -> Result<Vec<ScoreSeries>> {
        self.check_inputs(cfg)?;
        self.test_videos()?
            .iter()
            .filter(|v| only.is_none_or(|ids| ids.contains(&v.id)))
            .map(|v| Ok(score_prepared(models, v, cfg, heatmaps)?))
            .collect()
    }
}

/// Normalized relaxed scores of one branch for one video.
pub fn branch_scores(
    series: &ScoreSeries,
    task: &BranchTask,
    cfg: &RunConfig,
    stats: Option<BranchStats>,
) -> Result<Vec<f64>> {
    let b = series.branch(task).with_context(|| {
        format!(
            "video {} was not scored by {}",
            series.video_id,
            task.name()
        )
    })?;
    Ok(normalize(&b.relaxed, cfg.score_normalization, stats)?)
}

/// Frame-level AUC of a single branch over the scored videos.
pub fn branch_auc(
    series: &[ScoreSeries],
    task: &BranchTask,
    cfg: &RunConfig,
    stats: Option<BranchStats>,
) -> Result<AucResult> {
    let scores = series
        .iter()
        .map(|s| branch_scores(s, task, cfg, stats))
        .collect::<Result<Vec<_>>>()?;
    auc_of(series, &scores, cfg)
}

/// Frame-level AUC of the OR-fused pair of branches.
pub fn fused_auc(
    series: &[ScoreSeries],
    tasks: [&BranchTask; 2],
    cfg: &RunConfig,
    stats: [Option<BranchStats>; 2],
) -> Result<AucResult> {
    let scores = fused_series(series, tasks, cfg, stats)?;
    auc_of(series, &scores, cfg)
}

/// Continuous fused score of every scored video.
pub fn fused_series(
    series: &[ScoreSeries],
    tasks: [&BranchTask; 2],
    cfg: &RunConfig,
    stats: [Option<BranchStats>; 2],
) -> Result<Vec<Vec<f64>>> {
    series
        .iter()
        .map(|s| {
            let a = branch_scores(s, tasks[0], cfg, stats[0])?;
            let b = branch_scores(s, tasks[1], cfg, stats[1])?;
            Ok(fused_scores(&a, &b, cfg.branch_thresholds)?)
        })
        .collect()
}

fn auc_of(series: &[ScoreSeries], scores: &[Vec<f64>], cfg: &RunConfig) -> Result<AucResult> {
    let videos: Vec<(&str, &[f64], &[u8])> = series
        .iter()
        .zip(scores)
        .map(|(s, sc)| (s.video_id.as_str(), sc.as_slice(), s.labels.as_slice()))
        .collect();
    Ok(aggregate_auc(&videos, cfg.auc_convention)?)
}

/// Run directory of one training variant: its name plus a short training
/// hash, so differently trained runs never resume each other.
pub fn run_dir(root: &Path, name: &str, cfg: &RunConfig) -> PathBuf {
    root.join(format!("{name}-{}", &cfg.training_hash()[..12]))
}
