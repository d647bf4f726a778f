use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use vad_core::dataset::PseudoGt;
use vad_core::{write_dense_map, Dataset, RunConfig};
use vad_nets::{Checkpoint, MANIFEST};
use vad_score::{frame_auc, fuse_and_flag, write_records, BranchModel, BranchStats, ScoreSeries};
use vad_synth::{kind_name, make_benchmark, AnomalyKind, BenchmarkInventory};
use vad_teachers::{TeacherSet, VideoTeacher};
use vad_train::{train_prepared, BranchKind, BranchTask, TrainOptions, TrainReport, BEST_DIR};

use crate::manifest::ExperimentManifest;
use crate::plot::score_plot_svg;
use crate::report::{write_json, Artifacts, AucTable, EvalReport, VideoReport, REPORT_FILE};
use crate::workbench::{branch_auc, branch_scores, fused_auc, fused_series, Workbench};

pub const SCORES_FILE: &str = "scores.jsonl";
pub const HEATMAP_DIR: &str = "heatmaps";
pub const PLOT_DIR: &str = "plots";

/// Task trained for a selected branch kind.
pub fn branch_task(kind: BranchKind) -> BranchTask {
    match kind {
        BranchKind::AppearanceMotion => BranchTask::appearance(),
        BranchKind::Motion => BranchTask::motion(),
    }
}

/// Refuses to write into `out` when it holds anything, unless `force`
/// is set, in which case its contents are removed first.
pub fn prepare_output(out: &Path, force: bool) -> Result<()> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        if !parent.is_dir() {
            bail!("parent directory {} does not exist", parent.display());
        }
    }
    if out.exists() {
        let busy = fs::read_dir(out)
            .with_context(|| format!("reading {}", out.display()))?
            .next()
            .is_some();
        if busy {
            if !force {
                bail!(
                    "{} is not empty; pass --force to overwrite it",
                    out.display()
                );
            }
            fs::remove_dir_all(out).with_context(|| format!("clearing {}", out.display()))?;
        }
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

/// Generates the synthetic benchmark under `out`.
pub fn cmd_synth(
    seed: u64,
    cfg: &RunConfig,
    out: &Path,
    force: bool,
) -> Result<BenchmarkInventory> {
    cfg.validate()?;
    prepare_output(out, force)?;
    Ok(make_benchmark(seed, cfg, out)?)
}

/// Human-readable inventory: video counts and anomaly events per kind.
pub fn inventory_summary(inv: &BenchmarkInventory) -> String {
    let count = |split: &str| inv.videos.iter().filter(|v| v.split == split).count();
    let mut s = format!(
        "benchmark seed {} at {} px: {} train videos, {} test videos\n",
        inv.seed,
        inv.input_size,
        count("train"),
        count("test")
    );
    for kind in AnomalyKind::ALL {
        s += &format!(
            "  {:<24} {} events\n",
            kind_name(kind),
            inv.event_count(kind)
        );
    }
    let frames: usize = inv.videos.iter().map(|v| v.frames).sum();
    let anomalous: usize = inv.videos.iter().map(|v| v.anomalous_frames).sum();
    s += &format!("  {frames} frames, {anomalous} anomalous");
    s
}

/// Frames written by `pseudo-gt`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PseudoGtSummary {
    pub videos: usize,
    pub frames: usize,
}

/// Runs the teachers over every video and writes their outputs into each
/// video's `pseudo_gt/` directory.
pub fn cmd_pseudo_gt(
    root: &Path,
    teachers: TeacherSet,
    cfg: &RunConfig,
) -> Result<PseudoGtSummary> {
    cfg.validate()?;
    let ds = Dataset::open(root)?;
    let mut videos = ds.train().videos()?;
    videos.extend(ds.test().videos()?);
    let mut summary = PseudoGtSummary {
        videos: 0,
        frames: 0,
    };
    for v in &videos {
        let teacher = VideoTeacher::open(v, teachers, cfg)?;
        for which in [PseudoGt::Seg, PseudoGt::Flow, PseudoGt::Depth] {
            let dir = v.path.join("pseudo_gt").join(which.dir_name());
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        for t in 0..teacher.len() {
            let (seg, flow, depth) = (teacher.seg(t)?, teacher.flow(t)?, teacher.depth(t)?);
            write_dense_map(&seg, &v.pseudo_gt_path(PseudoGt::Seg, t))?;
            write_dense_map(&flow, &v.pseudo_gt_path(PseudoGt::Flow, t))?;
            write_dense_map(&depth, &v.pseudo_gt_path(PseudoGt::Depth, t))?;
        }
        log::info!("pseudo-GT for {} ({} frames)", v.id, teacher.len());
        summary.videos += 1;
        summary.frames += teacher.len();
    }
    Ok(summary)
}

/// Trains every selected branch into `out/<branch>/`.
pub fn cmd_train(
    manifest: &ExperimentManifest,
    out: &Path,
    resume: bool,
) -> Result<Vec<TrainReport>> {
    manifest.validate()?;
    manifest.write_copy(out)?;
    let wb = Workbench::open(
        &manifest.dataset_root,
        manifest.teacher_set,
        &manifest.config,
    )?;
    let opts = TrainOptions {
        resume,
        stop_after: None,
    };
    manifest
        .branch_selection
        .iter()
        .map(|&kind| {
            let task = branch_task(kind);
            let dir = out.join(task.name());
            log::info!("training {} into {}", task.name(), dir.display());
            train_prepared(&task, wb.train_videos()?, &manifest.config, &dir, &opts)
                .with_context(|| format!("training {}", task.name()))
        })
        .collect()
}

/// Loads the best checkpoint of every selected branch from `checkpoints`,
/// naming all branches whose checkpoint is missing.
pub fn load_models(manifest: &ExperimentManifest, checkpoints: &Path) -> Result<Vec<BranchModel>> {
    let dirs: Vec<(BranchTask, PathBuf)> = manifest
        .branch_selection
        .iter()
        .map(|&k| {
            let task = branch_task(k);
            (task, checkpoints.join(task.name()).join(BEST_DIR))
        })
        .collect();
    let missing: Vec<String> = dirs
        .iter()
        .filter(|(_, d)| !d.join(MANIFEST).is_file())
        .map(|(t, d)| format!("{} (expected {})", t.name(), d.display()))
        .collect();
    if !missing.is_empty() {
        bail!("missing checkpoints for branch {}", missing.join(", "));
    }
    dirs.into_iter()
        .map(|(task, dir)| {
            let model = BranchModel::load(task, &dir)?;
            let ck = Checkpoint::load(&dir)?;
            if ck.manifest.config.training_hash() != manifest.config.training_hash() {
                log::warn!(
                    "{} was trained with a different configuration",
                    dir.display()
                );
            }
            Ok(model)
        })
        .collect()
}

/// Scores the test split with the selected branches and writes the report,
/// per-frame records, heatmaps and score plots into `out`.
pub fn cmd_eval(
    manifest: &ExperimentManifest,
    checkpoints: &Path,
    out: &Path,
) -> Result<EvalReport> {
    manifest.validate()?;
    let models = load_models(manifest, checkpoints)?;
    manifest.write_copy(out)?;
    let wb = Workbench::open(
        &manifest.dataset_root,
        manifest.teacher_set,
        &manifest.config,
    )?;
    evaluate(&wb, &models, &manifest.config, out)
}

/// Evaluation on an open workbench; see [`cmd_eval`].
pub fn evaluate(
    wb: &Workbench,
    models: &[BranchModel],
    cfg: &RunConfig,
    out: &Path,
) -> Result<EvalReport> {
    let stats: Vec<Option<BranchStats>> = models
        .iter()
        .map(|m| wb.branch_stats(m, cfg))
        .collect::<Result<_>>()?;
    let heatmaps = out.join(HEATMAP_DIR);
    let series = wb.score(models, cfg, None, Some(&heatmaps))?;
    write_records(&out.join(SCORES_FILE), &series)?;

    let find = |kind: BranchKind| models.iter().position(|m| m.task.kind == kind);
    let (app, mot) = (find(BranchKind::AppearanceMotion), find(BranchKind::Motion));
    let mut excluded = Vec::new();
    let mut single = |i: Option<usize>| -> Result<Option<f64>> {
        let Some(i) = i else { return Ok(None) };
        let r = branch_auc(&series, &models[i].task, cfg, stats[i])?;
        excluded.extend(r.excluded);
        Ok(Some(r.auc))
    };
    let auc_app = single(app)?;
    let auc_mot = single(mot)?;
    let pair = app.zip(mot);
    let fused = match pair {
        Some((a, m)) => {
            let r = fused_auc(
                &series,
                [&models[a].task, &models[m].task],
                cfg,
                [stats[a], stats[m]],
            )?;
            excluded.extend(r.excluded);
            Some(r.auc)
        }
        None => None,
    };
    excluded.sort();
    excluded.dedup();

    let plots = out.join(PLOT_DIR);
    fs::create_dir_all(&plots).with_context(|| format!("creating {}", plots.display()))?;
    let mut videos = Vec::new();
    for s in &series {
        let normalized: Vec<(String, Vec<f64>)> = models
            .iter()
            .zip(&stats)
            .map(|(m, st)| {
                Ok((
                    m.task.name().to_string(),
                    branch_scores(s, &m.task, cfg, *st)?,
                ))
            })
            .collect::<Result<_>>()?;
        let svg = score_plot_svg(&s.video_id, &normalized, &s.labels);
        let path = plots.join(format!("{}.svg", s.video_id));
        fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
        videos.push(video_report(s, models, &stats, pair, cfg)?);
    }

    let report = EvalReport {
        dataset_hash: wb.dataset_hash.clone(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        convention: cfg.auc_convention,
        normalization: cfg.score_normalization,
        thresholds: cfg.branch_thresholds,
        auc: AucTable {
            appearance_motion: auc_app,
            motion: auc_mot,
            fused,
            excluded,
        },
        videos,
        artifacts: Artifacts {
            scores: SCORES_FILE.into(),
            heatmaps: HEATMAP_DIR.into(),
            plots: PLOT_DIR.into(),
        },
    };
    write_json(&report, &out.join(REPORT_FILE))?;
    Ok(report)
}

fn per_video_auc(scores: &[f64], s: &ScoreSeries) -> Result<Option<f64>> {
    match frame_auc(scores, &s.labels) {
        Ok(a) => Ok(Some(a)),
        Err(vad_core::Error::UndefinedMetric(_)) => {
            log::warn!(
                "video {} holds a single class; no per-video AUC",
                s.video_id
            );
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

fn video_report(
    s: &ScoreSeries,
    models: &[BranchModel],
    stats: &[Option<BranchStats>],
    pair: Option<(usize, usize)>,
    cfg: &RunConfig,
) -> Result<VideoReport> {
    let mut r = VideoReport {
        video_id: s.video_id.clone(),
        frames: s.labels.len(),
        anomalous_frames: s.labels.iter().filter(|&&l| l == 1).count(),
        appearance_motion: None,
        motion: None,
        fused: None,
        flagged_frames: None,
    };
    for (m, st) in models.iter().zip(stats) {
        let auc = per_video_auc(&branch_scores(s, &m.task, cfg, *st)?, s)?;
        match m.task.kind {
            BranchKind::AppearanceMotion => r.appearance_motion = auc,
            BranchKind::Motion => r.motion = auc,
        }
    }
    if let Some((a, m)) = pair {
        let one = std::slice::from_ref(s);
        let fused = fused_series(
            one,
            [&models[a].task, &models[m].task],
            cfg,
            [stats[a], stats[m]],
        )?;
        r.fused = per_video_auc(&fused[0], s)?;
        let b1 = branch_scores(s, &models[a].task, cfg, stats[a])?;
        let b2 = branch_scores(s, &models[m].task, cfg, stats[m])?;
        let flags = fuse_and_flag(&b1, &b2, cfg.branch_thresholds)?;
        r.flagged_frames = Some(flags.iter().filter(|&&f| f == 1).count());
    }
    Ok(r)
}
