use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use vad_core::{AttentionPosition, RunConfig};
use vad_score::{BranchModel, ScoreSeries};
use vad_train::{BranchKind, BranchTask};

use crate::manifest::{Ablation, ExperimentManifest};
use crate::report::{assign_ranks, write_json, AblationReport, AblationRow, ABLATION_FILE};
use crate::workbench::{branch_auc, fused_auc, run_dir, TrainedBranch, Workbench};

/// Tags of the test videos the attention-mechanism sweep is scored on.
pub const DIVERSE_TAGS: [&str; 2] = ["depth_diverse", "direction_diverse"];

/// A model a sweep point needs: the task and the configuration it trains with.
#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub name: String,
    pub task: BranchTask,
    pub cfg: RunConfig,
}

/// One row of a sweep: a single branch or an OR-fused pair.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub name: String,
    pub variants: Vec<Variant>,
}

/// Variant training `task` with `cfg`. Names depend only on what is
/// trained, so sweeps that need the same model share its run directory.
pub fn variant_for(task: BranchTask, cfg: &RunConfig) -> Variant {
    let name = match (task.kind, cfg.attention_position, cfg.scse_enabled) {
        (BranchKind::AppearanceMotion, _, _) => task.name().to_string(),
        (BranchKind::Motion, AttentionPosition::None, false) => "motion-unet".to_string(),
        (BranchKind::Motion, p, s) => {
            format!("motion-{}{}", p.name(), if s { "-scse" } else { "" })
        }
    };
    Variant {
        name,
        task,
        cfg: cfg.clone(),
    }
}

fn point(name: &str, variants: &[&Variant]) -> SweepPoint {
    SweepPoint {
        name: name.to_string(),
        variants: variants.iter().map(|&v| v.clone()).collect(),
    }
}

/// Motion branch with attention at `pos` and SCSE as given.
fn motion(cfg: &RunConfig, pos: AttentionPosition, scse: bool) -> Variant {
    let cfg = RunConfig {
        attention_position: pos,
        scse_enabled: scse,
        ..cfg.clone()
    };
    variant_for(BranchTask::motion(), &cfg)
}

/// Sweep points of `ablation` whose branches are all selected.
pub fn sweep_points(ablation: Ablation, manifest: &ExperimentManifest) -> Vec<SweepPoint> {
    let cfg = &manifest.config;
    let points = match ablation {
        Ablation::ProxyTasks => {
            let seg = variant_for(BranchTask::segmentation(), cfg);
            let pred = variant_for(BranchTask::appearance(), cfg);
            let ofm = variant_for(BranchTask::motion(), cfg);
            vec![
                point("Seg", &[&seg]),
                point("OFM", &[&ofm]),
                point("Seg+Pred", &[&pred]),
                point("Seg+OFM", &[&seg, &ofm]),
                point("Seg+OFM+Pred", &[&pred, &ofm]),
            ]
        }
        Ablation::AttentionMechanisms => {
            let pos = match cfg.attention_position {
                AttentionPosition::None => AttentionPosition::Decoder,
                p => p,
            };
            vec![
                point("UNet", &[&motion(cfg, AttentionPosition::None, false)]),
                point("UNet+Att", &[&motion(cfg, pos, false)]),
                point("UNet+Att+SCSE", &[&motion(cfg, pos, true)]),
            ]
        }
        Ablation::AttentionPosition => AttentionPosition::ALL
            .iter()
            .map(|&p| point(p.name(), &[&motion(cfg, p, false)]))
            .collect(),
    };
    points
        .into_iter()
        .filter(|p| p.variants.iter().all(|v| manifest.selects(v.task.kind)))
        .collect()
}

/// Runs one sweep on an open workbench. Trained variants live under
/// `out/runs/` and are reused by later sweeps with the same configuration.
pub fn run_ablation(
    wb: &Workbench,
    manifest: &ExperimentManifest,
    ablation: Ablation,
    out: &Path,
) -> Result<AblationReport> {
    let points = sweep_points(ablation, manifest);
    if points.len() < 2 {
        bail!(
            "the {} sweep has {} configuration(s) for branches {:?}; at least 2 are needed",
            ablation.name(),
            points.len(),
            manifest.branch_selection
        );
    }
    let videos: Option<Vec<String>> = match ablation {
        Ablation::ProxyTasks | Ablation::AttentionPosition => None,
        Ablation::AttentionMechanisms => {
            let ids = wb.tagged_test_ids(&DIVERSE_TAGS)?;
            if ids.is_empty() {
                bail!("no test video is tagged {}", DIVERSE_TAGS.join(" or "));
            }
            Some(ids)
        }
    };
    let runs = out.join("runs");
    let mut trained: HashMap<PathBuf, TrainedBranch> = HashMap::new();
    let mut rows = Vec::new();
    for p in &points {
        for v in &p.variants {
            let dir = run_dir(&runs, &v.name, &v.cfg);
            if let std::collections::hash_map::Entry::Vacant(slot) = trained.entry(dir) {
                log::info!("{}: training {}", p.name, v.name);
                let t = wb.train(v.task, &v.cfg, slot.key())?;
                slot.insert(t);
            }
        }
        let branches: Vec<&TrainedBranch> = p
            .variants
            .iter()
            .map(|v| &trained[&run_dir(&runs, &v.name, &v.cfg)])
            .collect();
        let models: Vec<BranchModel> = branches.iter().map(|b| b.model.clone()).collect();
        let cfg = &p.variants[0].cfg;
        let series: Vec<ScoreSeries> = wb.score(&models, cfg, videos.as_deref(), None)?;
        let auc = match branches.as_slice() {
            [b] => branch_auc(&series, &b.model.task, cfg, b.stats)?.auc,
            [a, m] => {
                debug_assert_eq!(a.model.task.kind, BranchKind::AppearanceMotion);
                fused_auc(
                    &series,
                    [&a.model.task, &m.model.task],
                    cfg,
                    [a.stats, m.stats],
                )?
                .auc
            }
            _ => bail!("sweep point {} has {} branches", p.name, branches.len()),
        };
        log::info!("{}: AUC {auc:.4}", p.name);
        rows.push(AblationRow {
            name: p.name.clone(),
            auc,
            rank: 0,
            seed: manifest.config.seed,
            dataset_hash: wb.dataset_hash.clone(),
            config_hashes: p.variants.iter().map(|v| v.cfg.hash()).collect(),
        });
    }
    assign_ranks(&mut rows);
    let scored = match &videos {
        Some(ids) => ids.clone(),
        None => wb.test_videos()?.iter().map(|v| v.id.clone()).collect(),
    };
    let metric = match ablation {
        Ablation::ProxyTasks => "frame AUC, fused where two branches",
        _ => "motion-branch frame AUC",
    };
    let report = AblationReport {
        sweep: ablation,
        seed: manifest.config.seed,
        dataset_hash: wb.dataset_hash.clone(),
        metric: metric.to_string(),
        videos: scored,
        rows,
    };
    write_json(
        &report,
        &out.join(format!("{}_{ABLATION_FILE}", ablation.name())),
    )?;
    Ok(report)
}

/// Runs the manifest's ablation sweep into `out`.
pub fn cmd_ablate(manifest: &ExperimentManifest, out: &Path) -> Result<AblationReport> {
    manifest.validate()?;
    let Some(ablation) = manifest.ablation else {
        bail!("the manifest names no ablation; set \"ablation\" to proxy_tasks, attention_mechanisms or attention_position");
    };
    if sweep_points(ablation, manifest).len() < 2 {
        bail!(
            "the {} sweep has fewer than 2 configurations for branches {:?}",
            ablation.name(),
            manifest.branch_selection
        );
    }
    manifest.write_copy(out)?;
    let wb = Workbench::open(
        &manifest.dataset_root,
        manifest.teacher_set,
        &manifest.config,
    )?;
    run_ablation(&wb, manifest, ablation, out)
}
