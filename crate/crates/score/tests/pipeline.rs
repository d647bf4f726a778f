use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use vad_core::{Dataset, Error, RunConfig, SeededRng, Split, VideoDir};
use vad_score::{
    score_prepared, score_video, write_records, BranchModel, ScoreRecord, ScoreSeries,
};
use vad_synth::{make_benchmark, write_video, SceneFile, ScriptSplit};
use vad_teachers::{FlowSource, TeacherSet};
use vad_train::{
    prepare_split, train_prepared, BranchTask, PreparedVideo, TrainOptions, FINAL_DIR,
};

fn cfg() -> RunConfig {
    RunConfig {
        input_size: 32,
        unet_depth: 2,
        base_width: 8,
        attention_hidden: vec![4],
        epochs: 12,
        batch_size: 4,
        clips_per_epoch: Some(48),
        seed: 9,
        ..RunConfig::default()
    }
}

struct Fixture {
    root: PathBuf,
    models: Vec<BranchModel>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let root = tempfile::tempdir().unwrap().keep();
        make_benchmark(4, &cfg(), &root.join("data")).unwrap();
        let ds = Dataset::open(root.join("data")).unwrap();
        let train =
            prepare_split(&ds.train().videos().unwrap(), TeacherSet::oracle(), &cfg()).unwrap();
        let models = [BranchTask::appearance(), BranchTask::motion()]
            .into_iter()
            .map(|task| {
                let out = root.join("runs").join(task.name());
                train_prepared(&task, &train, &cfg(), &out, &TrainOptions::default()).unwrap();
                BranchModel::load(task, &out.join(FINAL_DIR)).unwrap()
            })
            .collect();
        Fixture { root, models }
    })
}

fn test_video(id: &str) -> VideoDir {
    let ds = Dataset::open(fixture().root.join("data")).unwrap();
    ds.test()
        .videos()
        .unwrap()
        .into_iter()
        .find(|v| v.id == id)
        .unwrap()
}

/// Writes a test-split video rendered from `id`'s script after `edit`.
fn variant(id: &str, name: &str, edit: impl FnOnce(&mut SceneFile)) -> VideoDir {
    let src = test_video(id);
    let mut scene: SceneFile =
        serde_json::from_str(&fs::read_to_string(src.scene_path()).unwrap()).unwrap();
    edit(&mut scene);
    let dir = fixture().root.join("variants").join(name);
    write_video(
        &dir,
        name,
        &scene.script,
        SeededRng::from_state(&scene.rng),
        &cfg(),
    )
    .unwrap();
    VideoDir::detached(Split::Test, dir)
}

fn max(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn series_cover_every_frame_of_both_branches() {
    let f = fixture();
    let v = test_video("mixed_00");
    let s = score_video(&f.models, TeacherSet::oracle(), &v, &cfg(), None).unwrap();
    let n = v.frame_count().unwrap();
    assert_eq!(s.labels.len(), n);
    assert_eq!(s.branches.len(), 2);
    for b in &s.branches {
        assert_eq!(b.raw.len(), n);
        assert_eq!(b.relaxed.len(), n);
        assert!(b.raw.iter().all(|&r| r >= 0.0 && r.is_finite()));
    }
    // Frames without a target repeat their neighbour.
    let app = s.branch(&BranchTask::appearance()).unwrap();
    assert_eq!(app.raw[0], app.raw[1]);
    assert_eq!(app.raw[n - 1], app.raw[n - 2]);
    assert_eq!(
        s.branch(&BranchTask::motion()).unwrap().raw[0],
        s.branch(&BranchTask::motion()).unwrap().raw[1]
    );
}

#[test]
fn scoring_is_deterministic() {
    let f = fixture();
    let v = test_video("turn_00");
    let a = score_video(&f.models, TeacherSet::oracle(), &v, &cfg(), None).unwrap();
    let b = score_video(&f.models, TeacherSet::oracle(), &v, &cfg(), None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn exports_records_and_heatmaps() {
    let f = fixture();
    let v = test_video("dir_00");
    let out = tempfile::tempdir().unwrap();
    let s = score_video(
        &f.models,
        TeacherSet::oracle(),
        &v,
        &cfg(),
        Some(out.path()),
    )
    .unwrap();
    let records = out.path().join("scores.jsonl");
    write_records(&records, std::slice::from_ref(&s)).unwrap();
    let lines: Vec<ScoreRecord> = fs::read_to_string(&records)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), s.labels.len());
    assert_eq!(lines[5].raw_b1, s.branches[0].raw[5]);
    assert_eq!(lines[5].relaxed_b2, Some(s.branches[1].relaxed[5]));
    assert_eq!(lines[5].label, s.labels[5]);

    let dir = out.path().join("dir_00").join("motion");
    let map = vad_core::read_dense_map(&dir.join("frame_000002.vmap")).unwrap();
    assert_eq!(map.kind, vad_core::MapKind::Anomaly);
    let png = image::open(dir.join("frame_000002.png")).unwrap();
    assert_eq!(png.width(), 32);
    assert!(
        !dir.join("frame_000001.vmap").exists(),
        "frame 0 has no motion target"
    );
}

#[test]
fn missing_teacher_files_are_ingestion_errors() {
    let v = variant("class_00", "missing_flow", |_| {});
    fs::remove_file(v.pseudo_gt_path(vad_core::dataset::PseudoGt::Flow, 7)).unwrap();
    let err = score_video(&fixture().models, TeacherSet::files(), &v, &cfg(), None).unwrap_err();
    match err {
        Error::Ingestion { path, .. } => {
            assert!(path.ends_with("frame_000008.vmap"), "{}", path.display())
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn anomalous_video_outscores_its_normal_counterpart() {
    let f = fixture();
    let normal = variant("depth_00", "depth_00_normal", |s| {
        s.script.anomaly_events.clear();
        s.script.split = ScriptSplit::Test;
    });
    let score = |v: &VideoDir| -> ScoreSeries {
        score_video(&f.models, TeacherSet::oracle(), v, &cfg(), None).unwrap()
    };
    let (n, a) = (score(&normal), score(&test_video("depth_00")));
    assert!(n.labels.iter().all(|&l| l == 0));
    let (nm, am) = (
        &n.branch(&BranchTask::motion()).unwrap().relaxed,
        &a.branch(&BranchTask::motion()).unwrap().relaxed,
    );
    println!("normal max {:.3}, anomalous max {:.3}", max(nm), max(am));
    assert!(max(nm) < max(am));
}

#[test]
fn frozen_frames_have_zero_motion_targets_and_baseline_scores() {
    let f = fixture();
    let frozen = variant("depth_00", "frozen", |s| {
        s.script.anomaly_events.clear();
        s.script.sprites.retain(|sp| sp.entry == 0);
        let n = s.script.duration;
        for sp in &mut s.script.sprites {
            sp.exit = n;
            sp.spec.velocity = [0.0, 0.0];
            sp.spec.articulation = None;
        }
    });
    let normal = variant("depth_00", "depth_00_normal_b", |s| {
        s.script.anomaly_events.clear()
    });
    let builtin = TeacherSet {
        flow: FlowSource::BuiltinEstimator,
        ..TeacherSet::oracle()
    };
    for teachers in [TeacherSet::oracle(), builtin] {
        let p = PreparedVideo::load(&frozen, teachers, &cfg()).unwrap();
        let worst = p
            .flow_mag
            .iter()
            .flat_map(|m| m.data.iter())
            .fold(0.0f64, |a, &v| a.max(v.abs()));
        let t = p
            .flow_mag
            .iter()
            .position(|m| m.data.iter().any(|&v| v.abs() >= 1e-3));
        assert!(
            worst < 1e-3,
            "{teachers:?}: worst {worst} first frame {t:?}"
        );
    }
    let p = PreparedVideo::load(&frozen, TeacherSet::oracle(), &cfg()).unwrap();
    let fz = score_prepared(&f.models, &p, &cfg(), None).unwrap();
    let nm = score_video(&f.models, TeacherSet::oracle(), &normal, &cfg(), None).unwrap();
    for task in [BranchTask::appearance(), BranchTask::motion()] {
        let (a, b) = (
            &fz.branch(&task).unwrap().raw,
            &nm.branch(&task).unwrap().raw,
        );
        println!(
            "{}: frozen max {:.3}, normal max {:.3}",
            task.name(),
            max(a),
            max(b)
        );
        assert!(max(a) <= 1.5 * max(b), "{}", task.name());
    }
}

#[test]
fn wrong_checkpoint_for_the_branch_is_rejected() {
    let dir: &Path = &fixture().root.join("runs").join("motion").join(FINAL_DIR);
    assert!(matches!(
        BranchModel::load(BranchTask::appearance(), dir),
        Err(Error::Config(_))
    ));
}
