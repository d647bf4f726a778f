use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use vad_core::{Dataset, Error, RunConfig, SeededRng, VideoDir};
use vad_nets::{Checkpoint, Tensor, MANIFEST};
use vad_synth::{make_benchmark, write_video, SceneScript, ScriptSplit};
use vad_teachers::TeacherSet;
use vad_train::{
    prepare_split, train_branch, train_prepared, BranchTask, LogEntry, PreparedVideo, TrainOptions,
    BEST_DIR, FINAL_DIR, LOG_FILE,
};

fn cfg() -> RunConfig {
    RunConfig {
        input_size: 32,
        unet_depth: 2,
        base_width: 4,
        attention_hidden: vec![4],
        epochs: 6,
        batch_size: 4,
        clips_per_epoch: Some(16),
        seed: 5,
        ..RunConfig::default()
    }
}

fn bench() -> &'static Path {
    static ROOT: OnceLock<PathBuf> = OnceLock::new();
    ROOT.get_or_init(|| {
        let root = tempfile::tempdir().unwrap().keep();
        make_benchmark(2, &cfg(), &root).unwrap();
        root
    })
}

fn train_videos() -> &'static [PreparedVideo] {
    static VIDEOS: OnceLock<Vec<PreparedVideo>> = OnceLock::new();
    VIDEOS.get_or_init(|| {
        let ds = Dataset::open(bench()).unwrap();
        prepare_split(&ds.train().videos().unwrap(), TeacherSet::oracle(), &cfg()).unwrap()
    })
}

fn read_log(dir: &Path) -> Vec<LogEntry> {
    fs::read_to_string(dir.join(LOG_FILE))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn motion_branch_halves_its_loss_in_thirty_epochs() {
    let out = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        epochs: 30,
        ..cfg()
    };
    let r = train_prepared(
        &BranchTask::motion(),
        train_videos(),
        &cfg,
        out.path(),
        &TrainOptions::default(),
    )
    .unwrap();
    assert_eq!(r.losses.len(), 30);
    let (first, last) = (r.losses[0], *r.losses.last().unwrap());
    println!("epoch 0 loss {first:.5}, epoch 29 loss {last:.5}");
    assert!(last <= 0.5 * first, "loss went from {first} to {last}");
}

#[test]
fn equal_seeds_give_identical_loss_sequences() {
    let run = |seed| {
        let out = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            seed,
            epochs: 3,
            ..cfg()
        };
        train_prepared(
            &BranchTask::appearance(),
            train_videos(),
            &cfg,
            out.path(),
            &TrainOptions::default(),
        )
        .unwrap()
        .losses
    };
    let a = run(5);
    assert_eq!(a, run(5));
    assert_ne!(a, run(6));
}

#[test]
fn writes_checkpoints_and_one_log_line_per_epoch() {
    let out = tempfile::tempdir().unwrap();
    let r = train_prepared(
        &BranchTask::motion(),
        train_videos(),
        &cfg(),
        out.path(),
        &TrainOptions::default(),
    )
    .unwrap();
    let log = read_log(out.path());
    assert_eq!(log.len(), 6);
    for (i, e) in log.iter().enumerate() {
        assert_eq!(e.epoch, i);
        assert_eq!(e.mean_loss, r.losses[i]);
        assert_eq!(e.lr, 0.001);
    }
    let fin = Checkpoint::load(&out.path().join(FINAL_DIR)).unwrap();
    let best = Checkpoint::load(&out.path().join(BEST_DIR)).unwrap();
    assert_eq!(fin.manifest.loss_history, r.losses);
    assert!(fin.optimizer.is_some());
    assert_eq!(best.manifest.epoch, r.best_epoch + 1);
    let min = r.losses.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(r.losses[r.best_epoch], min);
}

#[test]
fn resumed_run_continues_the_uninterrupted_one() {
    let full = tempfile::tempdir().unwrap();
    let a = train_prepared(
        &BranchTask::motion(),
        train_videos(),
        &cfg(),
        full.path(),
        &TrainOptions::default(),
    )
    .unwrap();

    let part = tempfile::tempdir().unwrap();
    let stopped = TrainOptions {
        resume: false,
        stop_after: Some(3),
    };
    let b = train_prepared(
        &BranchTask::motion(),
        train_videos(),
        &cfg(),
        part.path(),
        &stopped,
    )
    .unwrap();
    assert_eq!(b.losses.len(), 3);
    let resume = TrainOptions {
        resume: true,
        stop_after: None,
    };
    let c = train_prepared(
        &BranchTask::motion(),
        train_videos(),
        &cfg(),
        part.path(),
        &resume,
    )
    .unwrap();
    assert_eq!(c.losses.len(), 6);
    for (x, y) in a.losses.iter().zip(&c.losses) {
        assert!((x - y).abs() <= 0.05 * x.abs(), "{x} vs {y}");
    }
    assert_eq!(read_log(part.path()).len(), 6);
}

#[test]
fn resume_refuses_a_tampered_or_foreign_checkpoint() {
    let out = tempfile::tempdir().unwrap();
    let stopped = TrainOptions {
        resume: false,
        stop_after: Some(1),
    };
    train_prepared(
        &BranchTask::motion(),
        train_videos(),
        &cfg(),
        out.path(),
        &stopped,
    )
    .unwrap();
    let resume = TrainOptions {
        resume: true,
        stop_after: None,
    };

    let other = RunConfig {
        lr_init: 0.01,
        ..cfg()
    };
    let err = train_prepared(
        &BranchTask::motion(),
        train_videos(),
        &other,
        out.path(),
        &resume,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");

    let path = out.path().join(FINAL_DIR).join(MANIFEST);
    let mut m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    m["config_hash"] = serde_json::json!("0000");
    fs::write(&path, serde_json::to_string(&m).unwrap()).unwrap();
    let err = train_prepared(
        &BranchTask::motion(),
        train_videos(),
        &cfg(),
        out.path(),
        &resume,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Integrity(_)), "{err}");
}

#[test]
fn training_reads_only_the_training_split() {
    let ds = Dataset::open(bench()).unwrap();
    let out = tempfile::tempdir().unwrap();
    let cfg = RunConfig { epochs: 1, ..cfg() };
    train_branch(
        &BranchTask::motion(),
        &ds.train(),
        TeacherSet::oracle(),
        &cfg,
        out.path(),
        &TrainOptions::default(),
    )
    .unwrap();
    let log = ds.access_log();
    assert!(!log.is_empty());
    let train_root = bench().join("train");
    assert!(
        log.iter().all(|p| p.starts_with(&train_root)),
        "read outside train/"
    );
}

#[test]
fn anomalous_training_frames_abort_training() {
    let root = tempfile::tempdir().unwrap();
    let cfg = RunConfig { epochs: 1, ..cfg() };
    let mut script = SceneScript::new(32, 32, 8, ScriptSplit::Train);
    script.background_seed = 3;
    let dir = root.path().join("train").join("bad");
    write_video(&dir, "bad", &script, SeededRng::new(1), &cfg).unwrap();
    fs::write(dir.join("labels.json"), "[0,0,0,1,0,0,0,0]").unwrap();
    let ds = Dataset::open(root.path()).unwrap();
    let out = tempfile::tempdir().unwrap();
    let err = train_branch(
        &BranchTask::motion(),
        &ds.train(),
        TeacherSet::oracle(),
        &cfg,
        out.path(),
        &TrainOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Integrity(_)), "{err}");
}

#[test]
fn test_split_videos_are_rejected() {
    let ds = Dataset::open(bench()).unwrap();
    let test = ds.test().videos().unwrap();
    let v = PreparedVideo::load(&test[0], TeacherSet::oracle(), &cfg()).unwrap();
    let out = tempfile::tempdir().unwrap();
    let err = train_prepared(
        &BranchTask::motion(),
        &[v],
        &cfg(),
        out.path(),
        &TrainOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Contract(_)), "{err}");
}

#[test]
fn diverging_training_reports_epoch_and_batch() {
    let out = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        lr_init: 1e200,
        epochs: 3,
        ..cfg()
    };
    let err = train_prepared(
        &BranchTask::motion(),
        train_videos(),
        &cfg,
        out.path(),
        &TrainOptions::default(),
    )
    .unwrap_err();
    match err {
        Error::NonFiniteLoss { epoch, batch } => {
            assert!(epoch < 3);
            assert!(epoch > 0 || batch > 0);
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn appearance_branch_learns_an_empty_scene() {
    let root = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        epochs: 60,
        clips_per_epoch: Some(16),
        base_width: 8,
        ..cfg()
    };
    for i in 0..2 {
        let mut script = SceneScript::new(32, 32, 10, ScriptSplit::Train);
        script.background_seed = 40 + i;
        let id = format!("bg_{i}");
        write_video(
            &root.path().join("train").join(&id),
            &id,
            &script,
            SeededRng::new(i),
            &cfg,
        )
        .unwrap();
    }
    let ds = Dataset::open(root.path()).unwrap();
    let out = tempfile::tempdir().unwrap();
    let r = train_branch(
        &BranchTask::appearance(),
        &ds.train(),
        TeacherSet::oracle(),
        &cfg,
        out.path(),
        &TrainOptions::default(),
    )
    .unwrap();
    let student = Checkpoint::load(&r.final_dir).unwrap().student;
    let videos: Vec<VideoDir> = ds.train().videos().unwrap();
    let v = PreparedVideo::load(&videos[1], TeacherSet::oracle(), &cfg).unwrap();
    let s = BranchTask::appearance().sample(&v, 4, &cfg).unwrap();
    let y: Tensor = student.predict(&s.input, None).unwrap();
    let worst = y.data[..y.plane()]
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    assert!(worst > 0.9, "lowest background score {worst}");
}
