use std::fs;
use std::path::Path;

use proptest::prelude::*;
use vad_core::dataset::{write_labels, PseudoGt};
use vad_core::{
    read_dense_map, write_dense_map, AucConvention, Dataset, DenseMap, Error, Frame, MapKind,
    RunConfig, ScoreNormalization, SeededRng,
};

#[test]
fn same_seed_same_first_draws() {
    let (mut a, mut b) = (SeededRng::new(0), SeededRng::new(0));
    assert_eq!((a.uniform(), a.uniform()), (b.uniform(), b.uniform()));
}

#[test]
fn different_seeds_diverge_early() {
    let (mut a, mut b) = (SeededRng::new(0), SeededRng::new(1));
    assert!((0..100).any(|_| a.uniform() != b.uniform()));
}

#[test]
fn restored_state_continues_the_stream() {
    let mut rng = SeededRng::new(42);
    for _ in 0..17 {
        rng.uniform();
    }
    let mut restored = SeededRng::from_state(&rng.state());
    let rest: Vec<f64> = (0..50).map(|_| rng.uniform()).collect();
    let again: Vec<f64> = (0..50).map(|_| restored.uniform()).collect();
    assert_eq!(rest, again);
}

#[test]
fn state_survives_json() {
    let mut rng = SeededRng::derive(3, 9);
    rng.uniform();
    let text = serde_json::to_string(&rng.state()).unwrap();
    let mut back = SeededRng::from_state(&serde_json::from_str(&text).unwrap());
    assert_eq!(rng.uniform(), back.uniform());
}

#[test]
fn forked_streams_are_independent_of_parent_position() {
    let a = SeededRng::new(5);
    let mut b = SeededRng::new(5);
    b.uniform();
    assert_eq!(a.fork(2).uniform(), b.fork(2).uniform());
    assert_ne!(a.fork(2).uniform(), a.fork(3).uniform());
}

#[test]
fn zero_map_has_header_plus_payload_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("z.vmap");
    write_dense_map(&DenseMap::zeros(MapKind::Depth, 2, 2, 1), &path).unwrap();
    let bytes = fs::read(&path).unwrap();
    assert_eq!(bytes.len(), 8 + 16 + 16);
    assert_eq!(&bytes[..8], b"VADMAP01");
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
}

#[test]
fn magic_mismatch_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.vmap");
    let mut bytes = DenseMap::zeros(MapKind::Flow, 1, 1, 2).to_bytes();
    bytes[..8].copy_from_slice(b"VADMAP99");
    fs::write(&path, bytes).unwrap();
    assert!(matches!(read_dense_map(&path), Err(Error::Format(_))));
}

#[test]
fn truncated_file_is_a_length_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cut.vmap");
    let bytes = DenseMap::zeros(MapKind::Flow, 4, 4, 2).to_bytes();
    fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
    assert!(matches!(read_dense_map(&path), Err(Error::Length { .. })));
}

#[test]
fn payload_is_row_major_channel_interleaved() {
    let values: Vec<f32> = (0..3 * 2 * 2).map(|v| v as f32).collect();
    let map = DenseMap::new(MapKind::Flow, 3, 2, 2, values).unwrap();
    let bytes = map.to_bytes();
    let at = |i: usize| f32::from_le_bytes(bytes[24 + 4 * i..28 + 4 * i].try_into().unwrap());
    assert_eq!(at(0), map.at(0, 0, 0));
    assert_eq!(at(1), map.at(0, 0, 1));
    assert_eq!(at(2), map.at(0, 1, 0));
    assert_eq!(at(4), map.at(1, 0, 0));
}

fn any_map() -> impl Strategy<Value = DenseMap> {
    (0u32..7, 1usize..8, 1usize..8, 1usize..4).prop_flat_map(|(code, h, w, k)| {
        let kind = MapKind::from_code(code).unwrap();
        let k = kind.fixed_channels().unwrap_or(k);
        let range = match kind {
            MapKind::Flow | MapKind::Parameter => -100.0f32..100.0,
            MapKind::Anomaly | MapKind::FlowMagnitude => 0.0f32..100.0,
            _ => 0.0f32..1.0,
        };
        proptest::collection::vec(range, h * w * k)
            .prop_map(move |v| DenseMap::new(kind, h, w, k, v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn file_round_trip_is_identity(map in any_map()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.vmap");
        write_dense_map(&map, &path).unwrap();
        prop_assert_eq!(read_dense_map(&path).unwrap(), map);
    }

    #[test]
    fn even_smoothing_windows_are_rejected(k in 1usize..50) {
        let cfg = RunConfig { smoothing_window: 2 * k, ..RunConfig::default() };
        prop_assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn order_not_below_window_is_rejected(k in 0usize..10, extra in 0usize..5) {
        let w = 2 * k + 1;
        let cfg = RunConfig { smoothing_window: w, smoothing_order: w + extra, ..RunConfig::default() };
        prop_assert!(cfg.validate().is_err());
    }

    #[test]
    fn non_positive_learning_rates_are_rejected(lr in -10.0f64..=0.0) {
        let cfg = RunConfig { lr_init: lr, ..RunConfig::default() };
        prop_assert!(cfg.validate().is_err());
    }

    #[test]
    fn patch_grid_must_divide_input(size in 8usize..300, grid in 1usize..20) {
        let cfg = RunConfig { input_size: size, patch_grid: grid, unet_depth: 2, ..RunConfig::default() };
        if size % grid != 0 {
            prop_assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn input_must_divide_by_unet_stride(depth in 2usize..6, size in 1usize..200) {
        let cfg = RunConfig { input_size: size, patch_grid: 1, unet_depth: depth, ..RunConfig::default() };
        if size % (1 << (depth - 1)) != 0 {
            prop_assert!(cfg.validate().is_err());
        }
    }
}

#[test]
fn degenerate_fields_are_rejected() {
    let d = RunConfig::default;
    let bad = [
        RunConfig {
            input_size: 0,
            ..d()
        },
        RunConfig {
            patch_grid: 0,
            ..d()
        },
        RunConfig {
            lr_init: f64::INFINITY,
            ..d()
        },
        RunConfig {
            lr_halving_period: 0,
            ..d()
        },
        RunConfig {
            branch_thresholds: [f64::NAN, 0.5],
            ..d()
        },
        RunConfig {
            batch_size: 0,
            ..d()
        },
        RunConfig {
            clips_per_epoch: Some(0),
            ..d()
        },
        RunConfig {
            unet_depth: 1,
            ..d()
        },
        RunConfig {
            base_width: 2,
            ..d()
        },
        RunConfig {
            attention_hidden: vec![],
            ..d()
        },
        RunConfig {
            attention_hidden: vec![8, 0],
            ..d()
        },
        RunConfig {
            num_classes: 0,
            ..d()
        },
        RunConfig {
            ofm_scale: 0.0,
            ..d()
        },
    ];
    for cfg in bad {
        assert!(cfg.validate().is_err(), "accepted {cfg:?}");
    }
}

#[test]
fn unknown_config_fields_are_refused() {
    let mut v = serde_json::to_value(RunConfig::default()).unwrap();
    v["learning_rate"] = serde_json::json!(0.1);
    assert!(serde_json::from_value::<RunConfig>(v).is_err());
}

#[test]
fn training_hash_ignores_scoring_fields_only() {
    let base = RunConfig::default();
    let scoring = RunConfig {
        smoothing_window: 11,
        smoothing_order: 2,
        branch_thresholds: [0.1, 0.9],
        score_normalization: ScoreNormalization::TrainStats,
        auc_convention: AucConvention::PerVideoMean,
        ..base.clone()
    };
    assert_ne!(base.hash(), scoring.hash());
    assert_eq!(base.training_hash(), scoring.training_hash());
    let retrained = RunConfig {
        lr_init: 0.01,
        ..base.clone()
    };
    assert_ne!(base.training_hash(), retrained.training_hash());
}

fn write_video(root: &Path, split: &str, id: &str, frames: usize, labels: Option<&[u8]>) {
    let dir = root.join(split).join(id);
    fs::create_dir_all(dir.join("frames")).unwrap();
    for i in 0..frames {
        let f = Frame::new(4, 4, 1, vec![i as f32 / 10.0; 16], i, id).unwrap();
        f.save(&dir.join("frames").join(format!("frame_{:06}.png", i + 1)))
            .unwrap();
    }
    if let Some(l) = labels {
        write_labels(&dir.join("labels.json"), l).unwrap();
    }
}

#[test]
fn dataset_layout_and_split_isolation() {
    let dir = tempfile::tempdir().unwrap();
    write_video(dir.path(), "train", "a", 3, None);
    write_video(dir.path(), "test", "b", 2, Some(&[0, 1]));
    let ds = Dataset::open(dir.path()).unwrap();

    let train = ds.train().videos().unwrap();
    assert_eq!(train.len(), 1);
    let frames = train[0].load_frames(4).unwrap();
    assert_eq!(frames.len(), 3);
    assert!((frames[2].at(0, 0, 0) - 0.2).abs() < 1.0 / 255.0);
    assert_eq!(train[0].labels().unwrap(), None);
    assert!(ds
        .access_log()
        .iter()
        .all(|p| p.starts_with(dir.path().join("train"))));

    let test = ds.test().videos().unwrap();
    assert_eq!(test[0].labels().unwrap(), Some(vec![0, 1]));
    assert!(ds
        .access_log()
        .iter()
        .any(|p| p.starts_with(dir.path().join("test"))));
}

#[test]
fn pseudo_gt_paths_are_one_based() {
    let dir = tempfile::tempdir().unwrap();
    write_video(dir.path(), "train", "a", 1, None);
    let v = &Dataset::open(dir.path()).unwrap().train().videos().unwrap()[0];
    let p = v.pseudo_gt_path(PseudoGt::Flow, 0);
    assert!(p.ends_with("pseudo_gt/flow/frame_000001.vmap"));
    assert!(v.read_pseudo_gt(PseudoGt::Flow, 0).is_err());
    fs::create_dir_all(p.parent().unwrap()).unwrap();
    write_dense_map(&DenseMap::zeros(MapKind::Flow, 4, 4, 2), &p).unwrap();
    assert_eq!(
        v.read_pseudo_gt(PseudoGt::Flow, 0).unwrap().kind,
        MapKind::Flow
    );
}

#[test]
fn labels_outside_zero_one_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_video(dir.path(), "train", "a", 1, None);
    write_video(dir.path(), "test", "b", 2, None);
    fs::write(dir.path().join("test/b/labels.json"), "[0, 2]").unwrap();
    let v = &Dataset::open(dir.path()).unwrap().test().videos().unwrap()[0];
    assert!(v.labels().is_err());
}

#[test]
fn missing_train_split_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    assert!(Dataset::open(dir.path()).is_err());
}
