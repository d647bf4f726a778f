use std::fs;

use proptest::prelude::*;
use vad_core::dataset::{tree_hash, PseudoGt};
use vad_core::{read_dense_map, Dataset, RunConfig, SeededRng};
use vad_synth::{
    make_benchmark, render_scene, AnomalyEvent, AnomalyKind, BenchmarkInventory, Geometry,
    RenderedFrame, RenderedVideo, SceneFile, SceneScript, ScriptSplit, ScriptedSprite, ShapeClass,
    SpriteSpec, FAST_FACTOR,
};

const SIZE: usize = 48;

fn cfg(size: usize) -> RunConfig {
    RunConfig {
        input_size: size,
        ..RunConfig::default()
    }
}

fn scene(velocity: [f64; 2], depth: f64, duration: usize, split: ScriptSplit) -> SceneScript {
    let mut s = SceneScript::new(SIZE, SIZE, duration, split);
    s.sprites.push(ScriptedSprite {
        spec: SpriteSpec {
            shape_class: ShapeClass::PedestrianBlob,
            size: 7.0,
            velocity,
            depth_lane: depth,
            articulation: None,
        },
        entry: 0,
        exit: duration,
        x0: 14.0,
    });
    s
}

fn render(s: &SceneScript) -> RenderedVideo {
    render_scene(s, &cfg(s.width), &mut SeededRng::new(7), "v").unwrap()
}

fn foreground(f: &RenderedFrame) -> Vec<usize> {
    (0..f.seg.pixels())
        .filter(|&p| f.seg.values[p * f.seg.channels] == 0.0)
        .collect()
}

fn max_speed(f: &RenderedFrame) -> f32 {
    foreground(f)
        .iter()
        .map(|&p| f.flow.values[2 * p].hypot(f.flow.values[2 * p + 1]))
        .fold(0.0, f32::max)
}

#[test]
fn near_lane_sprite_flow_is_its_velocity_and_background_is_still() {
    let v = render(&scene([2.0, 0.0], 1.0, 10, ScriptSplit::Test));
    let f = &v.frames[4];
    let fg = foreground(f);
    assert!(!fg.is_empty());
    for p in 0..f.flow.pixels() {
        let flow = [f.flow.values[2 * p], f.flow.values[2 * p + 1]];
        if fg.contains(&p) {
            assert_eq!(flow, [2.0, 0.0]);
            assert!((f.depth.values[p] - 1.0).abs() < 1e-6);
        } else {
            assert_eq!(flow, [0.0, 0.0]);
            assert_eq!(f.depth.values[p], 0.0);
        }
    }
}

#[test]
fn far_lane_scales_pixel_speed() {
    let near = render(&scene([2.0, 0.0], 1.0, 10, ScriptSplit::Test));
    let far = render(&scene([2.0, 0.0], 0.35, 10, ScriptSplit::Test));
    let s = Geometry::for_height(SIZE).scale(0.35) as f32;
    assert!((max_speed(&far.frames[4]) - 2.0 * s).abs() < 1e-5);
    assert!(max_speed(&far.frames[4]) < max_speed(&near.frames[4]));
}

#[test]
fn fast_event_labels_its_range_and_doubles_speed() {
    let mut s = scene([0.3, 0.0], 0.6, 80, ScriptSplit::Test);
    s.sprites[0].x0 = 2.0;
    s.anomaly_events.push(AnomalyEvent {
        frame_range: [40, 60],
        sprite_index: 0,
        kind: AnomalyKind::FastMotion,
    });
    let v = render(&s);
    for (t, f) in v.frames.iter().enumerate() {
        assert_eq!(f.label, (40..=60).contains(&t) as u8, "frame {t}");
    }
    let ratio = max_speed(&v.frames[50]) / max_speed(&v.frames[30]);
    assert!((ratio as f64 - FAST_FACTOR).abs() < 1e-4);
}

#[test]
fn direction_change_reverses_flow() {
    let mut s = scene([1.0, 0.0], 1.0, 30, ScriptSplit::Test);
    s.anomaly_events.push(AnomalyEvent {
        frame_range: [10, 20],
        sprite_index: 0,
        kind: AnomalyKind::SuddenDirectionChange,
    });
    let v = render(&s);
    let dx = |t: usize| {
        let f = &v.frames[t];
        f.flow.values[2 * foreground(f)[0]]
    };
    assert!(dx(8) > 0.0);
    assert!(dx(10) < 0.0);
}

#[test]
fn events_in_training_scripts_are_refused() {
    let mut s = scene([1.0, 0.0], 0.5, 10, ScriptSplit::Train);
    s.anomaly_events.push(AnomalyEvent {
        frame_range: [1, 2],
        sprite_index: 0,
        kind: AnomalyKind::UnseenClass,
    });
    assert!(render_scene(&s, &cfg(SIZE), &mut SeededRng::new(0), "v").is_err());
}

#[test]
fn scene_size_must_match_input_size() {
    let s = scene([1.0, 0.0], 0.5, 5, ScriptSplit::Train);
    assert!(render_scene(&s, &cfg(64), &mut SeededRng::new(0), "v").is_err());
}

/// Fraction of sprite pixels of frame t whose flow source in frame t-1 holds
/// a different intensity; integer pixel speeds make the warp exact.
fn warp_mismatch(v: &RenderedVideo) -> f64 {
    let (mut total, mut bad) = (0usize, 0usize);
    for t in 1..v.frames.len() {
        let (prev, curr) = (&v.frames[t - 1], &v.frames[t]);
        let w = curr.frame.width as isize;
        for p in foreground(curr) {
            let (row, col) = ((p as isize) / w, (p as isize) % w);
            let sc = col - curr.flow.values[2 * p].round() as isize;
            let sr = row - curr.flow.values[2 * p + 1].round() as isize;
            total += 1;
            if sc < 0 || sr < 0 || sc >= w || sr >= curr.frame.height as isize {
                bad += 1;
                continue;
            }
            let q = (sr * w + sc) as usize;
            let same = (0..curr.frame.channels).all(|c| {
                (curr.frame.pixels[p * curr.frame.channels + c]
                    - prev.frame.pixels[q * curr.frame.channels + c])
                    .abs()
                    < 1e-5
            });
            if !same {
                bad += 1;
            }
        }
    }
    bad as f64 / total.max(1) as f64
}

#[test]
fn warping_by_oracle_flow_reproduces_the_next_frame() {
    for vx in [-2.0, 1.0, 3.0] {
        let frac = warp_mismatch(&render(&scene([vx, 0.0], 1.0, 12, ScriptSplit::Test)));
        assert!(frac <= 0.02, "velocity {vx}: mismatch {frac}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    // Depths stay clear of the lane clamps, which stop vertical motion.
    fn pixel_speed_increases_with_depth(vx in 0.3f64..2.5, vy in -1.0f64..1.0, d in 0.05f64..0.45, gap in 0.05f64..0.45) {
        let d2 = d + gap;
        let slow = render(&scene([vx, vy], d, 6, ScriptSplit::Test));
        let fast = render(&scene([vx, vy], d2, 6, ScriptSplit::Test));
        prop_assert!(max_speed(&fast.frames[2]) > max_speed(&slow.frames[2]));
    }

    #[test]
    fn segmentation_is_one_hot(vx in -2.0f64..2.0, vy in -2.0f64..2.0, d in 0.0f64..=1.0) {
        let v = render(&scene([vx, vy], d, 4, ScriptSplit::Test));
        for f in &v.frames {
            for px in f.seg.values.chunks_exact(f.seg.channels) {
                prop_assert_eq!(px.iter().sum::<f32>(), 1.0);
            }
        }
    }
}

#[test]
fn benchmark_is_byte_identical_per_seed() {
    let (a, b, c) = (
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
    );
    make_benchmark(4, &cfg(32), a.path()).unwrap();
    make_benchmark(4, &cfg(32), b.path()).unwrap();
    make_benchmark(5, &cfg(32), c.path()).unwrap();
    assert_eq!(tree_hash(a.path()).unwrap(), tree_hash(b.path()).unwrap());
    assert_ne!(tree_hash(a.path()).unwrap(), tree_hash(c.path()).unwrap());
}

#[test]
fn benchmark_honours_the_semi_supervised_layout() {
    let dir = tempfile::tempdir().unwrap();
    let inv = make_benchmark(2, &cfg(32), dir.path()).unwrap();
    assert_eq!(BenchmarkInventory::load(dir.path()).unwrap(), inv);
    for kind in AnomalyKind::ALL {
        assert!(inv.event_count(kind) >= 1, "{kind:?}");
    }
    assert!(!inv.tagged("depth_diverse").is_empty());
    assert!(!inv.tagged("direction_diverse").is_empty());

    let ds = Dataset::open(dir.path()).unwrap();
    let train = ds.train().videos().unwrap();
    let test = ds.test().videos().unwrap();
    assert!(train.len() >= 8 && test.len() >= 6);
    for v in &train {
        assert!(
            v.labels().unwrap().unwrap().iter().all(|&l| l == 0),
            "{}",
            v.id
        );
        let text = fs::read_to_string(v.scene_path()).unwrap();
        let scene: SceneFile = serde_json::from_str(&text).unwrap();
        assert!(scene.script.anomaly_events.is_empty());
        assert!(scene
            .script
            .sprites
            .iter()
            .all(|s| s.spec.shape_class != ShapeClass::CartBlob));
    }
    for v in &test {
        let n = v.frame_count().unwrap();
        assert_eq!(v.labels().unwrap().unwrap().len(), n);
        for which in [PseudoGt::Seg, PseudoGt::Flow, PseudoGt::Depth] {
            assert!(read_dense_map(&v.pseudo_gt_path(which, n - 1)).is_ok());
        }
    }
}
