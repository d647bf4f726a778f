use proptest::prelude::*;
use vad_core::{DenseMap, FlowEstimatorConfig, Frame};
use vad_teachers::estimate_dense_flow;

const N: usize = 48;

fn texture(x: f64, y: f64) -> f64 {
    0.5 + 0.18 * (0.61 * x + 0.2 * y).sin()
        + 0.14 * (0.37 * y - 0.53 * x + 1.0).sin()
        + 0.1 * (0.45 * x + 0.77 * y).cos()
}

fn frame(f: impl Fn(f64, f64) -> f64) -> Frame {
    let mut px = Vec::with_capacity(N * N);
    for y in 0..N {
        for x in 0..N {
            px.push(f(x as f64, y as f64).clamp(0.0, 1.0) as f32);
        }
    }
    Frame::new(N, N, 1, px, 0, "t").unwrap()
}

fn interior_mae(
    flow: &DenseMap,
    margin: usize,
    want: impl Fn(usize, usize) -> Option<(f64, f64)>,
) -> f64 {
    let (mut err, mut n) = (0.0, 0);
    for y in margin..N - margin {
        for x in margin..N - margin {
            if let Some((u, v)) = want(x, y) {
                err += (flow.at(y, x, 0) as f64 - u).abs() + (flow.at(y, x, 1) as f64 - v).abs();
                n += 1;
            }
        }
    }
    assert!(n > 0);
    err / (2 * n) as f64
}

#[test]
fn identical_frames_give_zero_flow() {
    let f = frame(texture);
    let flow = estimate_dense_flow(&f, &f, &FlowEstimatorConfig::default()).unwrap();
    assert!(flow.values.iter().all(|&v| v == 0.0));
}

#[test]
fn global_shift_right_by_three() {
    let prev = frame(texture);
    let curr = frame(|x, y| texture(x - 3.0, y));
    let flow = estimate_dense_flow(&prev, &curr, &FlowEstimatorConfig::default()).unwrap();
    let mae = interior_mae(&flow, 8, |_, _| Some((3.0, 0.0)));
    assert!(mae <= 0.5, "mae {mae}");
}

#[test]
fn subpixel_shift_is_resolved() {
    let prev = frame(texture);
    let curr = frame(|x, y| texture(x - 1.5, y + 0.5));
    let flow = estimate_dense_flow(&prev, &curr, &FlowEstimatorConfig::default()).unwrap();
    let mae = interior_mae(&flow, 8, |_, _| Some((1.5, -0.5)));
    assert!(mae <= 0.25, "mae {mae}");
}

#[test]
fn textureless_frames_give_no_motion() {
    let prev = frame(|_, _| 0.4);
    let curr = frame(|_, _| 0.6);
    let flow = estimate_dense_flow(&prev, &curr, &FlowEstimatorConfig::default()).unwrap();
    for uv in flow.values.chunks(2) {
        assert!(uv[0].hypot(uv[1]) <= 0.1);
    }
}

fn moving_disc(ox: f64, oy: f64) -> (Frame, Frame) {
    let (cx, cy, rad) = (22.0 + ox, 24.0 + oy, 11.0);
    let inside = |x: f64, y: f64| (x - cx).powi(2) + (y - cy).powi(2) <= rad * rad;
    let prev = frame(|x, y| texture(x - ox, y - oy));
    let curr = frame(|x, y| {
        if inside(x, y) {
            texture(x - ox - 2.0, y - oy - 1.0)
        } else {
            texture(x - ox, y - oy)
        }
    });
    (prev, curr)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn translation_equivariant_on_interior(a in 0usize..5, b in 0usize..5) {
        let cfg = FlowEstimatorConfig::default();
        let (p0, c0) = moving_disc(0.0, 0.0);
        let (p1, c1) = moving_disc(a as f64, b as f64);
        let f0 = estimate_dense_flow(&p0, &c0, &cfg).unwrap();
        let f1 = estimate_dense_flow(&p1, &c1, &cfg).unwrap();
        let mae = interior_mae(&f1, 8, |x, y| {
            (x >= a && y >= b).then(|| (f0.at(y - b, x - a, 0) as f64, f0.at(y - b, x - a, 1) as f64))
        });
        prop_assert!(mae <= 0.5, "mae {}", mae);
    }
}
