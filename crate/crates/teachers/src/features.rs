use vad_core::{DenseMap, Error, MapKind, Result};

/// Per-pixel flow angle in radians, `(-pi, pi]`, measured from the image's
/// horizontal axis.
#[derive(Clone, Debug, PartialEq)]
pub struct AngleMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
}

/// `x = |cos(angle)|` (motion parallel to the image plane) and
/// `y = |sin(angle)|` (motion along the camera axis); both zero where the
/// flow vanishes.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionFeatures {
    pub height: usize,
    pub width: usize,
    pub x: Vec<f32>,
    pub y: Vec<f32>,
}

pub fn flow_to_mag_ang(flow: &DenseMap) -> Result<(DenseMap, AngleMap)> {
    if flow.kind != MapKind::Flow {
        return Err(Error::contract(format!(
            "expected a flow map, got {:?}",
            flow.kind
        )));
    }
    let mut mag = Vec::with_capacity(flow.pixels());
    let mut ang = Vec::with_capacity(flow.pixels());
    for uv in flow.values.chunks_exact(2) {
        let (u, v) = (uv[0] as f64, uv[1] as f64);
        if !(u.is_finite() && v.is_finite()) {
            return Err(Error::contract("flow contains non-finite values"));
        }
        let m = u.hypot(v);
        mag.push(m as f32);
        ang.push(if m > 0.0 { v.atan2(u) as f32 } else { 0.0 });
    }
    Ok((
        DenseMap::new(MapKind::FlowMagnitude, flow.height, flow.width, 1, mag)?,
        AngleMap {
            height: flow.height,
            width: flow.width,
            values: ang,
        },
    ))
}

pub fn direction_features(ang: &AngleMap, mag: &DenseMap) -> Result<DirectionFeatures> {
    if ang.height != mag.height || ang.width != mag.width || mag.channels != 1 {
        return Err(Error::contract("angle and magnitude maps differ in shape"));
    }
    let (x, y) = ang
        .values
        .iter()
        .zip(&mag.values)
        .map(|(&a, &m)| {
            if m > 0.0 {
                let a = a as f64;
                (a.cos().abs() as f32, a.sin().abs() as f32)
            } else {
                (0.0, 0.0)
            }
        })
        .unzip();
    Ok(DirectionFeatures {
        height: ang.height,
        width: ang.width,
        x,
        y,
    })
}

/// Score above which a foreground class marks a pixel as foreground.
pub const FOREGROUND_THRESHOLD: f32 = 0.5;

/// Zeroes `map` wherever no foreground class of `seg` exceeds the
/// foreground threshold.
pub fn mask_flow(map: &DenseMap, seg: &DenseMap) -> Result<DenseMap> {
    if !map.same_plane(seg) {
        return Err(Error::contract(format!(
            "mask is {}x{} but map is {}x{}",
            seg.height, seg.width, map.height, map.width
        )));
    }
    if seg.kind != MapKind::SegmentationScores || seg.channels < 2 {
        return Err(Error::contract("mask must be a segmentation score map"));
    }
    let k = map.channels;
    let mut values = map.values.clone();
    for (p, scores) in seg.values.chunks_exact(seg.channels).enumerate() {
        let foreground = scores[1..].iter().any(|&s| s > FOREGROUND_THRESHOLD);
        if !foreground {
            values[p * k..(p + 1) * k].fill(0.0);
        }
    }
    DenseMap::new(map.kind, map.height, map.width, k, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f32::consts::{FRAC_PI_2, FRAC_PI_4};

    fn flow1(u: f32, v: f32) -> DenseMap {
        DenseMap::new(MapKind::Flow, 1, 1, 2, vec![u, v]).unwrap()
    }

    #[test]
    fn axis_and_diagonal_cases() {
        let (m, a) = flow_to_mag_ang(&flow1(1.0, 0.0)).unwrap();
        assert_eq!((m.values[0], a.values[0]), (1.0, 0.0));
        let (m, a) = flow_to_mag_ang(&flow1(0.0, 2.0)).unwrap();
        assert_eq!(m.values[0], 2.0);
        assert!((a.values[0] - FRAC_PI_2).abs() < 1e-7);
        let (m, a) = flow_to_mag_ang(&flow1(1.0, 1.0)).unwrap();
        assert!((m.values[0] - 2f32.sqrt()).abs() < 1e-7);
        assert!((a.values[0] - FRAC_PI_4).abs() < 1e-7);
        let (_, a) = flow_to_mag_ang(&flow1(0.0, 0.0)).unwrap();
        assert_eq!(a.values[0], 0.0);
    }

    #[test]
    fn direction_feature_cases() {
        let mag = DenseMap::new(MapKind::FlowMagnitude, 1, 2, 1, vec![1.0, 3.0]).unwrap();
        let ang = AngleMap {
            height: 1,
            width: 2,
            values: vec![0.0, FRAC_PI_4],
        };
        let d = direction_features(&ang, &mag).unwrap();
        assert_eq!((d.x[0], d.y[0]), (1.0, 0.0));
        let h = std::f32::consts::SQRT_2 / 2.0;
        assert!((d.x[1] - h).abs() < 1e-6 && (d.y[1] - h).abs() < 1e-6);

        let still = DenseMap::zeros(MapKind::FlowMagnitude, 1, 2, 1);
        let d = direction_features(&ang, &still).unwrap();
        assert!(d.x.iter().chain(&d.y).all(|&v| v == 0.0));
    }

    fn seg(h: usize, w: usize, fg: impl Fn(usize) -> bool) -> DenseMap {
        let mut v = vec![0f32; h * w * 4];
        for p in 0..h * w {
            v[p * 4 + if fg(p) { 1 } else { 0 }] = 1.0;
        }
        DenseMap::new(MapKind::SegmentationScores, h, w, 4, v).unwrap()
    }

    #[test]
    fn mask_cases() {
        let mag = DenseMap::new(MapKind::FlowMagnitude, 2, 4, 1, vec![2.5; 8]).unwrap();
        let none = mask_flow(&mag, &seg(2, 4, |_| false)).unwrap();
        assert!(none.values.iter().all(|&v| v == 0.0));
        let all = mask_flow(&mag, &seg(2, 4, |_| true)).unwrap();
        assert_eq!(all, mag);
        let half = mask_flow(&mag, &seg(2, 4, |p| p % 4 < 2)).unwrap();
        let total: f32 = mag.values.iter().sum();
        assert_eq!(half.values.iter().sum::<f32>(), total / 2.0);
        assert!(mask_flow(&mag, &seg(2, 3, |_| true)).is_err());
    }

    proptest! {
        #[test]
        fn unit_direction_where_moving(u in -20.0f32..20.0, v in -20.0f32..20.0) {
            let (m, a) = flow_to_mag_ang(&flow1(u, v)).unwrap();
            let d = direction_features(&a, &m).unwrap();
            if m.values[0] > 0.0 {
                prop_assert!((d.x[0].powi(2) + d.y[0].powi(2) - 1.0).abs() <= 1e-6);
            }
        }

        #[test]
        fn polar_round_trip(mag in 1e-3f64..50.0, ang in -std::f64::consts::PI..std::f64::consts::PI) {
            let ang = if ang == -std::f64::consts::PI { std::f64::consts::PI } else { ang };
            let f = flow1((mag * ang.cos()) as f32, (mag * ang.sin()) as f32);
            let (m, a) = flow_to_mag_ang(&f).unwrap();
            prop_assert!((m.values[0] as f64 - mag).abs() <= 1e-5 * mag.max(1.0));
            let mut diff = (a.values[0] as f64 - ang).abs();
            diff = diff.min(2.0 * std::f64::consts::PI - diff);
            prop_assert!(diff <= 1e-5);
        }

        #[test]
        fn mask_idempotent_and_non_increasing(vals in proptest::collection::vec(0.0f32..9.0, 12), bits in proptest::collection::vec(any::<bool>(), 12)) {
            let mag = DenseMap::new(MapKind::FlowMagnitude, 3, 4, 1, vals).unwrap();
            let s = seg(3, 4, |p| bits[p]);
            let once = mask_flow(&mag, &s).unwrap();
            let twice = mask_flow(&once, &s).unwrap();
            prop_assert_eq!(&once, &twice);
            for (a, b) in once.values.iter().zip(&mag.values) {
                prop_assert!(a.abs() <= b.abs());
            }
        }
    }
}
