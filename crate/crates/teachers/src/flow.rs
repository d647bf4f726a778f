use vad_core::{DenseMap, Error, FlowEstimatorConfig, Frame, MapKind, Result};

/// Grayscale plane in row-major order.
#[derive(Clone, Debug)]
struct Plane {
    h: usize,
    w: usize,
    v: Vec<f64>,
}

impl Plane {
    fn from_frame(f: &Frame) -> Self {
        Self {
            h: f.height,
            w: f.width,
            v: f.luma().into_iter().map(f64::from).collect(),
        }
    }

    fn get(&self, y: isize, x: isize) -> f64 {
        let y = y.clamp(0, self.h as isize - 1) as usize;
        let x = x.clamp(0, self.w as isize - 1) as usize;
        self.v[y * self.w + x]
    }

    /// Separable [1 4 6 4 1]/16 blur followed by dropping every other sample.
    fn reduce(&self) -> Plane {
        const K: [f64; 5] = [1.0, 4.0, 6.0, 4.0, 1.0];
        let mut tmp = vec![0.0; self.h * self.w];
        for y in 0..self.h {
            for x in 0..self.w {
                let s: f64 = (0..5)
                    .map(|k| K[k] * self.get(y as isize, x as isize + k as isize - 2))
                    .sum();
                tmp[y * self.w + x] = s / 16.0;
            }
        }
        let blurred_rows = Plane {
            h: self.h,
            w: self.w,
            v: tmp,
        };
        let (h, w) = (self.h.div_ceil(2), self.w.div_ceil(2));
        let mut v = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let s: f64 = (0..5)
                    .map(|k| {
                        K[k] * blurred_rows.get(2 * y as isize + k as isize - 2, 2 * x as isize)
                    })
                    .sum();
                v[y * w + x] = s / 16.0;
            }
        }
        Plane { h, w, v }
    }
}

/// Per-pixel cost per squared pixel of displacement; breaks ties between
/// aliased matches in favour of the shorter motion.
const MOTION_PRIOR: f64 = 1e-4;

struct Matcher<'a> {
    prev: &'a Plane,
    curr: &'a Plane,
    half: isize,
}

impl Matcher<'_> {
    /// Motion prior plus the sum of squared differences between the window around `(y, x)` in the
    /// current frame and the window displaced by `-(dx, dy)` in the previous one.
    fn ssd(&self, y: isize, x: isize, dx: isize, dy: isize) -> f64 {
        let side = (2 * self.half + 1) as f64;
        let mut s = MOTION_PRIOR * side * side * (dx * dx + dy * dy) as f64;
        for j in -self.half..=self.half {
            for i in -self.half..=self.half {
                let d = self.curr.get(y + j, x + i) - self.prev.get(y + j - dy, x + i - dx);
                s += d * d;
            }
        }
        s
    }
}

fn parabola_offset(minus: f64, centre: f64, plus: f64) -> f64 {
    let denom = minus - 2.0 * centre + plus;
    if denom <= 1e-12 * (1.0 + centre.abs()) {
        return 0.0;
    }
    (0.5 * (minus - plus) / denom).clamp(-0.5, 0.5)
}

fn median3x3(field: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; field.len()];
    let mut buf = Vec::with_capacity(9);
    for y in 0..h {
        for x in 0..w {
            buf.clear();
            for j in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for i in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    buf.push(field[j * w + i]);
                }
            }
            buf.sort_by(f64::total_cmp);
            out[y * w + x] = buf[buf.len() / 2];
        }
    }
    out
}

/// Coarse-to-fine block-matching flow from `prev` to `curr`.
///
/// The result lives on the grid of `curr`: the content at pixel `x` of
/// `curr` was at `x - flow(x)` in `prev`.
pub fn estimate_dense_flow(
    prev: &Frame,
    curr: &Frame,
    cfg: &FlowEstimatorConfig,
) -> Result<DenseMap> {
    if prev.height != curr.height || prev.width != curr.width {
        return Err(Error::contract(format!(
            "flow needs equal frame shapes, got {}x{} and {}x{}",
            prev.height, prev.width, curr.height, curr.width
        )));
    }
    if cfg.levels == 0 || cfg.window.is_multiple_of(2) {
        return Err(Error::Config(
            "flow estimator needs at least one level and an odd window".into(),
        ));
    }
    let mut prevs = vec![Plane::from_frame(prev)];
    let mut currs = vec![Plane::from_frame(curr)];
    for _ in 1..cfg.levels {
        let (p, c) = (
            prevs.last().unwrap().reduce(),
            currs.last().unwrap().reduce(),
        );
        prevs.push(p);
        currs.push(c);
    }

    let r = cfg.search_radius as isize;
    let mut coarse: Option<(usize, usize, Vec<f64>, Vec<f64>)> = None;
    for level in (0..cfg.levels).rev() {
        let (p, c) = (&prevs[level], &currs[level]);
        let (h, w) = (c.h, c.w);
        let m = Matcher {
            prev: p,
            curr: c,
            half: (cfg.window / 2) as isize,
        };
        let mut u = vec![0.0; h * w];
        let mut v = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let (gx, gy) = match &coarse {
                    Some((ch, cw, cu, cv)) => {
                        let k = (y / 2).min(ch - 1) * cw + (x / 2).min(cw - 1);
                        (
                            (2.0 * cu[k]).round() as isize,
                            (2.0 * cv[k]).round() as isize,
                        )
                    }
                    None => (0, 0),
                };
                let (yi, xi) = (y as isize, x as isize);
                let mut best = (0, 0);
                let mut best_cost = m.ssd(yi, xi, 0, 0);
                // Search around the propagated guess and around zero, so a
                // coarse level that locked onto an alias cannot hide small motion.
                let centres = if (gx, gy) == (0, 0) {
                    vec![(0, 0)]
                } else {
                    vec![(gx, gy), (0, 0)]
                };
                for (cx, cy) in centres {
                    for dy in cy - r..=cy + r {
                        for dx in cx - r..=cx + r {
                            if (dx, dy) == (0, 0)
                                || (cx, cy) == (0, 0)
                                    && (gx, gy) != (0, 0)
                                    && (dx - gx).abs() <= r
                                    && (dy - gy).abs() <= r
                            {
                                continue;
                            }
                            let cost = m.ssd(yi, xi, dx, dy);
                            if cost < best_cost - 1e-12 * (1.0 + best_cost) {
                                best = (dx, dy);
                                best_cost = cost;
                            }
                        }
                    }
                }
                let (bx, by) = best;
                if best_cost == 0.0 && best == (0, 0) {
                    u[y * w + x] = bx as f64;
                    v[y * w + x] = by as f64;
                    continue;
                }
                let ox = parabola_offset(
                    m.ssd(yi, xi, bx - 1, by),
                    best_cost,
                    m.ssd(yi, xi, bx + 1, by),
                );
                let oy = parabola_offset(
                    m.ssd(yi, xi, bx, by - 1),
                    best_cost,
                    m.ssd(yi, xi, bx, by + 1),
                );
                u[y * w + x] = bx as f64 + ox;
                v[y * w + x] = by as f64 + oy;
            }
        }
        if level > 0 {
            u = median3x3(&u, h, w);
            v = median3x3(&v, h, w);
        }
        coarse = Some((h, w, u, v));
    }
    let (h, w, u, v) = coarse.expect("at least one level");
    let values = u
        .iter()
        .zip(&v)
        .flat_map(|(&a, &b)| [a as f32, b as f32])
        .collect();
    DenseMap::new(MapKind::Flow, h, w, 2, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(h: usize, w: usize, f: impl Fn(f64, f64) -> f64) -> Frame {
        let mut px = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                px.push(f(x as f64, y as f64).clamp(0.0, 1.0) as f32);
            }
        }
        Frame::new(h, w, 1, px, 0, "t").unwrap()
    }

    #[test]
    fn reduce_halves_and_preserves_constants() {
        let p = Plane {
            h: 9,
            w: 6,
            v: vec![0.25; 54],
        };
        let r = p.reduce();
        assert_eq!((r.h, r.w), (5, 3));
        assert!(r.v.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn parabola_recovers_vertex() {
        let f = |x: f64| 3.0 * (x - 0.3).powi(2) + 1.0;
        assert!((parabola_offset(f(-1.0), f(0.0), f(1.0)) - 0.3).abs() < 1e-12);
        assert_eq!(parabola_offset(1.0, 1.0, 1.0), 0.0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = frame(8, 8, |_, _| 0.5);
        let b = frame(8, 9, |_, _| 0.5);
        assert!(estimate_dense_flow(&a, &b, &FlowEstimatorConfig::default()).is_err());
    }
}
