use std::f64::consts::PI;

use vad_core::{DenseMap, Error, Frame, MapKind, Result, RunConfig, SeededRng};

use crate::script::{SceneScript, ShapeClass};

/// One rendered time step with its exact teacher outputs.
#[derive(Clone, Debug)]
pub struct RenderedFrame {
    pub frame: Frame,
    /// One-hot class scores, channel 0 background.
    pub seg: DenseMap,
    /// Displacement of the scene point now at each pixel since the previous
    /// frame: `I_t(x) = I_{t-1}(x - flow(x))`.
    pub flow: DenseMap,
    pub depth: DenseMap,
    pub label: u8,
}

#[derive(Clone, Debug)]
pub struct RenderedVideo {
    pub video_id: String,
    pub frames: Vec<RenderedFrame>,
}

/// Renders every frame of `script` with exact segmentation, flow and depth.
///
/// `rng` drives per-sprite texture phases only; kinematics are fully scripted.
pub fn render_scene(
    script: &SceneScript,
    cfg: &RunConfig,
    rng: &mut SeededRng,
    video_id: &str,
) -> Result<RenderedVideo> {
    script.validate()?;
    if script.width != cfg.input_size || script.height != cfg.input_size {
        return Err(Error::contract(format!(
            "scene is {}x{} but input_size is {}",
            script.width, script.height, cfg.input_size
        )));
    }
    if cfg.num_classes < 3 {
        return Err(Error::Config(
            "synthetic scenes need at least 3 foreground classes".into(),
        ));
    }
    let scene = Scene::new(script, rng);
    let labels = script.labels();
    let frames = (0..script.duration)
        .map(|t| scene.render(t, cfg.num_classes + 1, labels[t], video_id))
        .collect::<Result<Vec<_>>>()?;
    Ok(RenderedVideo {
        video_id: video_id.to_string(),
        frames,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct State {
    pub x: f64,
    pub depth: f64,
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Ellipse { a: f64, b: f64 },
    Rect { a: f64, b: f64 },
    Diamond { a: f64 },
    Circle { r: f64 },
}

impl Shape {
    fn contains(self, u: f64, v: f64) -> bool {
        match self {
            Shape::Ellipse { a, b } => (u / a).powi(2) + (v / b).powi(2) <= 1.0,
            Shape::Rect { a, b } => u.abs() <= a && v.abs() <= b,
            Shape::Diamond { a } => u.abs() + v.abs() <= a,
            Shape::Circle { r } => u * u + v * v <= r * r,
        }
    }
}

/// A rigid piece of a sprite in reference units (sprite half-height = 1).
#[derive(Clone, Copy, Debug)]
struct Part {
    offset: [f64; 2],
    shape: Shape,
    shade: f64,
    /// Foot index driving vertical swing, if articulated.
    foot: Option<usize>,
}

fn parts(class: ShapeClass) -> Vec<Part> {
    // Ordered front to back: earlier parts occlude later ones.
    match class {
        ShapeClass::PedestrianBlob => vec![
            Part {
                offset: [-0.2, 0.95],
                shape: Shape::Circle { r: 0.22 },
                shade: 0.6,
                foot: Some(0),
            },
            Part {
                offset: [0.2, 0.95],
                shape: Shape::Circle { r: 0.22 },
                shade: 0.6,
                foot: Some(1),
            },
            Part {
                offset: [0.0, 0.0],
                shape: Shape::Ellipse { a: 0.42, b: 1.0 },
                shade: 0.78,
                foot: None,
            },
        ],
        ShapeClass::CartBlob => vec![
            Part {
                offset: [-0.75, 0.85],
                shape: Shape::Circle { r: 0.22 },
                shade: 0.22,
                foot: None,
            },
            Part {
                offset: [0.75, 0.85],
                shape: Shape::Circle { r: 0.22 },
                shade: 0.22,
                foot: None,
            },
            Part {
                offset: [0.0, 0.3],
                shape: Shape::Rect { a: 1.15, b: 0.55 },
                shade: 0.52,
                foot: None,
            },
        ],
        ShapeClass::Distractor => vec![Part {
            offset: [0.0, 0.5],
            shape: Shape::Diamond { a: 0.5 },
            shade: 0.95,
            foot: None,
        }],
    }
}

const STEP_PERIOD: f64 = 8.0;
const TEXTURE_AMP: f64 = 0.12;
const TEXTURE_WAVELENGTH: f64 = 0.7;

#[derive(Clone, Debug)]
struct Appearance {
    phase: [f64; 2],
    gait_phase: f64,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Hit {
    #[allow(dead_code)]
    pub sprite: usize,
    #[allow(dead_code)]
    pub part: usize,
    pub intensity: f64,
    pub class: usize,
    pub depth: f64,
    pub flow: [f64; 2],
}

pub(crate) struct Scene<'a> {
    script: &'a SceneScript,
    /// `states[i][t + 1]` is sprite `i` at frame `t` (index 0 is frame -1).
    states: Vec<Vec<Option<State>>>,
    looks: Vec<Appearance>,
    background: Vec<f64>,
}

impl<'a> Scene<'a> {
    pub fn new(script: &'a SceneScript, rng: &mut SeededRng) -> Self {
        let states = (0..script.sprites.len())
            .map(|i| trajectory(script, i))
            .collect();
        let looks = script
            .sprites
            .iter()
            .map(|_| Appearance {
                phase: [rng.range(0.0, 2.0 * PI), rng.range(0.0, 2.0 * PI)],
                gait_phase: rng.range(0.0, 2.0 * PI),
            })
            .collect();
        Self {
            script,
            states,
            looks,
            background: background(script),
        }
    }

    pub fn state(&self, sprite: usize, t: isize) -> Option<State> {
        self.states[sprite][(t + 1) as usize]
    }

    fn scale(&self, depth: f64) -> f64 {
        self.script.geometry.scale(depth)
    }

    /// Pixel center of `part` of `sprite` at frame `t`, and the sprite's scale.
    fn part_center(&self, sprite: usize, part: &Part, t: isize) -> Option<([f64; 2], f64)> {
        let st = self.state(sprite, t)?;
        let spec = &self.script.sprites[sprite].spec;
        let s = self.scale(st.depth);
        let unit = s * spec.size;
        let mut dy = part.offset[1];
        if let (Some(foot), Some(amp)) = (part.foot, spec.articulation) {
            let phase = 2.0 * PI * t as f64 / STEP_PERIOD
                + self.looks[sprite].gait_phase
                + PI * foot as f64;
            dy += amp / spec.size * phase.sin();
        }
        let cy = self.script.geometry.row(st.depth);
        Some(([st.x + unit * part.offset[0], cy + unit * dy], s))
    }

    /// Continuous shading of scene point `(x, y)` at frame `t`, if a sprite
    /// covers it.
    pub fn hit(&self, t: isize, x: f64, y: f64) -> Option<Hit> {
        let mut order: Vec<(usize, f64)> = (0..self.script.sprites.len())
            .filter(|&i| {
                let sp = &self.script.sprites[i];
                t >= sp.entry as isize && t < sp.exit as isize
            })
            .filter_map(|i| self.state(i, t).map(|s| (i, s.depth)))
            .collect();
        // nearest first; ties by script order
        order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for (i, depth) in order {
            let spec = &self.script.sprites[i].spec;
            for (pi, part) in parts(spec.shape_class).iter().enumerate() {
                let (c, s) = self.part_center(i, part, t)?;
                let unit = s * spec.size;
                let (u, v) = ((x - c[0]) / unit, (y - c[1]) / unit);
                if !part.shape.contains(u, v) {
                    continue;
                }
                let look = &self.looks[i];
                let tex = (2.0 * PI * u / TEXTURE_WAVELENGTH + look.phase[0]).sin()
                    * (2.0 * PI * v / TEXTURE_WAVELENGTH + look.phase[1]).sin();
                let intensity = (part.shade + TEXTURE_AMP * tex).clamp(0.0, 1.0);
                let flow = match self.part_center(i, part, t - 1) {
                    Some((c0, s0)) => {
                        let r = s0 / s;
                        [x - (c0[0] + (x - c[0]) * r), y - (c0[1] + (y - c[1]) * r)]
                    }
                    None => [0.0, 0.0],
                };
                return Some(Hit {
                    sprite: i,
                    part: pi,
                    intensity,
                    class: spec.shape_class.class_id(),
                    depth,
                    flow,
                });
            }
        }
        None
    }

    pub fn background_at(&self, row: usize, col: usize) -> f64 {
        self.background[row * self.script.width + col]
    }

    fn render(
        &self,
        t: usize,
        seg_channels: usize,
        label: u8,
        video_id: &str,
    ) -> Result<RenderedFrame> {
        let (h, w) = (self.script.height, self.script.width);
        let mut pixels = vec![0f32; h * w];
        let mut seg = vec![0f32; h * w * seg_channels];
        let mut flow = vec![0f32; h * w * 2];
        let mut depth = vec![0f32; h * w];
        for row in 0..h {
            for col in 0..w {
                let p = row * w + col;
                match self.hit(t as isize, col as f64, row as f64) {
                    Some(hit) => {
                        pixels[p] = hit.intensity as f32;
                        seg[p * seg_channels + hit.class] = 1.0;
                        flow[2 * p] = hit.flow[0] as f32;
                        flow[2 * p + 1] = hit.flow[1] as f32;
                        depth[p] = hit.depth as f32;
                    }
                    None => {
                        pixels[p] = self.background_at(row, col) as f32;
                        seg[p * seg_channels] = 1.0;
                    }
                }
            }
        }
        Ok(RenderedFrame {
            frame: Frame::new(h, w, 1, pixels, t, video_id)?,
            seg: DenseMap::new(MapKind::SegmentationScores, h, w, seg_channels, seg)?,
            flow: DenseMap::new(MapKind::Flow, h, w, 2, flow)?,
            depth: DenseMap::new(MapKind::Depth, h, w, 1, depth)?,
            label,
        })
    }
}

/// Integrates the scripted kinematics of sprite `i`, including one state
/// before entry so the entry frame has a defined flow.
pub(crate) fn trajectory(script: &SceneScript, i: usize) -> Vec<Option<State>> {
    let sp = &script.sprites[i];
    let geo = &script.geometry;
    let span = geo.y_near - geo.y_far;
    let step = |st: State, m: f64, sign: f64| {
        let s = geo.scale(st.depth);
        let dx = s * sp.spec.velocity[0] * m;
        let dd = geo.foreshortening * s * sp.spec.velocity[1] * m / span;
        State {
            x: st.x + sign * dx,
            depth: (st.depth + sign * dd).clamp(0.0, 1.0),
        }
    };
    let mut out = vec![None; script.duration + 1];
    let start = State {
        x: sp.x0,
        depth: sp.spec.depth_lane,
    };
    out[sp.entry] = Some(step(start, script.multiplier(i, sp.entry), -1.0));
    let mut st = start;
    out[sp.entry + 1] = Some(st);
    for t in sp.entry + 1..sp.exit {
        st = step(st, script.multiplier(i, t), 1.0);
        out[t + 1] = Some(st);
    }
    out
}

fn background(script: &SceneScript) -> Vec<f64> {
    let mut rng = SeededRng::new(script.background_seed);
    let waves: Vec<(f64, f64, f64, f64)> = (0..5)
        .map(|_| {
            (
                rng.range(0.02, 0.045),
                rng.range(-4.0, 4.0),
                rng.range(-4.0, 4.0),
                rng.range(0.0, 2.0 * PI),
            )
        })
        .collect();
    let base = rng.range(0.18, 0.3);
    let (h, w) = (script.height, script.width);
    let mut out = Vec::with_capacity(h * w);
    for row in 0..h {
        for col in 0..w {
            let (x, y) = (col as f64 / w as f64, row as f64 / h as f64);
            let v: f64 = waves
                .iter()
                .map(|&(a, fx, fy, ph)| a * (2.0 * PI * (fx * x + fy * y) + ph).sin())
                .sum();
            out.push((base + v).clamp(0.0, 1.0));
        }
    }
    out
}
