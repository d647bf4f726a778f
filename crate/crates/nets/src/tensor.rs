use vad_core::{DenseMap, Error, Result};

/// Dense `f64` array in channel-major `[c, h, w]` layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != c * h * w {
            return Err(Error::contract(format!(
                "{} values do not fill a {c}x{h}x{w} tensor",
                data.len()
            )));
        }
        Ok(Self { c, h, w, data })
    }

    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn filled(c: usize, h: usize, w: usize, v: f64) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![v; c * h * w],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self::filled(1, 1, 1, v)
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.c, self.h, self.w]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.c, self.h, self.w)
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Interleaved `[h, w, c]` dense map → channel-major tensor.
    pub fn from_map(map: &DenseMap) -> Self {
        let (h, w, c) = (map.height, map.width, map.channels);
        let mut data = vec![0.0; c * h * w];
        for (p, px) in map.values.chunks_exact(c).enumerate() {
            for (k, &v) in px.iter().enumerate() {
                data[k * h * w + p] = v as f64;
            }
        }
        Self { c, h, w, data }
    }

    /// Channel-major tensor → interleaved values suitable for a dense map.
    pub fn to_interleaved(&self) -> Vec<f32> {
        let p = self.plane();
        let mut out = vec![0.0f32; self.data.len()];
        for k in 0..self.c {
            for i in 0..p {
                out[i * self.c + k] = self.data[k * p + i] as f32;
            }
        }
        out
    }

    /// Stacks tensors of equal spatial size along the channel axis.
    pub fn stack(parts: &[&Tensor]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::contract("nothing to stack"))?;
        if parts.iter().any(|t| t.h != first.h || t.w != first.w) {
            return Err(Error::contract("stacked tensors differ in spatial size"));
        }
        let c = parts.iter().map(|t| t.c).sum();
        let mut data = Vec::with_capacity(c * first.plane());
        for t in parts {
            data.extend_from_slice(&t.data);
        }
        Ok(Self {
            c,
            h: first.h,
            w: first.w,
            data,
        })
    }
}
