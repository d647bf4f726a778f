use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use vad_core::{Error, Result, RunConfig};

/// Savitzky-Golay smoothing filter: `window` taps (odd) fitting a local
/// polynomial of degree `order`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingSpec {
    pub window: usize,
    pub order: usize,
    /// Convolution weights for offsets `-h..=h`, `h = window / 2`.
    pub coefficients: Vec<f64>,
}

impl SmoothingSpec {
    pub fn new(window: usize, order: usize) -> Result<Self> {
        if window.is_multiple_of(2) || window <= order {
            return Err(Error::Config(format!(
                "smoothing needs an odd window above the order, got window {window} order {order}"
            )));
        }
        let h = (window / 2) as f64;
        let scale = h.max(1.0);
        // Least-squares fit value at the centre: c = A (A^T A)^-1 e0, with
        // positions scaled into [-1, 1] for conditioning.
        let a = DMatrix::from_fn(window, order + 1, |i, j| {
            ((i as f64 - h) / scale).powi(j as i32)
        });
        let gram = a.transpose() * &a;
        let mut e0 = DVector::zeros(order + 1);
        e0[0] = 1.0;
        let z = gram
            .cholesky()
            .ok_or_else(|| Error::Config("singular smoothing system".into()))?
            .solve(&e0);
        let coefficients = (&a * z).iter().copied().collect();
        Ok(Self {
            window,
            order,
            coefficients,
        })
    }

    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        Self::new(cfg.smoothing_window, cfg.smoothing_order)
    }

    pub fn half(&self) -> usize {
        self.window / 2
    }
}

/// Convolves `raw` with the filter, mirroring the series about its first and
/// last samples (`d c b | a b c d | c b a`).
pub fn smooth_scores(raw: &[f64], spec: &SmoothingSpec) -> Result<Vec<f64>> {
    let n = raw.len();
    if n < spec.window {
        return Err(Error::contract(format!(
            "series of {n} scores is shorter than the {}-tap smoothing window",
            spec.window
        )));
    }
    let h = spec.half() as isize;
    let last = n as isize - 1;
    let at = |i: isize| {
        let j = if i < 0 {
            -i
        } else if i > last {
            2 * last - i
        } else {
            i
        };
        raw[j as usize]
    };
    Ok((0..n as isize)
        .map(|t| {
            spec.coefficients
                .iter()
                .enumerate()
                .map(|(k, c)| c * at(t + k as isize - h))
                .sum()
        })
        .collect())
}
