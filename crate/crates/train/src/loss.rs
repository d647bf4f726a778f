use vad_core::{Result, RunConfig};
use vad_nets::{patch_errors, Tensor};

/// Largest per-patch mean squared error over a `grid x grid` partition of the
/// plane; each patch mean runs over its pixels and all channels.
pub fn patch_loss(pred: &Tensor, target: &Tensor, grid: usize) -> Result<f64> {
    let (errs, best) = patch_errors(pred, target, grid)?;
    Ok(errs[best])
}

/// Mean squared error over every element.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    patch_loss(pred, target, 1)
}

/// Learning rate for zero-based `epoch`: halved every `lr_halving_period`.
pub fn lr_at(epoch: usize, cfg: &RunConfig) -> f64 {
    let halvings = (epoch / cfg.lr_halving_period.max(1)).min(1000) as i32;
    cfg.lr_init * 0.5f64.powi(halvings)
}
