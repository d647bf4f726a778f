use vad_nets::{OptimizerState, ParamStore};

/// Adaptive-moment gradient descent with bias correction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    /// Applies one update of `params` along `grads` at learning rate `lr`.
    pub fn step(
        &self,
        params: &mut ParamStore,
        grads: &ParamStore,
        state: &mut OptimizerState,
        lr: f64,
    ) {
        state.step += 1;
        let t = state.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let tensors = params
            .tensors_mut()
            .iter_mut()
            .zip(grads.tensors())
            .zip(state.m.tensors_mut().iter_mut().zip(state.v.tensors_mut()));
        for ((p, g), (m, v)) in tensors {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let mh = m.data[i] / c1;
                let vh = v.data[i] / c2;
                p.data[i] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}
