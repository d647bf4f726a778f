use vad_core::Result;

use crate::graph::{Graph, NodeId};
use crate::params::{Init, ParamId, ParamStore};
use crate::tensor::Tensor;

/// Concurrent spatial and channel squeeze-and-excitation with max fusion.
///
/// The channel branch gates each channel by
/// `sigmoid(fc2(relu(fc1(gap(F)))))`; the spatial branch gates each pixel by
/// `sigmoid(conv1x1(F))`. The block returns `max(F * g_c, F * g_s)`.
#[derive(Clone, Debug)]
pub struct Scse {
    pub channels: usize,
    pub fc1: (ParamId, ParamId),
    pub fc2: (ParamId, ParamId),
    pub spatial: (ParamId, ParamId),
}

impl Scse {
    pub fn hidden(channels: usize) -> usize {
        (channels / 2).max(1)
    }

    pub fn new(store: &mut ParamStore, init: &mut Init, prefix: &str, channels: usize) -> Self {
        let hid = Self::hidden(channels);
        let fc1 = (
            store.add(
                format!("{prefix}.fc1.weight"),
                init.he(hid, channels, 1, channels),
            ),
            store.add(format!("{prefix}.fc1.bias"), Tensor::zeros(hid, 1, 1)),
        );
        let fc2 = (
            store.add(
                format!("{prefix}.fc2.weight"),
                init.he(channels, hid, 1, hid),
            ),
            store.add(format!("{prefix}.fc2.bias"), Tensor::zeros(channels, 1, 1)),
        );
        let spatial = (
            store.add(
                format!("{prefix}.spatial.weight"),
                init.he(1, channels, 1, channels),
            ),
            store.add(format!("{prefix}.spatial.bias"), Tensor::zeros(1, 1, 1)),
        );
        Self {
            channels,
            fc1,
            fc2,
            spatial,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let z = g.gap(x);
        let h = g.linear(z, self.fc1.0, self.fc1.1)?;
        let h = g.relu(h);
        let gate_c = g.linear(h, self.fc2.0, self.fc2.1)?;
        let gate_c = g.sigmoid(gate_c);
        let gate_s = g.conv(x, self.spatial.0, self.spatial.1)?;
        let gate_s = g.sigmoid(gate_s);
        let cf = g.mul(x, gate_c)?;
        let sf = g.mul(x, gate_s)?;
        g.max(cf, sf)
    }
}
