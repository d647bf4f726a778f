use serde::{Deserialize, Serialize};
use vad_core::{Error, Result};

use crate::graph::{Graph, NodeId};
use crate::params::{Init, ParamId, ParamStore};
use crate::tensor::Tensor;

/// Layout of the context-attention network: `3x3 conv + ReLU` per hidden
/// width, then a `1x1` conv to one channel and a sigmoid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextAttnSpec {
    /// Input planes in order: parallel-motion X, axial-motion Y, depth.
    pub in_channels: usize,
    pub hidden_widths: Vec<usize>,
}

impl ContextAttnSpec {
    pub fn new(hidden_widths: Vec<usize>) -> Self {
        Self {
            in_channels: 3,
            hidden_widths,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.hidden_widths.is_empty() || self.hidden_widths.contains(&0)
        {
            return Err(Error::Config(
                "context attention needs input channels and nonzero hidden widths".into(),
            ));
        }
        Ok(())
    }
}

impl Default for ContextAttnSpec {
    fn default() -> Self {
        Self::new(vec![8, 8])
    }
}

#[derive(Clone, Debug)]
pub struct ContextAttention {
    pub spec: ContextAttnSpec,
    hidden: Vec<(ParamId, ParamId)>,
    out: (ParamId, ParamId),
}

impl ContextAttention {
    pub fn new(
        spec: &ContextAttnSpec,
        store: &mut ParamStore,
        init: &mut Init,
        prefix: &str,
    ) -> Result<Self> {
        spec.validate()?;
        let mut hidden = Vec::new();
        let mut c_in = spec.in_channels;
        for (i, &c) in spec.hidden_widths.iter().enumerate() {
            hidden.push((
                store.add(
                    format!("{prefix}.conv{i}.weight"),
                    init.he(c, c_in, 9, 9 * c_in),
                ),
                store.add(format!("{prefix}.conv{i}.bias"), Tensor::zeros(c, 1, 1)),
            ));
            c_in = c;
        }
        let out = (
            store.add(format!("{prefix}.out.weight"), init.he(1, c_in, 1, c_in)),
            store.add(format!("{prefix}.out.bias"), Tensor::zeros(1, 1, 1)),
        );
        Ok(Self {
            spec: spec.clone(),
            hidden,
            out,
        })
    }

    /// Maps a `[in_channels, h, w]` context stack to a `[1, h, w]` map in `[0, 1]`.
    pub fn forward(&self, g: &mut Graph, context: NodeId) -> Result<NodeId> {
        let c = g.value(context).c;
        if c != self.spec.in_channels {
            return Err(Error::contract(format!(
                "context attention expects {} planes, got {c}",
                self.spec.in_channels
            )));
        }
        let mut x = context;
        for &(w, b) in &self.hidden {
            x = g.conv(x, w, b)?;
            x = g.relu(x);
        }
        let x = g.conv(x, self.out.0, self.out.1)?;
        Ok(g.sigmoid(x))
    }
}
