use serde::{Deserialize, Serialize};
use vad_core::{AttentionPosition, Error, Result, SeededRng};

use crate::attention::{ContextAttention, ContextAttnSpec};
use crate::graph::{Graph, NodeId};
use crate::params::{Init, ParamStore};
use crate::tensor::Tensor;
use crate::unet::{UNet, UNetSpec};

/// A UNet plus, when the UNet consumes attention, the network producing it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentSpec {
    pub unet: UNetSpec,
    pub attention: Option<ContextAttnSpec>,
}

impl StudentSpec {
    pub fn validate(&self) -> Result<()> {
        self.unet.validate()?;
        let wants = self.unet.attention_position != AttentionPosition::None;
        match (&self.attention, wants) {
            (Some(a), true) => a.validate(),
            (None, false) => Ok(()),
            (None, true) => Err(Error::Config(
                "attention position set but no context-attention network".into(),
            )),
            (Some(_), false) => Err(Error::Config(
                "context-attention network given but attention position is none".into(),
            )),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Student {
    pub spec: StudentSpec,
    pub params: ParamStore,
    unet: UNet,
    attention: Option<ContextAttention>,
}

impl Student {
    pub fn new(spec: &StudentSpec, rng: &mut SeededRng) -> Result<Self> {
        spec.validate()?;
        let mut params = ParamStore::new();
        let mut init = Init::new(rng);
        let unet = UNet::new(&spec.unet, &mut params, &mut init, "unet")?;
        let attention = spec
            .attention
            .as_ref()
            .map(|a| ContextAttention::new(a, &mut params, &mut init, "attention"))
            .transpose()?;
        Ok(Self {
            spec: spec.clone(),
            params,
            unet,
            attention,
        })
    }

    pub fn needs_context(&self) -> bool {
        self.attention.is_some()
    }

    /// Records the student on `g`; `context` is the `[3, h, w]` stack of
    /// direction features and depth, required iff the student uses attention.
    pub fn forward(&self, g: &mut Graph, input: NodeId, context: Option<NodeId>) -> Result<NodeId> {
        let attn = match (&self.attention, context) {
            (Some(net), Some(c)) => Some(net.forward(g, c)?),
            (Some(_), None) => {
                return Err(Error::contract("this student needs a context stack"));
            }
            (None, _) => None,
        };
        self.unet.forward(g, input, attn)
    }

    /// Attention map alone, for inspection.
    pub fn attention_map(&self, context: &Tensor) -> Result<Option<Tensor>> {
        let Some(net) = &self.attention else {
            return Ok(None);
        };
        let mut g = Graph::new(&self.params);
        let c = g.input(context.clone());
        let a = net.forward(&mut g, c)?;
        Ok(Some(g.value(a).clone()))
    }

    /// Inference without keeping the tape.
    pub fn predict(&self, input: &Tensor, context: Option<&Tensor>) -> Result<Tensor> {
        let mut g = Graph::new(&self.params);
        let x = g.input(input.clone());
        let c = context.map(|c| g.input(c.clone()));
        let y = self.forward(&mut g, x, c)?;
        Ok(g.value(y).clone())
    }
}
