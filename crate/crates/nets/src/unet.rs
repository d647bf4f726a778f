use serde::{Deserialize, Serialize};
use vad_core::{AttentionPosition, Error, Result};

use crate::graph::{Graph, NodeId};
use crate::params::{Init, ParamId, ParamStore};
use crate::scse::Scse;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutActivation {
    Linear,
    PerPixelSoftmax,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UNetSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Resolution levels; level `l` runs at `1 / 2^l` of the input side with
    /// `base_width * 2^l` channels.
    pub depth: usize,
    pub base_width: usize,
    pub scse_enabled: bool,
    pub attention_position: AttentionPosition,
    pub out_activation: OutActivation,
}

impl UNetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::Config(format!(
                "UNet depth must be >= 2, got {}",
                self.depth
            )));
        }
        if self.base_width < 4 {
            return Err(Error::Config(format!(
                "UNet base width must be >= 4, got {}",
                self.base_width
            )));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config("UNet needs input and output channels".into()));
        }
        Ok(())
    }

    pub fn width(&self, level: usize) -> usize {
        self.base_width << level
    }

    /// Encoder levels that carry an SCSE block: every level below full
    /// resolution except the bottleneck, or the bottleneck alone when the
    /// network has only two levels.
    pub fn scse_levels(&self) -> Vec<usize> {
        if !self.scse_enabled {
            return Vec::new();
        }
        let last = (self.depth - 2).max(1);
        (1..=last).collect()
    }

    /// Input side must be divisible by this.
    pub fn stride(&self) -> usize {
        1 << (self.depth - 1)
    }
}

#[derive(Clone, Debug)]
struct Block {
    c1: (ParamId, ParamId),
    c2: (ParamId, ParamId),
}

impl Block {
    fn new(
        store: &mut ParamStore,
        init: &mut Init,
        prefix: &str,
        c_in: usize,
        c_out: usize,
    ) -> Self {
        let mut conv = |name: &str, ci: usize| {
            (
                store.add(
                    format!("{prefix}.{name}.weight"),
                    init.he(c_out, ci, 9, 9 * ci),
                ),
                store.add(format!("{prefix}.{name}.bias"), Tensor::zeros(c_out, 1, 1)),
            )
        };
        let c1 = conv("conv1", c_in);
        let c2 = conv("conv2", c_out);
        Self { c1, c2 }
    }

    fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let x = g.conv(x, self.c1.0, self.c1.1)?;
        let x = g.relu(x);
        let x = g.conv(x, self.c2.0, self.c2.1)?;
        Ok(g.relu(x))
    }
}

/// U-shaped encoder-decoder with skip connections, optional SCSE blocks
/// and optional context-attention modulation `F * (1 + A)`.
#[derive(Clone, Debug)]
pub struct UNet {
    pub spec: UNetSpec,
    enc: Vec<Block>,
    dec: Vec<Block>,
    scse: Vec<Option<Scse>>,
    head: (ParamId, ParamId),
}

/// Attention map resampled to each resolution it is needed at.
struct Pyramid {
    levels: Vec<NodeId>,
}

impl Pyramid {
    fn at(&mut self, g: &mut Graph, h: usize) -> Result<NodeId> {
        if let Some(&n) = self.levels.iter().find(|&&n| g.value(n).h == h) {
            return Ok(n);
        }
        loop {
            let top = *self
                .levels
                .last()
                .expect("pyramid starts with the full map");
            let th = g.value(top).h;
            if th <= h {
                return Err(Error::contract(format!(
                    "attention map of height {th} cannot be resampled to {h}"
                )));
            }
            let next = g.avg_pool2(top)?;
            self.levels.push(next);
            if g.value(next).h == h {
                return Ok(next);
            }
        }
    }
}

fn modulate(g: &mut Graph, f: NodeId, a: NodeId) -> Result<NodeId> {
    let gain = g.add_scalar(a, 1.0);
    g.mul(f, gain)
}

impl UNet {
    pub fn new(
        spec: &UNetSpec,
        store: &mut ParamStore,
        init: &mut Init,
        prefix: &str,
    ) -> Result<Self> {
        spec.validate()?;
        let d = spec.depth;
        let mut enc = Vec::new();
        let mut c_in = spec.in_channels;
        for l in 0..d {
            enc.push(Block::new(
                store,
                init,
                &format!("{prefix}.enc{l}"),
                c_in,
                spec.width(l),
            ));
            c_in = spec.width(l);
        }
        let scse_levels = spec.scse_levels();
        let scse = (0..d)
            .map(|l| {
                scse_levels
                    .contains(&l)
                    .then(|| Scse::new(store, init, &format!("{prefix}.scse{l}"), spec.width(l)))
            })
            .collect();
        let mut dec = Vec::new();
        for l in 0..d - 1 {
            dec.push(Block::new(
                store,
                init,
                &format!("{prefix}.dec{l}"),
                spec.width(l + 1) + spec.width(l),
                spec.width(l),
            ));
        }
        let w0 = spec.width(0);
        let head_weight = match spec.out_activation {
            OutActivation::Linear => init.he(spec.out_channels, w0, 1, w0),
            // Uniform class scores at the start keep the softmax out of
            // saturation, where squared-error gradients vanish.
            OutActivation::PerPixelSoftmax => Tensor::zeros(spec.out_channels, w0, 1),
        };
        let head = (
            store.add(format!("{prefix}.head.weight"), head_weight),
            store.add(
                format!("{prefix}.head.bias"),
                Tensor::zeros(spec.out_channels, 1, 1),
            ),
        );
        Ok(Self {
            spec: spec.clone(),
            enc,
            dec,
            scse,
            head,
        })
    }

    /// Runs the network on a `[in_channels, h, w]` input. `attn` is a
    /// `[1, h, w]` map and is ignored when the attention position is none.
    pub fn forward(&self, g: &mut Graph, x: NodeId, attn: Option<NodeId>) -> Result<NodeId> {
        let xv = g.value(x);
        let s = self.spec.stride();
        if xv.c != self.spec.in_channels || !xv.h.is_multiple_of(s) || !xv.w.is_multiple_of(s) {
            return Err(Error::contract(format!(
                "UNet expects {} channels with sides divisible by {s}, got {:?}",
                self.spec.in_channels,
                xv.shape()
            )));
        }
        let pos = self.spec.attention_position;
        let mut pyr = match (pos, attn) {
            (AttentionPosition::None, _) => None,
            (_, None) => {
                return Err(Error::contract(format!(
                    "attention position {} needs an attention map",
                    pos.name()
                )))
            }
            (_, Some(a)) => {
                let av = g.value(a);
                if av.c != 1 || av.h != xv.h || av.w != xv.w {
                    return Err(Error::contract(format!(
                        "attention map {:?} does not match input {:?}",
                        av.shape(),
                        xv.shape()
                    )));
                }
                Some(Pyramid { levels: vec![a] })
            }
        };
        let mut site = |g: &mut Graph, f: NodeId, here: AttentionPosition| -> Result<NodeId> {
            match pyr.as_mut() {
                Some(p) if pos == here => {
                    let h = g.value(f).h;
                    let a = p.at(g, h)?;
                    modulate(g, f, a)
                }
                _ => Ok(f),
            }
        };

        let d = self.spec.depth;
        let mut skips = Vec::with_capacity(d);
        let mut cur = x;
        for l in 0..d {
            if l > 0 {
                cur = g.max_pool2(cur)?;
            }
            cur = self.enc[l].forward(g, cur)?;
            if let Some(block) = &self.scse[l] {
                cur = block.forward(g, cur)?;
            }
            cur = site(g, cur, AttentionPosition::Encoder)?;
            skips.push(cur);
        }
        for l in (0..d - 1).rev() {
            let up = g.upsample2(cur);
            let up = site(g, up, AttentionPosition::Decoder)?;
            let skip = site(g, skips[l], AttentionPosition::SkipConnection)?;
            let cat = g.concat(up, skip)?;
            cur = self.dec[l].forward(g, cat)?;
        }
        cur = site(g, cur, AttentionPosition::FinalLayer)?;
        let out = g.conv(cur, self.head.0, self.head.1)?;
        Ok(match self.spec.out_activation {
            OutActivation::Linear => out,
            OutActivation::PerPixelSoftmax => g.softmax(out),
        })
    }
}
