use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};
use vad_core::{Error, Result, SeededRng};

use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::zeros_like).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &ParamStore) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.tensors.iter_mut().for_each(|t| t.scale(s));
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Replaces every value with the same-named tensor of `other`.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        if other.names != self.names {
            return Err(Error::Integrity(
                "parameter names differ from the architecture".into(),
            ));
        }
        for (i, (mine, theirs)) in self.tensors.iter_mut().zip(&other.tensors).enumerate() {
            if mine.shape() != theirs.shape() {
                return Err(Error::Integrity(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    self.names[i],
                    theirs.shape(),
                    mine.shape()
                )));
            }
            mine.data.clone_from(&theirs.data);
        }
        Ok(())
    }

    /// SHA-256 over names, shapes and the exact bit patterns of all values.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.iter() {
            h.update(name.as_bytes());
            h.update([0u8]);
            for d in t.shape() {
                h.update((d as u64).to_le_bytes());
            }
            for v in &t.data {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Seeded parameter initialisation.
pub struct Init<'a> {
    rng: &'a mut SeededRng,
}

impl<'a> Init<'a> {
    pub fn new(rng: &'a mut SeededRng) -> Self {
        Self { rng }
    }

    /// He-normal weights with standard deviation `sqrt(2 / fan_in)`.
    pub fn he(&mut self, c: usize, h: usize, w: usize, fan_in: usize) -> Tensor {
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let data = (0..c * h * w).map(|_| normal.sample(self.rng)).collect();
        Tensor { c, h, w, data }
    }
}
