//! Checkpoint directories: `manifest.json` plus one dense-map blob per tensor.
//!
//! Each `f64` value `m * 2^e` with `m` in `[0.5, 1)` is stored as four `f32`
//! channels `hi, mid, lo, e` with `hi + mid + lo == m` exactly, so the
//! dense-map container round-trips every finite parameter bit-for-bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vad_core::{
    read_dense_map, write_dense_map, DenseMap, Error, MapKind, Result, RunConfig, SeededRng,
};

use crate::params::ParamStore;
use crate::student::{Student, StudentSpec};
use crate::tensor::Tensor;

pub const FORMAT: &str = "vad-checkpoint/1";
pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub name: String,
    pub shape: [usize; 3],
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerManifest {
    pub step: u64,
    pub digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format: String,
    pub student: StudentSpec,
    pub config: RunConfig,
    pub config_hash: String,
    /// Epochs completed when the checkpoint was written.
    pub epoch: usize,
    /// Epoch-mean training loss of every completed epoch.
    pub loss_history: Vec<f64>,
    pub params: Vec<ParamEntry>,
    pub params_digest: String,
    pub optimizer: Option<OptimizerManifest>,
}

/// First and second moment estimates of an Adam optimiser.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: ParamStore,
    pub v: ParamStore,
}

impl OptimizerState {
    pub fn new(params: &ParamStore) -> Self {
        Self {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    fn digest(&self) -> String {
        format!("{}:{}", self.m.digest(), self.v.digest())
    }
}

pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub student: Student,
    pub optimizer: Option<OptimizerState>,
}

const CHANNELS: usize = 4;

fn pow2(k: i32) -> f64 {
    f64::from_bits(((k + 1023) as u64) << 52)
}

/// Mantissa in `[0.5, 1)` and exponent of a finite nonzero value.
fn frexp(v: f64) -> (f64, i32) {
    let bits = v.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    if exp == 0 {
        let (m, e) = frexp(v * pow2(64));
        return (m, e - 64);
    }
    let m = f64::from_bits((bits & !(0x7ff << 52)) | (1022 << 52));
    (m, exp - 1022)
}

fn split(v: f64) -> [f32; CHANNELS] {
    if v == 0.0 || !v.is_finite() {
        return [v as f32, 0.0, 0.0, 0.0];
    }
    let (m, e) = frexp(v);
    let hi = m as f32;
    let r = m - hi as f64;
    let mid = r as f32;
    let lo = (r - mid as f64) as f32;
    [hi, mid, lo, e as f32]
}

fn join(p: &[f32]) -> f64 {
    if p[1] == 0.0 && p[2] == 0.0 && p[3] == 0.0 {
        // Keeps signed zeros and infinities intact.
        return p[0] as f64;
    }
    let m = p[0] as f64 + (p[1] as f64 + p[2] as f64);
    let e = p[3] as i32;
    let a = e / 2;
    m * pow2(a) * pow2(e - a)
}

fn tensor_to_map(t: &Tensor) -> Result<DenseMap> {
    let values = t.data.iter().flat_map(|&v| split(v)).collect();
    DenseMap::new(MapKind::Parameter, t.c, t.h * t.w, CHANNELS, values)
}

fn map_to_tensor(m: &DenseMap, shape: [usize; 3], path: &Path) -> Result<Tensor> {
    let [c, h, w] = shape;
    if m.kind != MapKind::Parameter || m.channels != CHANNELS || m.height != c || m.width != h * w {
        return Err(Error::Integrity(format!(
            "{} does not hold a {c}x{h}x{w} parameter",
            path.display()
        )));
    }
    Tensor::new(c, h, w, m.values.chunks_exact(CHANNELS).map(join).collect())
}

fn write_store(dir: &Path, sub: &str, store: &ParamStore) -> Result<Vec<ParamEntry>> {
    let d = dir.join(sub);
    fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    store
        .iter()
        .enumerate()
        .map(|(i, (name, t))| {
            let file = format!("{sub}/{i:04}.vmap");
            write_dense_map(&tensor_to_map(t)?, &dir.join(&file))?;
            Ok(ParamEntry {
                name: name.to_string(),
                shape: t.shape(),
                file,
            })
        })
        .collect()
}

fn read_store(
    dir: &Path,
    template: &ParamStore,
    entries: &[ParamEntry],
    sub: &str,
) -> Result<ParamStore> {
    if entries.len() != template.len() {
        return Err(Error::Integrity(format!(
            "checkpoint lists {} parameters, architecture has {}",
            entries.len(),
            template.len()
        )));
    }
    let mut out = template.clone();
    for (id, e) in template.ids().zip(entries) {
        if e.name != template.name(id) {
            return Err(Error::Integrity(format!(
                "parameter {} found where {} was expected",
                e.name,
                template.name(id)
            )));
        }
        let file = if sub == "params" {
            PathBuf::from(&e.file)
        } else {
            PathBuf::from(e.file.replacen("params/", &format!("{sub}/"), 1))
        };
        let path = dir.join(file);
        let map = read_dense_map(&path)?;
        *out.get_mut(id) = map_to_tensor(&map, e.shape, &path)?;
        if out.get(id).shape() != template.get(id).shape() {
            return Err(Error::Integrity(format!(
                "parameter {} changed shape",
                e.name
            )));
        }
    }
    Ok(out)
}

impl Checkpoint {
    /// Writes a checkpoint directory, replacing any previous contents.
    pub fn save(
        dir: &Path,
        student: &Student,
        config: &RunConfig,
        loss_history: &[f64],
        optimizer: Option<&OptimizerState>,
    ) -> Result<CheckpointManifest> {
        if dir.exists() {
            fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let params = write_store(dir, "params", &student.params)?;
        let optimizer = match optimizer {
            Some(o) => {
                write_store(dir, "adam_m", &o.m)?;
                write_store(dir, "adam_v", &o.v)?;
                Some(OptimizerManifest {
                    step: o.step,
                    digest: o.digest(),
                })
            }
            None => None,
        };
        let manifest = CheckpointManifest {
            format: FORMAT.into(),
            student: student.spec.clone(),
            config: config.clone(),
            config_hash: config.hash(),
            epoch: loss_history.len(),
            loss_history: loss_history.to_vec(),
            params,
            params_digest: student.params.digest(),
            optimizer,
        };
        let path = dir.join(MANIFEST);
        fs::write(&path, serde_json::to_string_pretty(&manifest)?)
            .map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }

    pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: CheckpointManifest = serde_json::from_str(&text)?;
        if m.format != FORMAT {
            return Err(Error::Format(format!(
                "unknown checkpoint format {}",
                m.format
            )));
        }
        if m.config_hash != m.config.hash() {
            return Err(Error::Integrity(format!(
                "{}: recorded config hash does not match the recorded config",
                path.display()
            )));
        }
        Ok(m)
    }

    /// Loads and verifies a checkpoint directory.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = Self::read_manifest(dir)?;
        let mut student = Student::new(&manifest.student, &mut SeededRng::new(0))?;
        let params = read_store(dir, &student.params, &manifest.params, "params")?;
        student.params = params;
        if student.params.digest() != manifest.params_digest {
            return Err(Error::Integrity(format!(
                "{}: parameter digest mismatch",
                dir.display()
            )));
        }
        let optimizer = match &manifest.optimizer {
            Some(o) => {
                let m = read_store(dir, &student.params, &manifest.params, "adam_m")?;
                let v = read_store(dir, &student.params, &manifest.params, "adam_v")?;
                let state = OptimizerState { step: o.step, m, v };
                if state.digest() != o.digest {
                    return Err(Error::Integrity(format!(
                        "{}: optimizer state digest mismatch",
                        dir.display()
                    )));
                }
                Some(state)
            }
            None => None,
        };
        Ok(Self {
            manifest,
            student,
            optimizer,
        })
    }
}
