//! Dense per-pixel maps and their binary container.
//!
//! Layout: the 8-byte magic `VADMAP01`, then four little-endian `u32`
//! values (height, width, channels, kind code), then `height*width*channels`
//! little-endian IEEE-754 `f32` values in (row, column, channel) order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"VADMAP01";
const HEADER_LEN: usize = 8 + 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MapKind {
    /// Displacement `(u, v)` per pixel, K = 2.
    Flow,
    FlowMagnitude,
    /// Relative inverse depth in `[0, 1]`, nearer is larger.
    Depth,
    /// Per-class scores in `[0, 1]`; channel 0 is background.
    SegmentationScores,
    Attention,
    Anomaly,
    /// Unconstrained tensor payload (checkpoint parameters).
    Parameter,
}

impl MapKind {
    pub fn code(self) -> u32 {
        match self {
            MapKind::Flow => 0,
            MapKind::FlowMagnitude => 1,
            MapKind::Depth => 2,
            MapKind::SegmentationScores => 3,
            MapKind::Attention => 4,
            MapKind::Anomaly => 5,
            MapKind::Parameter => 6,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        Ok(match code {
            0 => MapKind::Flow,
            1 => MapKind::FlowMagnitude,
            2 => MapKind::Depth,
            3 => MapKind::SegmentationScores,
            4 => MapKind::Attention,
            5 => MapKind::Anomaly,
            6 => MapKind::Parameter,
            other => return Err(Error::Format(format!("unknown map kind code {other}"))),
        })
    }

    /// Channel count fixed by the kind, if any.
    pub fn fixed_channels(self) -> Option<usize> {
        match self {
            MapKind::Flow => Some(2),
            MapKind::FlowMagnitude | MapKind::Depth | MapKind::Attention | MapKind::Anomaly => {
                Some(1)
            }
            MapKind::SegmentationScores | MapKind::Parameter => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMap {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub kind: MapKind,
    pub values: Vec<f32>,
}

impl DenseMap {
    pub fn new(
        kind: MapKind,
        height: usize,
        width: usize,
        channels: usize,
        values: Vec<f32>,
    ) -> Result<Self> {
        if let Some(k) = kind.fixed_channels() {
            if k != channels {
                return Err(Error::contract(format!(
                    "{kind:?} maps carry {k} channel(s), got {channels}"
                )));
            }
        }
        if channels == 0 {
            return Err(Error::contract("dense map needs at least one channel"));
        }
        if values.len() != height * width * channels {
            return Err(Error::contract(format!(
                "{} values do not fill {height}x{width}x{channels}",
                values.len()
            )));
        }
        let unit = |v: &f32| (0.0..=1.0).contains(v);
        let ok = match kind {
            MapKind::Depth | MapKind::Attention | MapKind::SegmentationScores => {
                values.iter().all(unit)
            }
            MapKind::Anomaly | MapKind::FlowMagnitude => values.iter().all(|v| *v >= 0.0),
            MapKind::Flow | MapKind::Parameter => true,
        };
        if !ok {
            return Err(Error::contract(format!(
                "{kind:?} map has values outside its admissible range"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            kind,
            values,
        })
    }

    pub fn zeros(kind: MapKind, height: usize, width: usize, channels: usize) -> Self {
        Self::new(
            kind,
            height,
            width,
            channels,
            vec![0.0; height * width * channels],
        )
        .expect("zeros satisfy every kind")
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.values[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn same_plane(&self, other: &DenseMap) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        for v in [
            self.height as u32,
            self.width as u32,
            self.channels as u32,
            self.kind.code(),
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..8] != MAGIC {
            return Err(Error::Format("bad magic, expected VADMAP01".into()));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Length {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let word = |i: usize| {
            let o = 8 + 4 * i;
            u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize
        };
        let (height, width, channels) = (word(0), word(1), word(2));
        let kind = MapKind::from_code(word(3) as u32)?;
        let count = height * width * channels;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != 4 * count {
            return Err(Error::Length {
                expected: 4 * count,
                found: payload.len(),
            });
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        DenseMap::new(kind, height, width, channels, values)
    }
}

pub fn write_dense_map(map: &DenseMap, path: &Path) -> Result<()> {
    fs::write(path, map.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_dense_map(path: &Path) -> Result<DenseMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    DenseMap::from_bytes(&bytes)
}
