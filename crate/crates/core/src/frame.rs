use std::path::Path;

use image::{imageops::FilterType, DynamicImage, GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};

/// A single video frame with pixels in `[0, 1]`, stored row-major as
/// (row, column, channel).
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<f32>,
    /// Zero-based position within its video.
    pub index: usize,
    pub video_id: String,
}

impl Frame {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        pixels: Vec<f32>,
        index: usize,
        video_id: impl Into<String>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::contract("frame dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::contract(format!(
                "frames carry 1 or 3 channels, got {channels}"
            )));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::contract(format!(
                "pixel buffer of {} values does not match {height}x{width}x{channels}",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::contract(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
            index,
            video_id: video_id.into(),
        })
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.pixels[(row * self.width + col) * self.channels + ch]
    }

    /// Single-channel view using Rec. 601 luma weights for RGB frames.
    pub fn luma(&self) -> Vec<f32> {
        match self.channels {
            1 => self.pixels.clone(),
            _ => self
                .pixels
                .chunks_exact(3)
                .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
                .collect(),
        }
    }

    /// Loads an 8-bit grayscale or RGB raster, normalizes to `[0, 1]` and
    /// resizes to `size`x`size` when needed.
    pub fn load(path: &Path, size: usize, index: usize, video_id: &str) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Ingestion {
            what: "frame".into(),
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let (channels, img) = match img {
            DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) => {
                (1, DynamicImage::ImageLuma8(img.to_luma8()))
            }
            other => (3, DynamicImage::ImageRgb8(other.to_rgb8())),
        };
        let img = if img.width() as usize != size || img.height() as usize != size {
            img.resize_exact(size as u32, size as u32, FilterType::Triangle)
        } else {
            img
        };
        let pixels: Vec<f32> = match channels {
            1 => img.to_luma8().into_raw(),
            _ => img.to_rgb8().into_raw(),
        }
        .into_iter()
        .map(|v| v as f32 / 255.0)
        .collect();
        Frame::new(size, size, channels, pixels, index, video_id)
    }

    /// Writes the frame as an 8-bit lossless PNG.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self
            .pixels
            .iter()
            .map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        let (w, h) = (self.width as u32, self.height as u32);
        match self.channels {
            1 => {
                let img: GrayImage = ImageBuffer::<Luma<u8>, _>::from_raw(w, h, bytes)
                    .expect("buffer sized by construction");
                img.save(path)?;
            }
            _ => {
                let img: RgbImage = ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, bytes)
                    .expect("buffer sized by construction");
                img.save(path)?;
            }
        }
        Ok(())
    }
}

/// Consecutive frames `(I_{t-1}, I_t)` with an optional `I_{t+1}`.
#[derive(Clone, Debug)]
pub struct Clip {
    pub prev: Frame,
    pub curr: Frame,
    pub future: Option<Frame>,
}

impl Clip {
    pub fn new(prev: Frame, curr: Frame, future: Option<Frame>) -> Result<Self> {
        let compatible = |a: &Frame, b: &Frame| {
            a.video_id == b.video_id
                && a.height == b.height
                && a.width == b.width
                && a.channels == b.channels
        };
        if !compatible(&prev, &curr) || prev.index + 1 != curr.index {
            return Err(Error::contract(format!(
                "clip frames must be consecutive frames of one video ({}#{} -> {}#{})",
                prev.video_id, prev.index, curr.video_id, curr.index
            )));
        }
        if let Some(f) = &future {
            if !compatible(&curr, f) || curr.index + 1 != f.index {
                return Err(Error::contract(
                    "future frame must follow the current frame",
                ));
            }
        }
        Ok(Self { prev, curr, future })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(index: usize, v: f32) -> Frame {
        Frame::new(4, 4, 1, vec![v; 16], index, "v").unwrap()
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(Frame::new(2, 2, 1, vec![0.0, 0.5, 1.0, 1.5], 0, "v").is_err());
        assert!(Frame::new(2, 2, 2, vec![0.0; 8], 0, "v").is_err());
        assert!(Frame::new(0, 2, 1, vec![], 0, "v").is_err());
    }

    #[test]
    fn clip_requires_consecutive_indices() {
        assert!(Clip::new(gray(3, 0.1), gray(4, 0.2), Some(gray(5, 0.3))).is_ok());
        assert!(Clip::new(gray(3, 0.1), gray(5, 0.2), None).is_err());
        assert!(Clip::new(gray(3, 0.1), gray(4, 0.2), Some(gray(7, 0.3))).is_err());
        let mut other = gray(4, 0.2);
        other.video_id = "w".into();
        assert!(Clip::new(gray(3, 0.1), other, None).is_err());
    }

    #[test]
    fn luma_weights() {
        let f = Frame::new(1, 1, 3, vec![1.0, 0.0, 0.0], 0, "v").unwrap();
        assert!((f.luma()[0] - 0.299).abs() < 1e-7);
    }

    #[test]
    fn png_round_trip_is_8bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame_000001.png");
        let pixels: Vec<f32> = (0..64).map(|i| (i * 4) as f32 / 255.0).collect();
        let f = Frame::new(8, 8, 1, pixels, 0, "v").unwrap();
        f.save(&path).unwrap();
        let back = Frame::load(&path, 8, 0, "v").unwrap();
        assert_eq!(back.channels, 1);
        for (a, b) in f.pixels.iter().zip(&back.pixels) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn load_resizes_to_configured_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.png");
        Frame::new(8, 8, 3, vec![0.5; 192], 0, "v")
            .unwrap()
            .save(&path)
            .unwrap();
        let back = Frame::load(&path, 4, 0, "v").unwrap();
        assert_eq!((back.height, back.width, back.channels), (4, 4, 3));
    }
}
