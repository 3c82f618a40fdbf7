//! Seeded per-challenge image perturbation.
//!
//! Every served image is cropped by a small random amount on each edge,
//! resized back to the canonical square, and given a small brightness and
//! contrast shift before being re-encoded as PNG. All parameters come from a
//! ChaCha stream keyed by the slot's [`TransformSeed`], so the output depends
//! only on the input bytes and the seed.

use std::io::Cursor;

use image::codecs::png::{CompressionType, FilterType as PngFilter, PngEncoder};
use image::imageops::{self, FilterType};
use image::{ImageEncoder, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PoolError, TransformSeed};

/// Width and height of every served image.
pub const CANONICAL_SIZE: u32 = 256;

const MAX_EDGE_CROP: f64 = 0.06;
const MAX_BRIGHTNESS: f64 = 0.08;
const MAX_CONTRAST: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformParams {
    /// Fraction of width/height removed from each edge, each in `[0, 0.06]`.
    pub crop_left: f64,
    pub crop_right: f64,
    pub crop_top: f64,
    pub crop_bottom: f64,
    /// Additive offset as a fraction of full scale, in `[-0.08, 0.08]`.
    pub brightness: f64,
    /// Multiplicative gain around mid-grey, in `[0.92, 1.08]`.
    pub contrast: f64,
}

impl TransformParams {
    pub fn from_seed(seed: TransformSeed) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
        TransformParams {
            crop_left: rng.random_range(0.0..=MAX_EDGE_CROP),
            crop_right: rng.random_range(0.0..=MAX_EDGE_CROP),
            crop_top: rng.random_range(0.0..=MAX_EDGE_CROP),
            crop_bottom: rng.random_range(0.0..=MAX_EDGE_CROP),
            brightness: rng.random_range(-MAX_BRIGHTNESS..=MAX_BRIGHTNESS),
            contrast: 1.0 + rng.random_range(-MAX_CONTRAST..=MAX_CONTRAST),
        }
    }

    fn crop_box(&self, width: u32, height: u32) -> (u32, u32, u32, u32) {
        let px = |frac: f64, len: u32| (frac * f64::from(len)).floor() as u32;
        let left = px(self.crop_left, width);
        let right = px(self.crop_right, width);
        let top = px(self.crop_top, height);
        let bottom = px(self.crop_bottom, height);
        let w = width.saturating_sub(left + right).max(1);
        let h = height.saturating_sub(top + bottom).max(1);
        (left.min(width - 1), top.min(height - 1), w, h)
    }

    fn adjust(&self, v: u8) -> u8 {
        let out = (f64::from(v) - 128.0) * self.contrast + 128.0 + self.brightness * 255.0;
        out.round().clamp(0.0, 255.0) as u8
    }
}

/// Applies the seeded perturbation to an encoded PNG or JPEG and returns
/// the result as PNG bytes of size [`CANONICAL_SIZE`] square.
pub fn transform(image_bytes: &[u8], seed: TransformSeed) -> Result<Vec<u8>, PoolError> {
    let decoded = image::load_from_memory(image_bytes).map_err(|e| PoolError::Decode(e.to_string()))?;
    let rgb = decoded.to_rgb8();
    let (width, height) = rgb.dimensions();
    if width == 0 || height == 0 {
        return Err(PoolError::Decode("image has zero area".into()));
    }

    let params = TransformParams::from_seed(seed);
    let (x, y, w, h) = params.crop_box(width, height);
    let cropped = imageops::crop_imm(&rgb, x, y, w, h).to_image();
    let mut resized: RgbImage = imageops::resize(&cropped, CANONICAL_SIZE, CANONICAL_SIZE, FilterType::Triangle);

    let lut: Vec<u8> = (0..=255u8).map(|v| params.adjust(v)).collect();
    for px in resized.pixels_mut() {
        for c in px.0.iter_mut() {
            *c = lut[*c as usize];
        }
    }

    let mut out = Vec::new();
    PngEncoder::new_with_quality(Cursor::new(&mut out), CompressionType::Default, PngFilter::Adaptive)
        .write_image(
            resized.as_raw(),
            CANONICAL_SIZE,
            CANONICAL_SIZE,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|e| PoolError::Encode(e.to_string()))?;
    Ok(out)
}
