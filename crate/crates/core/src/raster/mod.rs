//! Pixel-level primitives: the 8-bit RGB buffer, channel statistics,
//! border-replicating convolution and gamma mapping.
//!
//! Every operation is a pure function of its inputs. Pixel quantization
//! happens exactly once, at the end of each op, using round-half-away-from-zero
//! (`f64::round`) followed by a clamp to `[0, 255]`.

mod ppm;

pub use ppm::{read_ppm, write_ppm, PpmError};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("pixel buffer has {actual} bytes, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Row-major interleaved 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Raster {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidDimensions { width, height });
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(3))
            .ok_or(RasterError::InvalidDimensions { width, height })?;
        if pixels.len() != expected {
            return Err(RasterError::BufferLength {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Image filled with a single color.
    pub fn uniform(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, RasterError> {
        let n = width * height;
        let pixels = rgb.iter().copied().cycle().take(n * 3).collect();
        Self::new(width, height, pixels)
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self, RasterError> {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn same_dims(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height
    }

    fn rgb_iter(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.pixels.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// Maps every channel sample through `lut`.
    pub fn map_channels(&self, lut: &[u8; 256]) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&v| lut[v as usize]).collect(),
        }
    }
}

/// Single-channel 8-bit image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayRaster {
    pub width: usize,
    pub height: usize,
    pub values: Vec<u8>,
}

impl GrayRaster {
    /// Value at `(x, y)` with coordinates clamped into the image.
    pub fn at_clamped(&self, x: isize, y: isize) -> u8 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.values[cy * self.width + cx]
    }
}

/// Square convolution kernel, side 3 or 5, row-major weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    side: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(side: usize, weights: Vec<f64>) -> Result<Self, RasterError> {
        if side != 3 && side != 5 {
            return Err(RasterError::InvalidParameter(format!(
                "kernel side must be 3 or 5, got {side}"
            )));
        }
        if weights.len() != side * side {
            return Err(RasterError::InvalidParameter(format!(
                "kernel of side {side} needs {} weights, got {}",
                side * side,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(RasterError::InvalidParameter(
                "kernel weights must be finite".into(),
            ));
        }
        Ok(Self { side, weights })
    }

    pub fn identity(side: usize) -> Result<Self, RasterError> {
        let mut w = vec![0.0; side * side];
        if side % 2 == 1 {
            w[side * side / 2] = 1.0;
        }
        Self::new(side, w)
    }

    /// Uniform averaging kernel.
    pub fn box_blur(side: usize) -> Result<Self, RasterError> {
        let n = (side * side) as f64;
        Self::new(side, vec![1.0 / n; side * side])
    }

    /// 3x3 kernel with `center` in the middle and `off` everywhere else.
    pub fn sharpen(center: f64, off: f64) -> Result<Self, RasterError> {
        let mut w = vec![off; 9];
        w[4] = center;
        Self::new(3, w)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

#[inline]
fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// ITU-R 601 luma, rounded.
pub fn to_gray(img: &Raster) -> GrayRaster {
    GrayRaster {
        width: img.width,
        height: img.height,
        values: img
            .rgb_iter()
            .map(|[r, g, b]| quantize(0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64))
            .collect(),
    }
}

/// Per-channel convolution with replicate border padding.
pub fn convolve(img: &Raster, kernel: &Kernel) -> Raster {
    let (w, h) = (img.width as isize, img.height as isize);
    let side = kernel.side as isize;
    let c = side / 2;
    let src = &img.pixels;
    let mut out = Vec::with_capacity(src.len());
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            for j in 0..side {
                let sy = (y + j - c).clamp(0, h - 1);
                for i in 0..side {
                    let sx = (x + i - c).clamp(0, w - 1);
                    let wgt = kernel.weights[(j * side + i) as usize];
                    let base = ((sy * w + sx) * 3) as usize;
                    acc[0] += wgt * src[base] as f64;
                    acc[1] += wgt * src[base + 1] as f64;
                    acc[2] += wgt * src[base + 2] as f64;
                }
            }
            out.extend(acc.iter().map(|&v| quantize(v)));
        }
    }
    Raster {
        width: img.width,
        height: img.height,
        pixels: out,
    }
}

/// Lookup table for `255 * (v / 255)^(1 / g)`.
pub fn gamma_lut(g: f64) -> Result<[u8; 256], RasterError> {
    if !g.is_finite() || g <= 0.0 {
        return Err(RasterError::InvalidParameter(format!(
            "gamma must be finite and positive, got {g}"
        )));
    }
    let inv = 1.0 / g;
    let mut lut = [0u8; 256];
    for (v, slot) in lut.iter_mut().enumerate() {
        *slot = quantize(255.0 * (v as f64 / 255.0).powf(inv));
    }
    Ok(lut)
}

/// Gamma correction; `g > 1` brightens, `g < 1` darkens.
pub fn gamma_map(img: &Raster, g: f64) -> Result<Raster, RasterError> {
    Ok(img.map_channels(&gamma_lut(g)?))
}

pub fn mean_gray(img: &Raster) -> f64 {
    let gray = to_gray(img);
    let sum: u64 = gray.values.iter().map(|&v| v as u64).sum();
    sum as f64 / gray.values.len() as f64
}

/// Mean of HSV value, `max(r, g, b)`.
pub fn mean_v(img: &Raster) -> f64 {
    let sum: u64 = img.rgb_iter().map(|[r, g, b]| r.max(g).max(b) as u64).sum();
    sum as f64 / (img.width * img.height) as f64
}

/// Mean of HSL lightness, `(max + min) / 2`.
pub fn mean_l(img: &Raster) -> f64 {
    let sum: u64 = img
        .rgb_iter()
        .map(|[r, g, b]| r.max(g).max(b) as u64 + r.min(g).min(b) as u64)
        .sum();
    sum as f64 / (2 * img.width * img.height) as f64
}

/// Root-mean-square difference over all channel samples.
pub fn rmse(a: &Raster, b: &Raster) -> Result<f64, RasterError> {
    if !a.same_dims(b) {
        return Err(RasterError::DimensionMismatch(
            a.width, a.height, b.width, b.height,
        ));
    }
    let sq: u64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    Ok((sq as f64 / a.pixels.len() as f64).sqrt())
}
