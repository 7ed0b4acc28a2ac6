//! Procedural "original" images so the pipeline runs without external data.
//!
//! A texture is a saturated violet or rose base color modulated by a lattice
//! of blobs (period near 8 px) with faint stripes on top and a slight linear
//! gradient. The modulation is built from cosine modes aligned with the image
//! edges, and its amplitude is scaled to hit a target Laplacian variance,
//! high for sharp textures and low for soft ones.
//! Every `outlier_every`-th image is shifted darker or brighter so the set
//! covers all brightness buckets.

use crate::dataset::NamedImage;
use crate::raster::Raster;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Periods at which the default blur followed by the default sharpen is
/// close to the identity, for the blob lattice and for stripes.
const BLOB_PERIOD: f64 = 8.0;
const STRIPE_PERIOD: f64 = 6.4;
const STRIPE_WEIGHT: (f64, f64) = (0.1, 0.2);
/// Laplacian-variance ranges the sharp and soft amplitudes are scaled to.
const SHARP_LAPVAR: (f64, f64) = (550.0, 700.0);
const SOFT_LAPVAR: (f64, f64) = (40.0, 70.0);
/// Saturation lift of the dark and bright outliers.
const DARK_LIFT: f64 = 16.0;
const BRIGHT_LIFT: f64 = 4.0;
const GRAY_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TexSpec {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub count: usize,
    /// Fraction of images that are sharp.
    pub sharp_fraction: f64,
    /// Gray level range of the regular images.
    pub gray_lo: f64,
    pub gray_hi: f64,
    /// How far the brightest channel sits above the gray level.
    pub lift_lo: f64,
    pub lift_hi: f64,
    /// Gray shift of the dark and bright outliers.
    pub dark_offset: f64,
    pub bright_offset: f64,
    /// Every `outlier_every`-th image is an outlier, alternating dark and
    /// bright; 0 disables.
    pub outlier_every: usize,
}

impl Default for TexSpec {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            seed: 7,
            count: 64,
            sharp_fraction: 1.0,
            gray_lo: 138.0,
            gray_hi: 146.0,
            lift_lo: 36.0,
            lift_hi: 40.0,
            dark_offset: 36.0,
            bright_offset: 24.0,
            outlier_every: 8,
        }
    }
}

impl TexSpec {
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.count < 1 {
            errs.push("texgen.count must be >= 1".into());
        }
        if self.width < 8 || self.height < 8 {
            errs.push(format!(
                "texgen dimensions must be >= 8, got {}x{}",
                self.width, self.height
            ));
        }
        if !(0.0..=1.0).contains(&self.sharp_fraction) {
            errs.push(format!(
                "texgen.sharp_fraction must lie in [0, 1], got {}",
                self.sharp_fraction
            ));
        }
        if !(0.0 <= self.gray_lo && self.gray_lo <= self.gray_hi && self.gray_hi <= 255.0) {
            errs.push(format!(
                "texgen: need 0 <= gray_lo <= gray_hi <= 255, got {} / {}",
                self.gray_lo, self.gray_hi
            ));
        }
        if !(0.0 <= self.lift_lo && self.lift_lo <= self.lift_hi && self.lift_hi <= 255.0) {
            errs.push(format!(
                "texgen: need 0 <= lift_lo <= lift_hi <= 255, got {} / {}",
                self.lift_lo, self.lift_hi
            ));
        }
        for (name, v) in [
            ("dark_offset", self.dark_offset),
            ("bright_offset", self.bright_offset),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                errs.push(format!("texgen.{name} must be non-negative, got {v}"));
            }
        }
        errs
    }

    /// Whether image `i` is generated as a sharp texture.
    pub fn is_sharp(&self, i: usize) -> bool {
        if self.outlier(i) == Some(Outlier::Dark) {
            // Dark outliers stay soft so their shadows survive a darkening gamma.
            return false;
        }
        let f = self.sharp_fraction;
        f >= 1.0 || ((i as f64 + 0.5) * f).floor() < ((i as f64 + 1.5) * f).floor()
    }

    fn outlier(&self, i: usize) -> Option<Outlier> {
        let every = self.outlier_every;
        if every == 0 || i % every != every - 1 {
            None
        } else if (i / every).is_multiple_of(2) {
            Some(Outlier::Dark)
        } else {
            Some(Outlier::Bright)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Outlier {
    Dark,
    Bright,
}

pub fn image_name(seed: u64, i: usize) -> String {
    format!("tex_{seed}_{i}.ppm")
}

/// Generates `spec.count` textures named `tex_<seed>_<i>.ppm`.
///
/// Output is a pure function of `spec`, and image `i` does not depend on
/// `spec.count`.
pub fn generate(spec: &TexSpec) -> Vec<NamedImage> {
    (0..spec.count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64);
            NamedImage::new(image_name(spec.seed, i), texture(spec, i, &mut rng))
        })
        .collect()
}

/// Cosine mode `k` along an axis of length `n`, symmetric about both edges
/// so that replicated borders continue it smoothly.
fn mode(k: usize, t: usize, n: usize) -> f64 {
    (PI * k as f64 * (t as f64 + 0.5) / n as f64).cos()
}

/// Mode index whose period is closest to `period` on an axis of length `n`.
fn mode_index(n: usize, period: f64) -> usize {
    ((2 * n) as f64 / period).round().max(1.0) as usize
}

/// Base color with the given gray level whose brightest channel (red or
/// blue) sits `lift` above it, green lowest and the third channel halfway.
fn palette(gray: f64, lift: f64, red_top: bool) -> [f64; 3] {
    let (top, mid) = if red_top { (0, 2) } else { (2, 0) };
    let hi = gray + lift;
    // gray = w_top hi + w_g lo + w_mid (hi + lo) / 2, solved for lo.
    let w = GRAY_WEIGHTS;
    let lo = (gray - (w[top] + w[mid] / 2.0) * hi) / (w[1] + w[mid] / 2.0);
    let mut c = [0.0; 3];
    c[top] = hi;
    c[mid] = (hi + lo) / 2.0;
    c[1] = lo;
    c
}

fn texture(spec: &TexSpec, i: usize, rng: &mut ChaCha8Rng) -> Raster {
    let gray = rng.random_range(spec.gray_lo..=spec.gray_hi);
    let lift = rng.random_range(spec.lift_lo..=spec.lift_hi);
    let (gray, lift) = match spec.outlier(i) {
        None => (gray, lift),
        Some(Outlier::Dark) => (gray - spec.dark_offset, DARK_LIFT),
        Some(Outlier::Bright) => (gray + spec.bright_offset, BRIGHT_LIFT),
    };
    let base = palette(gray, lift, rng.random_bool(0.5));
    let target = if spec.is_sharp(i) {
        rng.random_range(SHARP_LAPVAR.0..SHARP_LAPVAR.1)
    } else {
        rng.random_range(SOFT_LAPVAR.0..SOFT_LAPVAR.1)
    };
    let blob_sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let stripe_weight = rng.random_range(STRIPE_WEIGHT.0..STRIPE_WEIGHT.1)
        * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let vertical = rng.random_bool(0.5);
    let grad = (rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0));

    let (w, h) = (spec.width, spec.height);
    let (bx, by) = (mode_index(w, BLOB_PERIOD), mode_index(h, BLOB_PERIOD));
    let (sx, sy) = (mode_index(w, STRIPE_PERIOD), mode_index(h, STRIPE_PERIOD));
    let unit: Vec<f64> = (0..w * h)
        .map(|k| {
            let (x, y) = (k % w, k / w);
            let stripe = if vertical {
                mode(sx, x, w)
            } else {
                mode(sy, y, h)
            };
            blob_sign * mode(bx, x, w) * mode(by, y, h) + stripe_weight * stripe
        })
        .collect();
    let amp = (target / laplacian_var(&unit, w, h)).sqrt();
    Raster::from_fn(w, h, |x, y| {
        let ramp = grad.0 * (x as f64 / w as f64 - 0.5) + grad.1 * (y as f64 / h as f64 - 0.5);
        let v = amp * unit[y * w + x] + ramp;
        base.map(|c| (c + v).round().clamp(0.0, 255.0) as u8)
    })
    .expect("dimensions validated by caller")
}

/// Population variance of the 4-neighbour Laplacian, replicate borders.
fn laplacian_var(f: &[f64], w: usize, h: usize) -> f64 {
    let at = |x: isize, y: isize| {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        f[y * w + x]
    };
    let lap: Vec<f64> = (0..w * h)
        .map(|k| {
            let (x, y) = ((k % w) as isize, (k / w) as isize);
            at(x - 1, y) + at(x + 1, y) + at(x, y - 1) + at(x, y + 1) - 4.0 * at(x, y)
        })
        .collect();
    let n = lap.len() as f64;
    let mean = lap.iter().sum::<f64>() / n;
    lap.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}
