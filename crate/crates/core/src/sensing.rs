//! Image-quality features and their quantization into the discrete agent
//! state.
//!
//! Four raw features are measured on a (noisy) image:
//!
//! * blurriness: variance of the Laplacian of the grayscale image,
//! * brightness: mean gray level compared against a reference brightness,
//! * mean HSV value,
//! * mean HSL lightness.
//!
//! Each is bucketed into three levels, giving 3^4 = 81 states.

use crate::raster::{mean_gray, mean_l, mean_v, to_gray, Raster};
use serde::{Deserialize, Serialize};
use std::fmt;

pub const STATE_COUNT: usize = 81;
pub const FEATURE_DIM: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AgentState {
    blur: u8,
    brightness: i8,
    value: u8,
    lightness: u8,
}

impl AgentState {
    /// `blur`, `value`, `lightness` in `0..=2`; `brightness` in `-1..=1`.
    pub fn new(blur: u8, brightness: i8, value: u8, lightness: u8) -> Option<Self> {
        (blur <= 2 && (-1..=1).contains(&brightness) && value <= 2 && lightness <= 2).then_some(
            Self {
                blur,
                brightness,
                value,
                lightness,
            },
        )
    }

    pub fn blur(&self) -> u8 {
        self.blur
    }

    pub fn brightness(&self) -> i8 {
        self.brightness
    }

    pub fn value(&self) -> u8 {
        self.value
    }

    pub fn lightness(&self) -> u8 {
        self.lightness
    }

    /// Dense index in `0..81`.
    pub fn index(&self) -> usize {
        self.blur as usize * 27
            + (self.brightness + 1) as usize * 9
            + self.value as usize * 3
            + self.lightness as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        if i >= STATE_COUNT {
            return None;
        }
        Self::new(
            (i / 27) as u8,
            ((i / 9) % 3) as i8 - 1,
            ((i / 3) % 3) as u8,
            (i % 3) as u8,
        )
    }
}

impl fmt::Display for AgentState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{},{},{})",
            self.blur, self.brightness, self.value, self.lightness
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SenseConfig {
    pub lap_var_hi: f64,
    pub lap_var_lo: f64,
    /// Mean gray level the detector expects; normally taken from the oracle table.
    pub brightness_ref: f64,
    pub brightness_band: f64,
    pub tertile_lo: f64,
    pub tertile_hi: f64,
}

impl Default for SenseConfig {
    fn default() -> Self {
        Self {
            lap_var_hi: 100.0,
            lap_var_lo: 30.0,
            brightness_ref: 128.0,
            brightness_band: 20.0,
            tertile_lo: 85.0,
            tertile_hi: 170.0,
        }
    }
}

impl SenseConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.lap_var_hi > self.lap_var_lo && self.lap_var_lo >= 0.0) {
            errs.push(format!(
                "sense: need lap_var_hi > lap_var_lo >= 0, got {} / {}",
                self.lap_var_hi, self.lap_var_lo
            ));
        }
        if !(0.0..=255.0).contains(&self.brightness_ref) {
            errs.push(format!(
                "sense.brightness_ref must lie in [0, 255], got {}",
                self.brightness_ref
            ));
        }
        if !(self.brightness_band > 0.0 && self.brightness_band.is_finite()) {
            errs.push(format!(
                "sense.brightness_band must be positive, got {}",
                self.brightness_band
            ));
        }
        if !(0.0 < self.tertile_lo && self.tertile_lo < self.tertile_hi && self.tertile_hi < 255.0)
        {
            errs.push(format!(
                "sense: need 0 < tertile_lo < tertile_hi < 255, got {} / {}",
                self.tertile_lo, self.tertile_hi
            ));
        }
        errs
    }
}

/// Raw, unquantized measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Features {
    pub lap_var: f64,
    pub mean_gray: f64,
    pub mean_v: f64,
    pub mean_l: f64,
}

/// Population variance of the 4-neighbour Laplacian response of the gray image.
pub fn laplacian_variance(img: &Raster) -> f64 {
    let gray = to_gray(img);
    let (w, h) = (gray.width as isize, gray.height as isize);
    let n = (w * h) as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for y in 0..h {
        for x in 0..w {
            let c = gray.at_clamped(x, y) as f64;
            let resp = gray.at_clamped(x - 1, y) as f64
                + gray.at_clamped(x + 1, y) as f64
                + gray.at_clamped(x, y - 1) as f64
                + gray.at_clamped(x, y + 1) as f64
                - 4.0 * c;
            sum += resp;
            sum_sq += resp * resp;
        }
    }
    let mean = sum / n;
    // Responses are integers bounded by 1020, so the sums are exact in f64.
    (sum_sq / n - mean * mean).max(0.0)
}

pub fn measure(img: &Raster) -> Features {
    Features {
        lap_var: laplacian_variance(img),
        mean_gray: mean_gray(img),
        mean_v: mean_v(img),
        mean_l: mean_l(img),
    }
}

fn tertile(v: f64, cfg: &SenseConfig) -> u8 {
    if v < cfg.tertile_lo {
        0
    } else if v < cfg.tertile_hi {
        1
    } else {
        2
    }
}

pub fn quantize(f: &Features, cfg: &SenseConfig) -> AgentState {
    let blur = if f.lap_var >= cfg.lap_var_hi {
        0
    } else if f.lap_var >= cfg.lap_var_lo {
        1
    } else {
        2
    };
    let brightness = if f.mean_gray < cfg.brightness_ref - cfg.brightness_band {
        -1
    } else if f.mean_gray > cfg.brightness_ref + cfg.brightness_band {
        1
    } else {
        0
    };
    AgentState {
        blur,
        brightness,
        value: tertile(f.mean_v, cfg),
        lightness: tertile(f.mean_l, cfg),
    }
}

pub fn sense_state(img: &Raster, cfg: &SenseConfig) -> AgentState {
    quantize(&measure(img), cfg)
}

/// Context vector `[1, x1/2, x2, x3/2, x4/2]`.
pub fn feature_vector(s: &AgentState) -> [f64; FEATURE_DIM] {
    [
        1.0,
        s.blur as f64 / 2.0,
        s.brightness as f64,
        s.value as f64 / 2.0,
        s.lightness as f64 / 2.0,
    ]
}
