//! Noise generators applied by the environment and the de-noise actions the
//! agent chooses from.

use crate::raster::{convolve, gamma_map, Kernel, Raster, RasterError};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Blur,
    Dark,
    White,
    Clean,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [
        NoiseKind::Blur,
        NoiseKind::Dark,
        NoiseKind::White,
        NoiseKind::Clean,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::Blur => "blur",
            NoiseKind::Dark => "dark",
            NoiseKind::White => "white",
            NoiseKind::Clean => "clean",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown noise kind {s:?}"))
    }
}

/// De-noise filter choice. The ordinal is stable and used in logs,
/// snapshots and tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    None = 0,
    Deblur = 1,
    WeakWhiten = 2,
    StrongWhiten = 3,
    WeakDarken = 4,
    StrongDarken = 5,
}

impl Action {
    pub const COUNT: usize = 6;

    pub const ALL: [Action; Action::COUNT] = [
        Action::None,
        Action::Deblur,
        Action::WeakWhiten,
        Action::StrongWhiten,
        Action::WeakDarken,
        Action::StrongDarken,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::None => "none",
            Action::Deblur => "deblur",
            Action::WeakWhiten => "weak_whiten",
            Action::StrongWhiten => "strong_whiten",
            Action::WeakDarken => "weak_darken",
            Action::StrongDarken => "strong_darken",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown action {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    pub blur_kernel_side: usize,
    pub sharpen_center: f64,
    pub sharpen_off: f64,
    pub noise_white_gamma: f64,
    pub noise_dark_gamma: f64,
    pub weak_whiten_gamma: f64,
    pub strong_whiten_gamma: f64,
    pub weak_darken_gamma: f64,
    pub strong_darken_gamma: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            blur_kernel_side: 5,
            sharpen_center: 9.0,
            sharpen_off: -1.0,
            noise_white_gamma: 3.5,
            noise_dark_gamma: 0.2,
            weak_whiten_gamma: 2.0,
            strong_whiten_gamma: 5.0,
            weak_darken_gamma: 0.5,
            strong_darken_gamma: 1.0 / 3.5,
        }
    }
}

impl FilterParams {
    /// Returns every violated constraint, empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.blur_kernel_side != 3 && self.blur_kernel_side != 5 {
            errs.push(format!(
                "filters.blur_kernel_side must be 3 or 5, got {}",
                self.blur_kernel_side
            ));
        }
        for (name, g) in [
            ("noise_white_gamma", self.noise_white_gamma),
            ("noise_dark_gamma", self.noise_dark_gamma),
            ("weak_whiten_gamma", self.weak_whiten_gamma),
            ("strong_whiten_gamma", self.strong_whiten_gamma),
            ("weak_darken_gamma", self.weak_darken_gamma),
            ("strong_darken_gamma", self.strong_darken_gamma),
        ] {
            if !g.is_finite() || g <= 0.0 {
                errs.push(format!("filters.{name} must be a positive real, got {g}"));
            }
        }
        if !self.sharpen_center.is_finite() || !self.sharpen_off.is_finite() {
            errs.push("filters.sharpen weights must be finite".into());
        }
        if !(self.strong_whiten_gamma > self.weak_whiten_gamma && self.weak_whiten_gamma > 1.0) {
            errs.push(format!(
                "filters: need strong_whiten_gamma > weak_whiten_gamma > 1, got {} / {}",
                self.strong_whiten_gamma, self.weak_whiten_gamma
            ));
        }
        if !(0.0 < self.strong_darken_gamma
            && self.strong_darken_gamma < self.weak_darken_gamma
            && self.weak_darken_gamma < 1.0)
        {
            errs.push(format!(
                "filters: need 0 < strong_darken_gamma < weak_darken_gamma < 1, got {} / {}",
                self.strong_darken_gamma, self.weak_darken_gamma
            ));
        }
        errs
    }
}

pub fn apply_noise(img: &Raster, kind: NoiseKind, p: &FilterParams) -> Result<Raster, RasterError> {
    match kind {
        NoiseKind::Blur => Ok(convolve(img, &Kernel::box_blur(p.blur_kernel_side)?)),
        NoiseKind::White => gamma_map(img, p.noise_white_gamma),
        NoiseKind::Dark => gamma_map(img, p.noise_dark_gamma),
        NoiseKind::Clean => Ok(img.clone()),
    }
}

pub fn apply_action(img: &Raster, a: Action, p: &FilterParams) -> Result<Raster, RasterError> {
    match a {
        Action::None => Ok(img.clone()),
        Action::Deblur => Ok(convolve(
            img,
            &Kernel::sharpen(p.sharpen_center, p.sharpen_off)?,
        )),
        Action::WeakWhiten => gamma_map(img, p.weak_whiten_gamma),
        Action::StrongWhiten => gamma_map(img, p.strong_whiten_gamma),
        Action::WeakDarken => gamma_map(img, p.weak_darken_gamma),
        Action::StrongDarken => gamma_map(img, p.strong_darken_gamma),
    }
}

/// Actions that count as the accurate response to `kind`.
///
/// Strict mode accepts only the analytic inverse; lenient mode also accepts
/// the weak variant of the brightness corrections.
pub fn counter_action(kind: NoiseKind, lenient: bool) -> &'static [Action] {
    match (kind, lenient) {
        (NoiseKind::Blur, _) => &[Action::Deblur],
        (NoiseKind::Clean, _) => &[Action::None],
        (NoiseKind::Dark, false) => &[Action::StrongWhiten],
        (NoiseKind::Dark, true) => &[Action::WeakWhiten, Action::StrongWhiten],
        (NoiseKind::White, false) => &[Action::StrongDarken],
        (NoiseKind::White, true) => &[Action::WeakDarken, Action::StrongDarken],
    }
}

pub fn is_accurate(kind: NoiseKind, a: Action, lenient: bool) -> bool {
    counter_action(kind, lenient).contains(&a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::gamma_lut;

    fn params() -> FilterParams {
        FilterParams::default()
    }

    fn gradient() -> Raster {
        Raster::from_fn(12, 10, |x, y| {
            [(x * 21) as u8, (y * 25) as u8, ((x + y) * 11) as u8]
        })
        .unwrap()
    }

    #[test]
    fn defaults_are_valid() {
        assert!(params().violations().is_empty());
    }

    #[test]
    fn invalid_gamma_ordering_reported() {
        let p = FilterParams {
            weak_whiten_gamma: 6.0,
            strong_darken_gamma: 0.7,
            ..params()
        };
        assert_eq!(p.violations().len(), 2);
    }

    #[test]
    fn noise_examples() {
        let img = gradient();
        assert_eq!(apply_noise(&img, NoiseKind::Clean, &params()).unwrap(), img);
        let white = Raster::uniform(5, 5, [255; 3]).unwrap();
        assert_eq!(
            apply_noise(&white, NoiseKind::White, &params()).unwrap(),
            white
        );
        // 255 * (128/255)^5 = 8.03
        let mid = Raster::uniform(5, 5, [128; 3]).unwrap();
        assert_eq!(
            apply_noise(&mid, NoiseKind::Dark, &params()).unwrap(),
            Raster::uniform(5, 5, [8; 3]).unwrap()
        );
    }

    #[test]
    fn action_examples() {
        let img = gradient();
        assert_eq!(apply_action(&img, Action::None, &params()).unwrap(), img);
        let flat = Raster::uniform(6, 6, [40, 90, 200]).unwrap();
        assert_eq!(
            apply_action(&flat, Action::Deblur, &params()).unwrap(),
            flat
        );
        // 255 * (8/255)^0.2 = 127.9
        let eight = Raster::uniform(5, 5, [8; 3]).unwrap();
        assert_eq!(
            apply_action(&eight, Action::StrongWhiten, &params()).unwrap(),
            Raster::uniform(5, 5, [128; 3]).unwrap()
        );
    }

    #[test]
    fn dims_preserved() {
        let img = gradient();
        for k in NoiseKind::ALL {
            let out = apply_noise(&img, k, &params()).unwrap();
            assert!(out.same_dims(&img));
        }
        for a in Action::ALL {
            let out = apply_action(&img, a, &params()).unwrap();
            assert!(out.same_dims(&img));
        }
    }

    #[test]
    fn dark_then_strong_whiten_restores_upper_half() {
        let p = params();
        let dark = gamma_lut(p.noise_dark_gamma).unwrap();
        let fix = gamma_lut(p.strong_whiten_gamma).unwrap();
        for v in 128..=255usize {
            let rt = fix[dark[v] as usize] as i32;
            assert!((rt - v as i32).abs() <= 3, "v={v} rt={rt}");
        }
    }

    #[test]
    fn white_then_strong_darken_restores_from_32() {
        let p = params();
        let white = gamma_lut(p.noise_white_gamma).unwrap();
        let fix = gamma_lut(p.strong_darken_gamma).unwrap();
        for v in 32..=255usize {
            let rt = fix[white[v] as usize] as i32;
            assert!((rt - v as i32).abs() <= 3, "v={v} rt={rt}");
        }
    }

    #[test]
    fn counter_actions() {
        assert_eq!(counter_action(NoiseKind::Blur, false), &[Action::Deblur]);
        assert_eq!(counter_action(NoiseKind::Clean, false), &[Action::None]);
        assert_eq!(
            counter_action(NoiseKind::Dark, true),
            &[Action::WeakWhiten, Action::StrongWhiten]
        );
        assert_eq!(
            counter_action(NoiseKind::White, false),
            &[Action::StrongDarken]
        );
        assert!(is_accurate(NoiseKind::White, Action::WeakDarken, true));
        assert!(!is_accurate(NoiseKind::White, Action::WeakDarken, false));
    }

    #[test]
    fn names_roundtrip() {
        for a in Action::ALL {
            assert_eq!(a.as_str().parse::<Action>().unwrap(), a);
            assert_eq!(Action::from_index(a.index()), Some(a));
        }
        for k in NoiseKind::ALL {
            assert_eq!(k.as_str().parse::<NoiseKind>().unwrap(), k);
        }
        assert!("sharpen".parse::<Action>().is_err());
        assert_eq!(Action::from_index(6), None);
    }
}
