//! The task network whose correct-label probability drives rewards.
//!
//! Two implementations sit behind [`Detector`]:
//!
//! * [`SurrogateDetector`], a deterministic stand-in whose true-class
//!   probability decays exponentially with the RMSE between the scored image
//!   and its registered original;
//! * [`RemoteDetector`], an HTTP client for an external classifier service
//!   (`POST /infer`, JSON response).
//!
//! [`OracleTable`] holds each original's correct-label probability, computed
//! once before any learning starts.

use crate::dataset::NamedImage;
use crate::raster::{mean_gray, rmse, write_ppm, Raster};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::time::Duration;
use thiserror::Error;

/// Tolerance on the probability sum for locally produced vectors.
pub const LOCAL_SUM_TOLERANCE: f64 = 1e-9;
/// Tolerance on the probability sum for vectors returned by a remote service.
pub const REMOTE_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("unknown image {0:?}")]
    UnknownImage(String),
    #[error("image {name:?} is {got:?}, registered original is {want:?}")]
    DimensionMismatch {
        name: String,
        got: (usize, usize),
        want: (usize, usize),
    },
    #[error("class index {index} out of range for {count} classes")]
    ClassOutOfRange { index: usize, count: usize },
    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid detector config: {0}")]
    Config(String),
    #[error("image {name:?}: {source}")]
    ForImage {
        name: String,
        #[source]
        source: Box<DetectorError>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    probs: Vec<f64>,
}

impl ProbVector {
    /// Validates class count, per-entry range and sum-to-one within `tol`.
    /// Never renormalizes.
    pub fn new(probs: Vec<f64>, tol: f64) -> Result<Self, DetectorError> {
        if probs.len() < 2 {
            return Err(DetectorError::InvalidProbability(format!(
                "need at least 2 classes, got {}",
                probs.len()
            )));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(DetectorError::InvalidProbability(format!(
                "probs[{i}] = {p} outside [0, 1]"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(DetectorError::InvalidProbability(format!(
                "sum {sum} differs from 1 by more than {tol}"
            )));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn class_count(&self) -> usize {
        self.probs.len()
    }
}

pub fn correct_prob(p: &ProbVector, true_class: usize) -> Result<f64, DetectorError> {
    p.probs
        .get(true_class)
        .copied()
        .ok_or(DetectorError::ClassOutOfRange {
            index: true_class,
            count: p.class_count(),
        })
}

/// Ground-truth class for an image: 64-bit FNV-1a of its name, modulo the
/// class count.
pub fn true_class_of(name: &str, class_count: usize) -> usize {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    (h % class_count as u64) as usize
}

pub trait Detector: Send + Sync {
    fn infer(&self, img: &Raster, image_name: &str) -> Result<ProbVector, DetectorError>;

    /// Probability assigned to the image's ground-truth class.
    fn correct_prob(&self, img: &Raster, image_name: &str) -> Result<f64, DetectorError> {
        let p = self.infer(img, image_name)?;
        correct_prob(&p, true_class_of(image_name, p.class_count()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub class_count: usize,
    /// True-class probability on an unmodified original.
    pub p_oracle: f64,
    /// Decay rate of the true-class probability in RMSE / 255.
    pub decay: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            class_count: 10,
            p_oracle: 0.68,
            decay: 12.0,
        }
    }
}

impl SurrogateConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.class_count < 2 {
            errs.push(format!(
                "surrogate.class_count must be >= 2, got {}",
                self.class_count
            ));
        } else if !(self.p_oracle > 1.0 / self.class_count as f64 && self.p_oracle <= 1.0) {
            errs.push(format!(
                "surrogate.p_oracle must lie in (1/C, 1], got {}",
                self.p_oracle
            ));
        }
        if !(self.decay > 0.0 && self.decay.is_finite()) {
            errs.push(format!(
                "surrogate.decay must be positive, got {}",
                self.decay
            ));
        }
        errs
    }

    /// `1/C + (p_oracle - 1/C) * exp(-decay * rmse / 255)`.
    pub fn p_true(&self, rmse: f64) -> f64 {
        let floor = 1.0 / self.class_count as f64;
        floor + (self.p_oracle - floor) * (-self.decay * rmse / 255.0).exp()
    }
}

/// Deterministic detector scoring images by their distance to registered originals.
#[derive(Debug, Clone)]
pub struct SurrogateDetector {
    cfg: SurrogateConfig,
    registry: HashMap<String, Raster>,
}

impl SurrogateDetector {
    pub fn new(cfg: SurrogateConfig, originals: &[NamedImage]) -> Result<Self, DetectorError> {
        let errs = cfg.violations();
        if !errs.is_empty() {
            return Err(DetectorError::Config(errs.join("; ")));
        }
        let registry = originals
            .iter()
            .map(|n| (n.name.clone(), n.image.clone()))
            .collect();
        Ok(Self { cfg, registry })
    }

    pub fn config(&self) -> &SurrogateConfig {
        &self.cfg
    }
}

impl Detector for SurrogateDetector {
    fn infer(&self, img: &Raster, image_name: &str) -> Result<ProbVector, DetectorError> {
        let original = self
            .registry
            .get(image_name)
            .ok_or_else(|| DetectorError::UnknownImage(image_name.to_string()))?;
        let dist = rmse(img, original).map_err(|_| DetectorError::DimensionMismatch {
            name: image_name.to_string(),
            got: (img.width(), img.height()),
            want: (original.width(), original.height()),
        })?;
        let c = self.cfg.class_count;
        let p_true = self.cfg.p_true(dist);
        let rest = (1.0 - p_true) / (c - 1) as f64;
        let mut probs = vec![rest; c];
        probs[true_class_of(image_name, c)] = p_true;
        ProbVector::new(probs, LOCAL_SUM_TOLERANCE)
    }
}

/// Wire format of the classifier service's `/infer` response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferResponse {
    pub class_count: usize,
    pub probs: Vec<f64>,
    pub model: String,
}

pub const PPM_CONTENT_TYPE: &str = "image/x-portable-pixmap";

/// Client for a classifier service exposing `POST /infer`.
///
/// Requests carry the image as a binary PPM body. Responses are validated
/// against [`REMOTE_SUM_TOLERANCE`] and rejected, never renormalized, when
/// they fail. The underlying agent pools connections and is safe to share
/// across threads.
#[derive(Debug, Clone)]
pub struct RemoteDetector {
    base_url: String,
    agent: ureq::Agent,
}

impl RemoteDetector {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn parse_response(body: &str) -> Result<ProbVector, DetectorError> {
        let resp: InferResponse = serde_json::from_str(body)
            .map_err(|e| DetectorError::Protocol(format!("bad /infer body: {e}")))?;
        if resp.class_count != resp.probs.len() {
            return Err(DetectorError::InvalidProbability(format!(
                "class_count {} but {} probabilities",
                resp.class_count,
                resp.probs.len()
            )));
        }
        ProbVector::new(resp.probs, REMOTE_SUM_TOLERANCE)
    }
}

impl Detector for RemoteDetector {
    fn infer(&self, img: &Raster, _image_name: &str) -> Result<ProbVector, DetectorError> {
        let url = format!("{}/infer", self.base_url);
        let mut resp = self
            .agent
            .post(&url)
            .header("Content-Type", PPM_CONTENT_TYPE)
            .send(&write_ppm(img)[..])
            .map_err(|e| DetectorError::Transport(format!("POST {url}: {e}")))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| DetectorError::Transport(format!("reading {url}: {e}")))?;
        if status != 200 {
            return Err(DetectorError::Protocol(format!(
                "POST {url} returned {status}: {}",
                body.trim()
            )));
        }
        Self::parse_response(&body)
    }
}

/// Correct-label probability of every original plus the mean brightness of
/// the originals.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleTable {
    pub entries: BTreeMap<String, f64>,
    pub brightness_ref: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleTableError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("empty image set")]
    Empty,
}

impl OracleTable {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `#brightness_ref=<real>` then `image_name,oracle_pr` rows in name order.
    pub fn to_csv(&self) -> String {
        let mut out = format!("#brightness_ref={}\n", self.brightness_ref);
        for (name, p) in &self.entries {
            let _ = writeln!(out, "{name},{p}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, OracleTableError> {
        let mut lines = text.lines().enumerate();
        let err = |line: usize, msg: String| OracleTableError::Parse {
            line: line + 1,
            msg,
        };
        let (_, header) = lines.next().ok_or_else(|| err(0, "empty file".into()))?;
        let brightness_ref: f64 = header
            .strip_prefix("#brightness_ref=")
            .ok_or_else(|| err(0, "missing #brightness_ref= header".into()))?
            .trim()
            .parse()
            .map_err(|e| err(0, format!("bad brightness_ref: {e}")))?;
        let mut entries = BTreeMap::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let (name, p) = line
                .rsplit_once(',')
                .ok_or_else(|| err(i, "expected image_name,oracle_pr".into()))?;
            let p: f64 = p
                .trim()
                .parse()
                .map_err(|e| err(i, format!("bad oracle_pr: {e}")))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(err(i, format!("oracle_pr {p} outside [0, 1]")));
            }
            if entries.insert(name.to_string(), p).is_some() {
                return Err(err(i, format!("duplicate image {name:?}")));
            }
        }
        Ok(Self {
            entries,
            brightness_ref,
        })
    }
}

/// Scores every original with `detector`, using up to `jobs` worker threads.
pub fn build_oracle_table(
    originals: &[NamedImage],
    detector: &dyn Detector,
    jobs: usize,
) -> Result<OracleTable, DetectorError> {
    if originals.is_empty() {
        return Err(DetectorError::Config("no originals to score".into()));
    }
    let score = |img: &NamedImage| {
        detector
            .correct_prob(&img.image, &img.name)
            .map_err(|e| DetectorError::ForImage {
                name: img.name.clone(),
                source: Box::new(e),
            })
    };
    let jobs = jobs.clamp(1, originals.len());
    let scores: Vec<Result<f64, DetectorError>> = if jobs == 1 {
        originals.iter().map(score).collect()
    } else {
        let chunk = originals.len().div_ceil(jobs);
        std::thread::scope(|s| {
            let handles: Vec<_> = originals
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(score).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("oracle worker panicked"))
                .collect()
        })
    };
    let mut entries = BTreeMap::new();
    for (img, score) in originals.iter().zip(scores) {
        entries.insert(img.name.clone(), score?);
    }
    let brightness_ref =
        originals.iter().map(|n| mean_gray(&n.image)).sum::<f64>() / originals.len() as f64;
    Ok(OracleTable {
        entries,
        brightness_ref,
    })
}
