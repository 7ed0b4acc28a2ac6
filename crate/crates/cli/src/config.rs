//! The run configuration file.
//!
//! A TOML document with a few top-level keys and one flat section per
//! module. Every key is optional; omitted keys take the defaults below.
//!
//! ```toml
//! agent = "qlearn"        # or "linucb"
//! rounds = 20
//! seed = 1                # stream shuffling, noise draws and agent exploration
//! lenient = false         # accept weak brightness corrections as accurate
//!
//! [linucb]
//! alpha = 1.0
//!
//! [qlearn]
//! eta = 0.002
//! gamma = 0.0
//! epsilon = 0.1
//! epsilon_end = 0.01
//! epsilon_decay_steps = 0 # 0 keeps epsilon constant
//!
//! [reward]      # pd
//! [sense]       # lap_var_hi, lap_var_lo, brightness_band, tertile_lo, tertile_hi
//! [filters]     # blur_kernel_side, sharpen_center, ..., strong_darken_gamma
//! [stream]      # noise_mix = { blur, dark, white, clean }, shuffle, prefetch_next
//! [detector]    # kind = "surrogate" | "remote", url, timeout_secs
//! [surrogate]   # class_count, p_oracle, decay
//! [texgen]      # width, height, seed, count, ... (used when paths.images is unset)
//! [paths]       # images, oracle, log, snapshot, report
//! ```
//!
//! `sense.brightness_ref` is always replaced by the value stored in the
//! oracle table. Relative paths resolve against the working directory.

use onlinefilter::agents::{EpsilonSchedule, QConfig};
use onlinefilter::detector::SurrogateConfig;
use onlinefilter::env::{EnvConfig, NoiseMix, RewardConfig, StreamConfig};
use onlinefilter::filters::FilterParams;
use onlinefilter::sensing::SenseConfig;
use onlinefilter::texgen::TexSpec;
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub agent: String,
    pub rounds: u32,
    pub seed: u64,
    pub lenient: bool,
    pub linucb: LinUcbSection,
    pub qlearn: QLearnSection,
    pub reward: RewardConfig,
    pub sense: SenseConfig,
    pub filters: FilterParams,
    pub stream: StreamSection,
    pub detector: DetectorSection,
    pub surrogate: SurrogateConfig,
    pub texgen: TexSpec,
    pub paths: PathsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            agent: "qlearn".into(),
            rounds: 20,
            seed: 1,
            lenient: false,
            linucb: LinUcbSection::default(),
            qlearn: QLearnSection::default(),
            reward: RewardConfig::default(),
            sense: SenseConfig::default(),
            filters: FilterParams::default(),
            stream: StreamSection::default(),
            detector: DetectorSection::default(),
            surrogate: SurrogateConfig::default(),
            texgen: TexSpec::default(),
            paths: PathsSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinUcbSection {
    pub alpha: f64,
}

impl Default for LinUcbSection {
    fn default() -> Self {
        Self { alpha: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QLearnSection {
    pub eta: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: u64,
}

impl Default for QLearnSection {
    fn default() -> Self {
        let q = QConfig::default();
        Self {
            eta: q.eta,
            gamma: q.gamma,
            epsilon: q.epsilon.start,
            epsilon_end: q.epsilon.end,
            epsilon_decay_steps: q.epsilon.decay_steps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamSection {
    pub noise_mix: NoiseMix,
    pub shuffle: Option<bool>,
    /// Defaults to on exactly when the Q agent discounts (`gamma > 0`).
    pub prefetch_next: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub kind: String,
    pub url: Option<String>,
    pub timeout_secs: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            kind: "surrogate".into(),
            url: None,
            timeout_secs: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Directory of original `.ppm` images; textures are generated when unset.
    pub images: Option<PathBuf>,
    /// Oracle table CSV. `run` builds the table in memory when unset.
    pub oracle: Option<PathBuf>,
    pub log: PathBuf,
    pub snapshot: Option<PathBuf>,
    pub report: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            images: None,
            oracle: None,
            log: "run_log.csv".into(),
            snapshot: None,
            report: "report".into(),
        }
    }
}

/// What a command needs from the file system, for path checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Synth,
    Oracle,
    Run,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().trim().to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn q_config(&self) -> QConfig {
        QConfig {
            eta: self.qlearn.eta,
            gamma: self.qlearn.gamma,
            epsilon: EpsilonSchedule {
                start: self.qlearn.epsilon,
                end: self.qlearn.epsilon_end,
                decay_steps: self.qlearn.epsilon_decay_steps,
            },
            seed: self.seed,
        }
    }

    pub fn prefetch_next(&self) -> bool {
        self.stream
            .prefetch_next
            .unwrap_or(self.agent == "qlearn" && self.qlearn.gamma > 0.0)
    }

    /// Environment settings; `brightness_ref` still has to come from the
    /// oracle table.
    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            filters: self.filters.clone(),
            sense: self.sense.clone(),
            reward: self.reward,
            stream: StreamConfig {
                noise_mix: self.stream.noise_mix,
                shuffle: self.stream.shuffle.unwrap_or(true),
                seed: self.seed,
                prefetch_next: self.prefetch_next(),
            },
            lenient: self.lenient,
        }
    }

    /// Every violated constraint, checked before any side effect.
    pub fn violations(&self, purpose: Purpose) -> Vec<String> {
        let mut errs = Vec::new();
        if purpose == Purpose::Run {
            match self.agent.as_str() {
                "linucb" => {
                    let a = self.linucb.alpha;
                    if !(a >= 0.0 && a.is_finite()) {
                        errs.push(format!("linucb.alpha must be finite and >= 0, got {a}"));
                    }
                }
                "qlearn" => errs.extend(self.q_config().violations()),
                other => errs.push(format!(
                    "unknown agent {other:?}, expected \"linucb\" or \"qlearn\""
                )),
            }
            if self.rounds < 1 {
                errs.push("rounds must be >= 1".into());
            }
            errs.extend(self.reward.violations());
            errs.extend(self.sense.violations());
            errs.extend(self.stream.noise_mix.violations());
            if !self.prefetch_next() && self.agent == "qlearn" && self.qlearn.gamma > 0.0 {
                errs.push(
                    "stream.prefetch_next = false leaves gamma > 0 without next states".into(),
                );
            }
        }
        if purpose != Purpose::Oracle {
            errs.extend(self.filters.violations());
        }
        if purpose != Purpose::Synth {
            match self.detector.kind.as_str() {
                "surrogate" => errs.extend(self.surrogate.violations()),
                "remote" => {
                    if self.detector.url.as_deref().is_none_or(str::is_empty) {
                        errs.push(
                            "detector.url is required when detector.kind = \"remote\"".into(),
                        );
                    }
                    let t = self.detector.timeout_secs;
                    if !(t > 0.0 && t.is_finite()) {
                        errs.push(format!("detector.timeout_secs must be positive, got {t}"));
                    }
                }
                other => errs.push(format!(
                    "unknown detector.kind {other:?}, expected \"surrogate\" or \"remote\""
                )),
            }
        }
        match &self.paths.images {
            Some(dir) if !dir.is_dir() => {
                errs.push(format!("paths.images {} is not a directory", dir.display()))
            }
            Some(_) => {}
            None => errs.extend(self.texgen.violations()),
        }
        if purpose == Purpose::Run {
            if let Some(p) = &self.paths.oracle {
                if !p.is_file() {
                    errs.push(format!(
                        "paths.oracle {} does not exist; run `oracle` first",
                        p.display()
                    ));
                }
            }
            if let Some(dir) = parent_dir(&self.paths.log) {
                if !dir.is_dir() {
                    errs.push(format!(
                        "directory of paths.log {} does not exist",
                        dir.display()
                    ));
                }
            }
            if let Some(dir) = self.paths.snapshot.as_deref().and_then(parent_dir) {
                if !dir.is_dir() {
                    errs.push(format!(
                        "directory of paths.snapshot {} does not exist",
                        dir.display()
                    ));
                }
            }
        }
        errs
    }
}

fn parent_dir(p: &Path) -> Option<&Path> {
    p.parent().filter(|d| !d.as_os_str().is_empty())
}
