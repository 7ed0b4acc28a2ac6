//! Environment: per-image noise injection, state sensing, action
//! application, detector scoring and reward emission.
//!
//! One round walks every original once, in a shuffled order. The noise kind
//! for each image is drawn up front, so the next image's state can be
//! prefetched for discounted updates without disturbing the random stream.

use crate::agents::{Agent, AgentError};
use crate::dataset::NamedImage;
use crate::detector::{Detector, DetectorError, OracleTable};
use crate::filters::{apply_action, apply_noise, is_accurate, Action, FilterParams, NoiseKind};
use crate::raster::RasterError;
use crate::sensing::{sense_state, AgentState, SenseConfig};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

pub const REWARD_FLOOR: i32 = -6;
pub const REWARD_CAP: i32 = 2;

pub const LOG_HEADER: &str =
    "round,iter,image,noise,state_index,action,reward,baseline_pr,denoise_pr,oracle_pr,accurate";

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("no oracle entry for image {0:?}")]
    MissingOracle(String),
    #[error("iteration {iter}: {source}")]
    Detector {
        iter: u64,
        #[source]
        source: DetectorError,
    },
    #[error("iteration {iter}: {source}")]
    Agent {
        iter: u64,
        #[source]
        source: AgentError,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("invalid stream config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Probability drop per reward step.
    pub pd: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { pd: 0.05 }
    }
}

impl RewardConfig {
    pub fn violations(&self) -> Vec<String> {
        if self.pd > 0.0 && self.pd.is_finite() {
            Vec::new()
        } else {
            vec![format!("reward.pd must be positive, got {}", self.pd)]
        }
    }
}

/// `clamp(2 + floor((denoise_pr - oracle_pr) / pd), -6, 2)`.
pub fn quantize_reward(denoise_pr: f64, oracle_pr: f64, cfg: &RewardConfig) -> i32 {
    let steps = ((denoise_pr - oracle_pr) / cfg.pd).floor();
    (REWARD_CAP as f64 + steps).clamp(REWARD_FLOOR as f64, REWARD_CAP as f64) as i32
}

/// Relative weights of the noise kinds in the stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseMix {
    pub blur: f64,
    pub dark: f64,
    pub white: f64,
    pub clean: f64,
}

impl Default for NoiseMix {
    fn default() -> Self {
        Self {
            blur: 1.0,
            dark: 1.0,
            white: 1.0,
            clean: 0.0,
        }
    }
}

impl NoiseMix {
    pub fn only(kind: NoiseKind) -> Self {
        let mut m = Self {
            blur: 0.0,
            dark: 0.0,
            white: 0.0,
            clean: 0.0,
        };
        *m.weight_mut(kind) = 1.0;
        m
    }

    pub fn weight(&self, kind: NoiseKind) -> f64 {
        match kind {
            NoiseKind::Blur => self.blur,
            NoiseKind::Dark => self.dark,
            NoiseKind::White => self.white,
            NoiseKind::Clean => self.clean,
        }
    }

    fn weight_mut(&mut self, kind: NoiseKind) -> &mut f64 {
        match kind {
            NoiseKind::Blur => &mut self.blur,
            NoiseKind::Dark => &mut self.dark,
            NoiseKind::White => &mut self.white,
            NoiseKind::Clean => &mut self.clean,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let ws = NoiseKind::ALL.map(|k| self.weight(k));
        if ws.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            vec!["stream.noise_mix weights must be finite and non-negative".into()]
        } else if ws.iter().sum::<f64>() <= 0.0 {
            vec!["stream.noise_mix weights must not all be zero".into()]
        } else {
            Vec::new()
        }
    }
}

/// Draws a noise kind with probability proportional to its weight.
pub fn sample_noise<R: Rng + ?Sized>(mix: &NoiseMix, rng: &mut R) -> NoiseKind {
    let total: f64 = NoiseKind::ALL.iter().map(|&k| mix.weight(k)).sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = NoiseKind::Blur;
    for k in NoiseKind::ALL {
        let w = mix.weight(k);
        if w <= 0.0 {
            continue;
        }
        if u < w {
            return k;
        }
        u -= w;
        last = k;
    }
    // Only reachable through rounding at the top of the range.
    last
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamConfig {
    pub noise_mix: NoiseMix,
    pub shuffle: bool,
    pub seed: u64,
    pub prefetch_next: bool,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            noise_mix: NoiseMix::default(),
            shuffle: true,
            seed: 0,
            prefetch_next: false,
        }
    }
}

/// Everything the environment needs besides the agent, data and detector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnvConfig {
    pub filters: FilterParams,
    pub sense: SenseConfig,
    pub reward: RewardConfig,
    pub stream: StreamConfig,
    /// Accept weak brightness corrections as accurate.
    pub lenient: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub round: u32,
    /// 1-based iteration index across the whole run.
    pub iter: u64,
    pub image_name: String,
    pub noise: NoiseKind,
    pub state: AgentState,
    pub action: Action,
    pub reward: i32,
    pub baseline_pr: f64,
    pub denoise_pr: f64,
    pub oracle_pr: f64,
    pub accurate: bool,
    /// Prefetched next state; `None` when terminal or prefetch is off.
    pub next_state: Option<AgentState>,
}

impl IterationRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.round,
            self.iter,
            self.image_name,
            self.noise,
            self.state.index(),
            self.action,
            self.reward,
            self.baseline_pr,
            self.denoise_pr,
            self.oracle_pr,
            self.accurate as u8
        )
    }
}

pub fn records_to_csv(records: &[IterationRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(LOG_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("log line {line}: {msg}")]
pub struct LogParseError {
    pub line: usize,
    pub msg: String,
}

/// Parses an iteration log written by [`records_to_csv`].
///
/// Prefetched next states are not logged, so every parsed record has
/// `next_state: None`. An empty file or a header without rows is an error.
pub fn parse_log(text: &str) -> Result<Vec<IterationRecord>, LogParseError> {
    let err = |line: usize, msg: String| LogParseError { line, msg };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        None => return Err(err(1, "empty log".into())),
        Some((_, h)) if h.trim_end() != LOG_HEADER => {
            return Err(err(1, format!("expected header {LOG_HEADER:?}")))
        }
        Some(_) => {}
    }
    let mut out = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 11 {
            return Err(err(n, format!("expected 11 fields, got {}", f.len())));
        }
        fn num<T: std::str::FromStr>(v: &str, what: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("bad {what} {v:?}"))
        }
        let prob = |v: &str, what: &str| -> Result<f64, String> {
            let p: f64 = num(v, what)?;
            if (0.0..=1.0).contains(&p) {
                Ok(p)
            } else {
                Err(format!("{what} {p} outside [0, 1]"))
            }
        };
        let rec = (|| -> Result<IterationRecord, String> {
            let state_index: usize = num(f[4], "state_index")?;
            let reward: i32 = num(f[6], "reward")?;
            if !(REWARD_FLOOR..=REWARD_CAP).contains(&reward) {
                return Err(format!(
                    "reward {reward} outside [{REWARD_FLOOR}, {REWARD_CAP}]"
                ));
            }
            Ok(IterationRecord {
                round: num(f[0], "round")?,
                iter: num(f[1], "iter")?,
                image_name: f[2].to_string(),
                noise: f[3].parse()?,
                state: AgentState::from_index(state_index)
                    .ok_or_else(|| format!("state_index {state_index} out of range"))?,
                action: f[5].parse()?,
                reward,
                baseline_pr: prob(f[7], "baseline_pr")?,
                denoise_pr: prob(f[8], "denoise_pr")?,
                oracle_pr: prob(f[9], "oracle_pr")?,
                accurate: match f[10] {
                    "0" => false,
                    "1" => true,
                    v => return Err(format!("bad accurate flag {v:?}")),
                },
                next_state: None,
            })
        })()
        .map_err(|m| err(n, m))?;
        out.push(rec);
    }
    if out.is_empty() {
        return Err(err(1, "log has no records".into()));
    }
    Ok(out)
}

/// Runs one pass over `originals`.
///
/// `first_iter` is the global index given to the first record. The `rng`
/// drives shuffling and noise draws only; agents own their randomness.
#[allow(clippy::too_many_arguments)]
pub fn run_round<R: Rng + ?Sized>(
    agent: &mut dyn Agent,
    originals: &[NamedImage],
    oracle: &OracleTable,
    detector: &dyn Detector,
    cfg: &EnvConfig,
    round: u32,
    first_iter: u64,
    rng: &mut R,
) -> Result<Vec<IterationRecord>, EnvError> {
    let mut order: Vec<&NamedImage> = originals.iter().collect();
    if cfg.stream.shuffle {
        order.shuffle(rng);
    }
    let plan: Vec<(&NamedImage, NoiseKind)> = order
        .into_iter()
        .map(|img| (img, sample_noise(&cfg.stream.noise_mix, rng)))
        .collect();
    for (img, _) in &plan {
        if oracle.get(&img.name).is_none() {
            return Err(EnvError::MissingOracle(img.name.clone()));
        }
    }

    let noisy_state = |(img, kind): &(&NamedImage, NoiseKind)| -> Result<_, EnvError> {
        let noisy = apply_noise(&img.image, *kind, &cfg.filters)?;
        let state = sense_state(&noisy, &cfg.sense);
        Ok((noisy, state))
    };

    let mut records = Vec::with_capacity(plan.len());
    let mut upcoming = match plan.first() {
        Some(first) => Some(noisy_state(first)?),
        None => None,
    };
    for (i, item) in plan.iter().enumerate() {
        let iter = first_iter + i as u64;
        let (img, noise) = *item;
        let (noisy, state) = upcoming.take().expect("current image prepared");
        upcoming = match plan.get(i + 1) {
            Some(next) => Some(noisy_state(next)?),
            None => None,
        };
        let det_err = |source| EnvError::Detector { iter, source };

        let baseline_pr = detector.correct_prob(&noisy, &img.name).map_err(det_err)?;
        let action = agent
            .select(&state)
            .map_err(|source| EnvError::Agent { iter, source })?;
        let denoise_pr = if action == Action::None {
            baseline_pr
        } else {
            let filtered = apply_action(&noisy, action, &cfg.filters)?;
            detector
                .correct_prob(&filtered, &img.name)
                .map_err(det_err)?
        };
        let oracle_pr = oracle.get(&img.name).expect("checked above");
        let reward = quantize_reward(denoise_pr, oracle_pr, &cfg.reward);
        let next_state = if cfg.stream.prefetch_next {
            upcoming.as_ref().map(|(_, s)| *s)
        } else {
            None
        };
        agent.update(&state, action, reward, next_state.as_ref());
        records.push(IterationRecord {
            round,
            iter,
            image_name: img.name.clone(),
            noise,
            state,
            action,
            reward,
            baseline_pr,
            denoise_pr,
            oracle_pr,
            accurate: is_accurate(noise, action, cfg.lenient),
            next_state,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reward_examples() {
        let cfg = RewardConfig::default();
        assert_eq!(quantize_reward(0.68, 0.68, &cfg), 2);
        // delta = -0.04 -> floor(-0.8) = -1
        assert_eq!(quantize_reward(0.64, 0.68, &cfg), 1);
        // delta = -0.58 -> floor(-11.6) = -12 -> clamp
        assert_eq!(quantize_reward(0.10, 0.68, &cfg), -6);
        assert_eq!(quantize_reward(0.9, 0.68, &cfg), 2);
    }

    #[test]
    fn reward_always_in_range() {
        let cfg = RewardConfig { pd: 0.013 };
        for i in 0..=100 {
            for j in 0..=100 {
                let r = quantize_reward(i as f64 / 100.0, j as f64 / 100.0, &cfg);
                assert!((REWARD_FLOOR..=REWARD_CAP).contains(&r));
            }
        }
    }

    #[test]
    fn single_kind_mix() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mix = NoiseMix::only(NoiseKind::Blur);
        assert!((0..1000).all(|_| sample_noise(&mix, &mut rng) == NoiseKind::Blur));
    }

    #[test]
    fn equal_mix_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mix = NoiseMix::default();
        let mut counts = [0usize; 4];
        let n = 30_000;
        for _ in 0..n {
            counts[sample_noise(&mix, &mut rng) as usize] += 1;
        }
        assert_eq!(counts[NoiseKind::Clean as usize], 0);
        for k in [NoiseKind::Blur, NoiseKind::Dark, NoiseKind::White] {
            let f = counts[k as usize] as f64 / n as f64;
            assert!((f - 1.0 / 3.0).abs() <= 0.02, "{k}: {f}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let mix = NoiseMix {
            clean: 0.5,
            ..Default::default()
        };
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..200)
                .map(|_| sample_noise(&mix, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn mix_validation() {
        assert!(NoiseMix::default().violations().is_empty());
        let zero = NoiseMix {
            blur: 0.0,
            dark: 0.0,
            white: 0.0,
            clean: 0.0,
        };
        assert_eq!(zero.violations().len(), 1);
        let neg = NoiseMix {
            blur: -1.0,
            ..Default::default()
        };
        assert_eq!(neg.violations().len(), 1);
        assert_eq!(RewardConfig { pd: 0.0 }.violations().len(), 1);
    }

    fn sample_record(iter: u64) -> IterationRecord {
        IterationRecord {
            round: 1,
            iter,
            image_name: "tex_7_0.ppm".into(),
            noise: NoiseKind::White,
            state: AgentState::from_index(77).unwrap(),
            action: Action::StrongDarken,
            reward: -3,
            baseline_pr: 0.123456789012345,
            denoise_pr: 1.0 / 3.0,
            oracle_pr: 0.68,
            accurate: true,
            next_state: None,
        }
    }

    #[test]
    fn log_roundtrip_is_exact() {
        let recs = vec![sample_record(1), sample_record(2)];
        assert_eq!(parse_log(&records_to_csv(&recs)).unwrap(), recs);
    }

    #[test]
    fn log_errors_carry_line_numbers() {
        assert_eq!(parse_log("").unwrap_err().line, 1);
        assert_eq!(parse_log(&format!("{LOG_HEADER}\n")).unwrap_err().line, 1);
        assert_eq!(parse_log("round,iter\n").unwrap_err().line, 1);
        let mut text = records_to_csv(&[sample_record(1), sample_record(2)]);
        text.push_str("1,3,x.ppm,blur,5,deblur,9,0.1,0.1,0.68,1\n");
        let e = parse_log(&text).unwrap_err();
        assert_eq!(e.line, 4);
        assert!(e.msg.contains("reward"), "{e}");
        let bad_kind = text.replace(",white,", ",fog,");
        assert_eq!(parse_log(&bad_kind).unwrap_err().line, 2);
    }
}
