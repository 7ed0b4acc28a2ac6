//! Tabular Q-learning over the 81 x 6 state-action table with
//! epsilon-greedy exploration.

use super::{Agent, AgentError, Snapshot};
use crate::filters::Action;
use crate::sensing::{AgentState, STATE_COUNT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Full one-step update `(1 - eta) q + eta (r + gamma max_next)`, written as
/// `q + eta (target - q)`.
pub fn full_update(q: f64, reward: f64, gamma: f64, max_next: f64, eta: f64) -> f64 {
    let target = reward + gamma * max_next;
    q + eta * (target - q)
}

/// Simplified update for a zero discount: `q + eta (r - q)`.
pub fn simple_update(q: f64, reward: f64, eta: f64) -> f64 {
    q + eta * (reward - q)
}

/// Exploration rate, optionally decaying linearly to `end` over
/// `decay_steps` updates. `decay_steps = 0` keeps it constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 0.1,
            end: 0.01,
            decay_steps: 0,
        }
    }
}

impl EpsilonSchedule {
    pub fn constant(eps: f64) -> Self {
        Self {
            start: eps,
            end: eps,
            decay_steps: 0,
        }
    }

    pub fn at(&self, step: u64) -> f64 {
        if self.decay_steps == 0 {
            return self.start;
        }
        if step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }

    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        for (name, v) in [("epsilon", self.start), ("epsilon_end", self.end)] {
            if !(0.0..=1.0).contains(&v) {
                errs.push(format!("qlearn.{name} must lie in [0, 1], got {v}"));
            }
        }
        errs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QConfig {
    pub eta: f64,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    pub seed: u64,
}

impl Default for QConfig {
    fn default() -> Self {
        Self {
            eta: 0.002,
            gamma: 0.0,
            epsilon: EpsilonSchedule::default(),
            seed: 0,
        }
    }
}

impl QConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut errs = self.epsilon.violations();
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            errs.push(format!("qlearn.eta must lie in (0, 1], got {}", self.eta));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            errs.push(format!(
                "qlearn.gamma must lie in [0, 1), got {}",
                self.gamma
            ));
        }
        errs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTableAgent {
    eta: f64,
    gamma: f64,
    epsilon: EpsilonSchedule,
    steps: u64,
    q: Vec<[f64; Action::COUNT]>,
    #[serde(with = "rng_state")]
    rng: ChaCha8Rng,
}

impl QTableAgent {
    pub fn new(cfg: QConfig) -> Result<Self, AgentError> {
        let errs = cfg.violations();
        if !errs.is_empty() {
            return Err(AgentError::Config(errs.join("; ")));
        }
        Ok(Self {
            eta: cfg.eta,
            gamma: cfg.gamma,
            epsilon: cfg.epsilon,
            steps: 0,
            q: vec![[0.0; Action::COUNT]; STATE_COUNT],
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        })
    }

    pub fn q(&self, s: &AgentState, a: Action) -> f64 {
        self.q[s.index()][a.index()]
    }

    pub fn set_q(&mut self, s: &AgentState, a: Action, v: f64) {
        self.q[s.index()][a.index()] = v;
    }

    pub fn table(&self) -> &[[f64; Action::COUNT]] {
        &self.q
    }

    pub fn current_epsilon(&self) -> f64 {
        self.epsilon.at(self.steps)
    }

    /// Argmax over actions, lowest ordinal on ties.
    pub fn greedy(&self, s: &AgentState) -> Action {
        let row = &self.q[s.index()];
        let mut best = 0;
        for i in 1..Action::COUNT {
            if row[i] > row[best] {
                best = i;
            }
        }
        Action::ALL[best]
    }

    fn max_q(&self, s: &AgentState) -> f64 {
        self.q[s.index()]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub(super) fn validate(&self) -> Result<(), AgentError> {
        if self.q.len() != STATE_COUNT {
            return Err(AgentError::MalformedSnapshot(format!(
                "expected {STATE_COUNT} table rows, found {}",
                self.q.len()
            )));
        }
        if self.q.iter().flatten().any(|v| !v.is_finite()) {
            return Err(AgentError::MalformedSnapshot("non-finite Q entry".into()));
        }
        let cfg = QConfig {
            eta: self.eta,
            gamma: self.gamma,
            epsilon: self.epsilon,
            seed: 0,
        };
        let errs = cfg.violations();
        if !errs.is_empty() {
            return Err(AgentError::MalformedSnapshot(errs.join("; ")));
        }
        Ok(())
    }
}

impl Agent for QTableAgent {
    fn select(&mut self, s: &AgentState) -> Result<Action, AgentError> {
        let eps = self.current_epsilon();
        let explore = self.rng.random::<f64>() < eps;
        Ok(if explore {
            Action::ALL[self.rng.random_range(0..Action::COUNT)]
        } else {
            self.greedy(s)
        })
    }

    fn update(&mut self, s: &AgentState, a: Action, reward: i32, next: Option<&AgentState>) {
        let q = self.q(s, a);
        let r = reward as f64;
        let updated = match next {
            Some(n) if self.gamma != 0.0 => full_update(q, r, self.gamma, self.max_q(n), self.eta),
            _ => simple_update(q, r, self.eta),
        };
        self.set_q(s, a, updated);
        self.steps += 1;
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot::Qlearn(self.clone())
    }
}

/// Generator state as `{"seed": "<hex>", "stream": n, "word_pos": "<decimal>"}`.
/// The word position is a string because it does not fit in a JSON number.
mod rng_state {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Repr {
        seed: String,
        stream: u64,
        word_pos: String,
    }

    pub fn serialize<S: Serializer>(rng: &ChaCha8Rng, ser: S) -> Result<S::Ok, S::Error> {
        let seed = rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
        Repr {
            seed,
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
        .serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<ChaCha8Rng, D::Error> {
        let r = Repr::deserialize(de)?;
        if r.seed.len() != 64 || !r.seed.is_ascii() {
            return Err(D::Error::custom("rng seed must be 64 hex digits"));
        }
        let mut seed = [0u8; 32];
        for (i, byte) in seed.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&r.seed[2 * i..2 * i + 2], 16)
                .map_err(|_| D::Error::custom("rng seed must be 64 hex digits"))?;
        }
        let pos: u128 = r
            .word_pos
            .parse()
            .map_err(|_| D::Error::custom("rng word_pos must be a decimal integer"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(r.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent(cfg: QConfig) -> QTableAgent {
        QTableAgent::new(cfg).unwrap()
    }

    fn greedy_cfg() -> QConfig {
        QConfig {
            epsilon: EpsilonSchedule::constant(0.0),
            ..Default::default()
        }
    }

    fn s(i: usize) -> AgentState {
        AgentState::from_index(i).unwrap()
    }

    #[test]
    fn greedy_tie_break_and_argmax() {
        let mut a = agent(greedy_cfg());
        assert_eq!(a.select(&s(5)).unwrap(), Action::None);
        a.set_q(&s(5), Action::Deblur, 1.0);
        assert_eq!(a.select(&s(5)).unwrap(), Action::Deblur);
    }

    #[test]
    fn single_simple_update() {
        let mut a = agent(greedy_cfg());
        a.update(&s(0), Action::Deblur, 2, None);
        assert_eq!(a.q(&s(0), Action::Deblur), 0.004);
        assert_eq!(a.table().iter().flatten().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn zero_bootstrap_full_update() {
        let mut a = agent(QConfig {
            eta: 0.5,
            gamma: 0.9,
            ..greedy_cfg()
        });
        a.update(&s(3), Action::WeakDarken, 1, Some(&s(70)));
        assert_eq!(a.q(&s(3), Action::WeakDarken), 0.5);
    }

    #[test]
    fn bootstrap_uses_next_state_max() {
        let mut a = agent(QConfig {
            eta: 0.5,
            gamma: 0.5,
            ..greedy_cfg()
        });
        a.set_q(&s(70), Action::StrongDarken, 2.0);
        a.set_q(&s(70), Action::None, -4.0);
        a.update(&s(3), Action::WeakDarken, 1, Some(&s(70)));
        // 0.5 * 0 + 0.5 * (1 + 0.5 * 2)
        assert_eq!(a.q(&s(3), Action::WeakDarken), 1.0);
        // terminal next state falls back to the simple update
        a.update(&s(4), Action::WeakDarken, 1, None);
        assert_eq!(a.q(&s(4), Action::WeakDarken), 0.5);
    }

    #[test]
    fn epsilon_schedule() {
        let e = EpsilonSchedule {
            start: 0.3,
            end: 0.01,
            decay_steps: 100,
        };
        assert_eq!(e.at(0), 0.3);
        assert!((e.at(50) - 0.155).abs() < 1e-12);
        assert_eq!(e.at(100), 0.01);
        assert_eq!(e.at(10_000), 0.01);
        assert_eq!(EpsilonSchedule::constant(0.2).at(999), 0.2);
    }

    #[test]
    fn config_validation() {
        let bad = QConfig {
            eta: 0.0,
            gamma: 1.0,
            epsilon: EpsilonSchedule::constant(1.5),
            seed: 0,
        };
        assert_eq!(bad.violations().len(), 4);
        assert!(QTableAgent::new(bad).is_err());
    }
}
