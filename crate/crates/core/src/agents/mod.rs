//! Learners behind a common select/update interface.
//!
//! Snapshots are JSON documents of the form
//!
//! ```text
//! {"version": 1, "agent": "linucb", "alpha": ..., "arms": [{"a": [[..5..] x5], "b": [..5..]} x6]}
//! {"version": 1, "agent": "qlearn", "eta": ..., "gamma": ..., "epsilon": {...},
//!  "steps": n, "q": [[..6..] x81], "rng": {...}}
//! ```
//!
//! Floats are written in shortest round-trip form, so a restored agent
//! reproduces the original bit for bit, including its random stream.

mod linucb;
mod qtable;

pub use linucb::{ArmStats, LinUcbAgent};
pub use qtable::{full_update, simple_update, EpsilonSchedule, QConfig, QTableAgent};

use crate::filters::Action;
use crate::sensing::AgentState;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error("malformed snapshot: {0}")]
    MalformedSnapshot(String),
    #[error("internal fault: {0}")]
    Internal(String),
}

/// Environment-facing learner. Calls are strictly serialized by the loop.
pub trait Agent: Send {
    fn select(&mut self, s: &AgentState) -> Result<Action, AgentError>;

    /// `next` is the prefetched next state, `None` when terminal.
    fn update(&mut self, s: &AgentState, a: Action, reward: i32, next: Option<&AgentState>);

    fn snapshot(&self) -> Snapshot;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "agent", rename_all = "lowercase")]
#[allow(clippy::large_enum_variant)]
pub enum Snapshot {
    Linucb(LinUcbAgent),
    Qlearn(QTableAgent),
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    version: u32,
    #[serde(flatten)]
    body: Snapshot,
}

impl Snapshot {
    pub fn to_bytes(&self) -> Vec<u8> {
        let env = Envelope {
            version: SNAPSHOT_VERSION,
            body: self.clone(),
        };
        let mut out = serde_json::to_vec(&env).expect("snapshot serialization is infallible");
        out.push(b'\n');
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AgentError> {
        let env: Envelope = serde_json::from_slice(bytes)
            .map_err(|e| AgentError::MalformedSnapshot(e.to_string()))?;
        if env.version != SNAPSHOT_VERSION {
            return Err(AgentError::MalformedSnapshot(format!(
                "unsupported version {}",
                env.version
            )));
        }
        match &env.body {
            Snapshot::Linucb(a) => a.validate()?,
            Snapshot::Qlearn(a) => a.validate()?,
        }
        Ok(env.body)
    }

    pub fn into_agent(self) -> Box<dyn Agent> {
        match self {
            Snapshot::Linucb(a) => Box::new(a),
            Snapshot::Qlearn(a) => Box::new(a),
        }
    }
}

pub fn restore_agent(bytes: &[u8]) -> Result<Box<dyn Agent>, AgentError> {
    Snapshot::from_bytes(bytes).map(Snapshot::into_agent)
}
