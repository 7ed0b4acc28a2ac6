//! Disjoint LinUCB: each arm keeps its own ridge-regression statistics
//! `A_a = I + sum x x^T`, `b_a = sum r x` and is scored by
//! `theta_a . x + alpha * sqrt(x^T A_a^-1 x)` with `theta_a = A_a^-1 b_a`.

use super::{Agent, AgentError, Snapshot};
use crate::filters::Action;
use crate::sensing::{feature_vector, AgentState, FEATURE_DIM};
use serde::{Deserialize, Serialize};

const D: usize = FEATURE_DIM;
pub type Matrix = [[f64; D]; D];
pub type Vector = [f64; D];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub a: Matrix,
    pub b: Vector,
}

impl ArmStats {
    fn fresh() -> Self {
        let mut a = [[0.0; D]; D];
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self { a, b: [0.0; D] }
    }

    /// Solves `A y = v` through a Cholesky factorization of the SPD matrix `A`.
    pub fn solve(&self, v: &Vector) -> Result<Vector, AgentError> {
        let l = cholesky(&self.a)?;
        let mut z = [0.0; D];
        for i in 0..D {
            let s: f64 = (0..i).map(|k| l[i][k] * z[k]).sum();
            z[i] = (v[i] - s) / l[i][i];
        }
        let mut y = [0.0; D];
        for i in (0..D).rev() {
            let s: f64 = (i + 1..D).map(|k| l[k][i] * y[k]).sum();
            y[i] = (z[i] - s) / l[i][i];
        }
        Ok(y)
    }

    pub fn theta(&self) -> Result<Vector, AgentError> {
        self.solve(&self.b)
    }

    /// Upper confidence score for context `x`.
    pub fn score(&self, x: &Vector, alpha: f64) -> Result<f64, AgentError> {
        let theta = self.theta()?;
        let z = self.solve(x)?;
        let mean = dot(&theta, x);
        let width = dot(x, &z).max(0.0).sqrt();
        Ok(mean + alpha * width)
    }

    fn add(&mut self, x: &Vector, r: f64) {
        for i in 0..D {
            for j in 0..D {
                self.a[i][j] += x[i] * x[j];
            }
            self.b[i] += r * x[i];
        }
    }
}

fn dot(a: &Vector, b: &Vector) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cholesky(a: &Matrix) -> Result<Matrix, AgentError> {
    let mut l = [[0.0; D]; D];
    for i in 0..D {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if d <= 0.0 || !d.is_finite() {
                    return Err(AgentError::Internal(format!(
                        "design matrix lost positive definiteness (pivot {i} = {d})"
                    )));
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Ok(l)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinUcbAgent {
    alpha: f64,
    arms: Vec<ArmStats>,
}

impl LinUcbAgent {
    pub fn new(alpha: f64) -> Result<Self, AgentError> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(AgentError::Config(format!(
                "linucb alpha must be finite and >= 0, got {alpha}"
            )));
        }
        Ok(Self {
            alpha,
            arms: vec![ArmStats::fresh(); Action::COUNT],
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn arm(&self, a: Action) -> &ArmStats {
        &self.arms[a.index()]
    }

    /// Upper confidence score of every arm, in action order.
    pub fn scores(&self, s: &AgentState) -> Result<[f64; Action::COUNT], AgentError> {
        let x = feature_vector(s);
        let mut out = [0.0; Action::COUNT];
        for (slot, arm) in out.iter_mut().zip(&self.arms) {
            *slot = arm.score(&x, self.alpha)?;
        }
        Ok(out)
    }

    pub(super) fn validate(&self) -> Result<(), AgentError> {
        if self.arms.len() != Action::COUNT {
            return Err(AgentError::MalformedSnapshot(format!(
                "expected {} arms, found {}",
                Action::COUNT,
                self.arms.len()
            )));
        }
        let finite = self.arms.iter().all(|arm| {
            arm.b.iter().all(|v| v.is_finite()) && arm.a.iter().flatten().all(|v| v.is_finite())
        });
        if !finite || !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(AgentError::MalformedSnapshot(
                "non-finite linucb parameters".into(),
            ));
        }
        Ok(())
    }
}

impl Agent for LinUcbAgent {
    fn select(&mut self, s: &AgentState) -> Result<Action, AgentError> {
        let scores = self.scores(s)?;
        let mut best = 0;
        for (i, &p) in scores.iter().enumerate().skip(1) {
            if p > scores[best] {
                best = i;
            }
        }
        Ok(Action::ALL[best])
    }

    fn update(&mut self, s: &AgentState, a: Action, reward: i32, _next: Option<&AgentState>) {
        self.arms[a.index()].add(&feature_vector(s), reward as f64);
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot::Linucb(self.clone())
    }
}
