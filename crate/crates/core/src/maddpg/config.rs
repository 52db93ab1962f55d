//! Training hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::replay::relabel::{CorrectionMode, MessageSampling};

/// Training setup. Unknown keys are rejected when parsed from TOML.
///
/// ```toml
/// lr = 0.001
/// tau = 0.01
/// gamma = 0.75
/// batch_size = 1024
/// update_every = 100
/// buffer_capacity = 10000000
/// gumbel_beta = 1.0
/// correction = "occ"          # none | fcc | occ
/// # agent_corrections = ["occ", "occ", "none"]
/// # correction_depth = 3      # defaults to nilpotency − 1
/// fingerprint = false
/// episodes = 10000
/// seed = 0
/// hidden = [64, 64]
/// grad_clip = 0.5             # per-network gradient norm bound
/// policy_reg = 0.001
/// relabel_greedy = false
/// skip_unreachable = true
/// # warmup_steps = 1024       # defaults to batch_size
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub tau: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub update_every: usize,
    pub buffer_capacity: usize,
    pub gumbel_beta: f64,
    pub correction: CorrectionMode,
    /// Per-agent override of `correction`.
    pub agent_corrections: Option<Vec<CorrectionMode>>,
    pub correction_depth: Option<usize>,
    pub fingerprint: bool,
    pub episodes: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub grad_clip: Option<f64>,
    /// Weight of the mean squared policy logits added to the actor loss.
    pub policy_reg: f64,
    /// Relabel with argmax messages instead of Gumbel samples.
    pub relabel_greedy: bool,
    pub skip_unreachable: bool,
    pub warmup_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            tau: 0.01,
            gamma: 0.75,
            batch_size: 1024,
            update_every: 100,
            buffer_capacity: crate::replay::DEFAULT_CAPACITY,
            gumbel_beta: 1.0,
            correction: CorrectionMode::None,
            agent_corrections: None,
            correction_depth: None,
            fingerprint: false,
            episodes: 10_000,
            seed: 0,
            hidden: vec![64, 64],
            grad_clip: Some(0.5),
            policy_reg: 1e-3,
            relabel_greedy: false,
            skip_unreachable: true,
            warmup_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n_agents: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if self.batch_size == 0 || self.update_every == 0 || self.buffer_capacity == 0 {
            return bad("batch_size, update_every and buffer_capacity must be positive".into());
        }
        if !(self.gumbel_beta > 0.0 && self.gumbel_beta.is_finite()) {
            return bad(format!("gumbel_beta must be positive, got {}", self.gumbel_beta));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!("hidden sizes must be positive, got {:?}", self.hidden));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return bad(format!("grad_clip must be positive, got {c}"));
            }
        }
        if !(self.policy_reg >= 0.0) {
            return bad(format!("policy_reg must be non-negative, got {}", self.policy_reg));
        }
        if let Some(m) = &self.agent_corrections {
            if m.len() != n_agents {
                return bad(format!(
                    "agent_corrections lists {} modes for {n_agents} agents",
                    m.len()
                ));
            }
        }
        Ok(())
    }

    pub fn modes(&self, n_agents: usize) -> Vec<CorrectionMode> {
        self.agent_corrections
            .clone()
            .unwrap_or_else(|| vec![self.correction; n_agents])
    }

    pub fn relabel_sampling(&self) -> MessageSampling {
        if self.relabel_greedy {
            MessageSampling::Greedy
        } else {
            MessageSampling::Gumbel {
                beta: self.gumbel_beta,
            }
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("train config serializes")
    }
}

/// Data-age scalar appended to critic inputs.
pub fn fingerprint_value(iteration: u64) -> f64 {
    iteration as f64 / 100_000.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_scale() {
        assert_eq!(fingerprint_value(0), 0.0);
        assert_eq!(fingerprint_value(100_000), 1.0);
        assert_eq!(fingerprint_value(1_000_000), 10.0);
    }

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let c = TrainConfig::default();
        c.validate(2).unwrap();
        assert_eq!(TrainConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = TrainConfig::from_toml("lr = 0.01\nlearning_rate = 3").unwrap_err();
        assert!(err.to_string().contains("learning_rate"));
    }

    #[test]
    fn gamma_one_rejected() {
        let c = TrainConfig {
            gamma: 1.0,
            ..TrainConfig::default()
        };
        assert!(c.validate(2).is_err());
    }
}
