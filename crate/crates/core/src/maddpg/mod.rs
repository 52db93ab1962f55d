//! Centralized critics, decentralized policies.

pub mod agent;
pub mod config;
pub mod trainer;

pub use agent::{act, act_batch, critic_target, update_critic, update_policy, ActMode, AgentNets, CurrentPolicies};
pub use config::{fingerprint_value, TrainConfig};
pub use trainer::{evaluate, play_episode, team_returns, EpisodeMetrics, EvalSummary, Trainer};
