//! Episodic replay with communication correction.

pub mod buffer;
pub mod graph;
pub mod relabel;

pub use buffer::{AgentTransition, ExperienceRecord, MinibatchWindow, ReplayBuffer, DEFAULT_CAPACITY};
pub use graph::{nilpotency_index, CommGraph, Edge};
pub use relabel::{
    per_agent_restore, write_message_pairs, CorrectionMode, MessagePolicy, MessageSampling, Relabelled,
    Relabeller, TransitionBatch,
};
