//! Two-dimensional particle world with explicit message channels.

pub mod channel;
pub mod scenario;
pub mod world;

pub use channel::ChannelModel;
pub use scenario::{PhysicsConfig, Role, Scenario, ScenarioConfig, ScenarioKind, EPISODE_LEN};
pub use world::{observe, physics_step, reset, reward, step, AgentAction, StepOutcome, WorldState};
