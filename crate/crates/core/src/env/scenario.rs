//! Scenario definitions: agent roster, communication topology, layouts and
//! reward bookkeeping for the four speaker/listener tasks.

use serde::{Deserialize, Serialize};

use super::channel::ChannelModel;
use crate::error::{Error, Result};
use crate::layout::{AgentShape, Layout};
use crate::replay::graph::{CommGraph, Edge};

pub const EPISODE_LEN: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    CoopComm,
    HierarchicalComm,
    CovertComm,
    MultiTargetComm,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::CoopComm => "coop_comm",
            ScenarioKind::HierarchicalComm => "hierarchical_comm",
            ScenarioKind::CovertComm => "covert_comm",
            ScenarioKind::MultiTargetComm => "multi_target_comm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Speaker,
    Listener,
    Adversary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    pub dt: f64,
    /// Fraction of velocity retained per step.
    pub damping: f64,
    pub force_scale: f64,
    pub max_speed: Option<f64>,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            damping: 0.75,
            force_scale: 5.0,
            max_speed: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsOverrides {
    pub dt: Option<f64>,
    pub damping: Option<f64>,
    pub force_scale: Option<f64>,
    pub max_speed: Option<f64>,
}

/// Structured-text scenario definition.
///
/// ```toml
/// name = "coop_comm"          # coop_comm | hierarchical_comm | covert_comm | multi_target_comm
/// n_landmarks = 5             # coop_comm / multi_target_comm (hierarchical_comm requires 4)
/// drop_p = 0.25               # dropout channel; mutually exclusive with gaussian_sigma
/// message_dims = [5]          # one entry per message block, in agent order
/// msg_dim = 4                 # covert_comm: secret width
/// key_dim = 4                 # covert_comm: key width
/// n_choices = 2               # covert_comm: number of distinct secrets / keys
/// with_key = true             # covert_comm: allies observe the key
/// [physics]
/// dt = 0.1
/// damping = 0.75
/// force_scale = 5.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: ScenarioKind,
    #[serde(default)]
    pub n_landmarks: Option<usize>,
    #[serde(default)]
    pub drop_p: Option<f64>,
    #[serde(default)]
    pub gaussian_sigma: Option<f64>,
    #[serde(default)]
    pub message_dims: Option<Vec<usize>>,
    #[serde(default)]
    pub msg_dim: Option<usize>,
    #[serde(default)]
    pub key_dim: Option<usize>,
    #[serde(default)]
    pub n_choices: Option<usize>,
    #[serde(default)]
    pub with_key: Option<bool>,
    #[serde(default)]
    pub physics: PhysicsOverrides,
}

impl ScenarioConfig {
    pub fn new(name: ScenarioKind) -> Self {
        Self {
            name,
            n_landmarks: None,
            drop_p: None,
            gaussian_sigma: None,
            message_dims: None,
            msg_dim: None,
            key_dim: None,
            n_choices: None,
            with_key: None,
            physics: PhysicsOverrides::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CovertSpec {
    pub msg_dim: usize,
    pub key_dim: usize,
    pub n_choices: usize,
    pub with_key: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub kind: ScenarioKind,
    pub roles: Vec<Role>,
    pub n_landmarks: usize,
    pub graph: CommGraph,
    pub layout: Layout,
    pub channel: ChannelModel,
    pub physics: PhysicsConfig,
    pub episode_len: usize,
    pub covert: Option<CovertSpec>,
}

fn dims_or(config: &ScenarioConfig, defaults: Vec<usize>) -> Result<Vec<usize>> {
    match &config.message_dims {
        None => Ok(defaults),
        Some(d) if d.len() == defaults.len() && d.iter().all(|&x| x > 0) => Ok(d.clone()),
        Some(d) => Err(Error::InvalidScenario(format!(
            "{} expects {} positive message dims, got {d:?}",
            config.name.name(),
            defaults.len()
        ))),
    }
}

fn edge(sender: usize, block: usize, receiver: usize, dim: usize) -> Edge {
    Edge {
        sender,
        block,
        receiver,
        dim,
    }
}

fn shape(env_obs_dim: usize, mobile: bool, decode_dim: usize, message_dims: Vec<usize>) -> AgentShape {
    AgentShape {
        env_obs_dim,
        mobile,
        decode_dim,
        message_dims,
    }
}

impl Scenario {
    /// Speaker → listener with `n_landmarks` colours.
    pub fn coop_comm(n_landmarks: usize, drop_p: f64) -> Result<Self> {
        let mut c = ScenarioConfig::new(ScenarioKind::CoopComm);
        c.n_landmarks = Some(n_landmarks);
        c.drop_p = Some(drop_p);
        Self::from_config(&c)
    }

    /// Three immobile speakers in a chain guiding one listener.
    pub fn hierarchical_comm() -> Result<Self> {
        Self::from_config(&ScenarioConfig::new(ScenarioKind::HierarchicalComm))
    }

    pub fn covert_comm(msg_dim: usize, key_dim: usize) -> Result<Self> {
        let mut c = ScenarioConfig::new(ScenarioKind::CovertComm);
        c.msg_dim = Some(msg_dim);
        c.key_dim = Some(key_dim);
        Self::from_config(&c)
    }

    pub fn multi_target_comm(n_landmarks: usize) -> Result<Self> {
        let mut c = ScenarioConfig::new(ScenarioKind::MultiTargetComm);
        c.n_landmarks = Some(n_landmarks);
        Self::from_config(&c)
    }

    pub fn from_config(config: &ScenarioConfig) -> Result<Self> {
        let channel = match (config.drop_p, config.gaussian_sigma) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidScenario(
                    "drop_p and gaussian_sigma are mutually exclusive".into(),
                ))
            }
            (Some(p), None) if p > 0.0 => ChannelModel::Dropout { p },
            (_, Some(sigma)) => ChannelModel::Gaussian { sigma },
            _ => ChannelModel::Identity,
        };
        channel.validate()?;

        let mut physics = PhysicsConfig::default();
        let o = &config.physics;
        physics.dt = o.dt.unwrap_or(physics.dt);
        physics.damping = o.damping.unwrap_or(physics.damping);
        physics.force_scale = o.force_scale.unwrap_or(physics.force_scale);
        physics.max_speed = o.max_speed.or(physics.max_speed);
        if !(physics.dt > 0.0) || !(physics.damping > 0.0 && physics.damping <= 1.0) {
            return Err(Error::InvalidScenario(format!("invalid physics {physics:?}")));
        }

        let covert_fields = config.msg_dim.is_some()
            || config.key_dim.is_some()
            || config.n_choices.is_some()
            || config.with_key.is_some();
        if covert_fields && config.name != ScenarioKind::CovertComm {
            return Err(Error::InvalidScenario(
                "msg_dim/key_dim/n_choices/with_key only apply to covert_comm".into(),
            ));
        }

        let mut covert = None;
        let (roles, n_landmarks, shapes, edges) = match config.name {
            ScenarioKind::CoopComm => {
                let n = config.n_landmarks.unwrap_or(5);
                if n < 2 {
                    return Err(Error::InvalidScenario("coop_comm needs ≥ 2 landmarks".into()));
                }
                let d = dims_or(config, vec![n])?;
                (
                    vec![Role::Speaker, Role::Listener],
                    n,
                    vec![shape(n, false, 0, vec![d[0]]), shape(2 + 2 * n, true, 0, vec![])],
                    vec![edge(0, 0, 1, d[0])],
                )
            }
            ScenarioKind::HierarchicalComm => {
                let n = config.n_landmarks.unwrap_or(4);
                if n != 4 {
                    return Err(Error::InvalidScenario(
                        "hierarchical_comm uses exactly 4 landmarks".into(),
                    ));
                }
                let d = dims_or(config, vec![4, 6, 4])?;
                (
                    vec![Role::Speaker, Role::Speaker, Role::Speaker, Role::Listener],
                    n,
                    vec![
                        shape(n, false, 0, vec![d[0]]),
                        shape(n, false, 0, vec![d[1]]),
                        shape(n, false, 0, vec![d[2]]),
                        shape(2 + 2 * n, true, 0, vec![]),
                    ],
                    vec![edge(0, 0, 1, d[0]), edge(1, 0, 2, d[1]), edge(2, 0, 3, d[2])],
                )
            }
            ScenarioKind::CovertComm => {
                if config.n_landmarks.is_some() {
                    return Err(Error::InvalidScenario("covert_comm has no landmarks".into()));
                }
                let spec = CovertSpec {
                    msg_dim: config.msg_dim.unwrap_or(4),
                    key_dim: config.key_dim.unwrap_or(4),
                    n_choices: config.n_choices.unwrap_or(2),
                    with_key: config.with_key.unwrap_or(true),
                };
                if spec.msg_dim == 0
                    || spec.key_dim == 0
                    || spec.n_choices < 2
                    || spec.n_choices > spec.msg_dim.min(spec.key_dim)
                {
                    return Err(Error::InvalidScenario(format!("invalid covert dims {spec:?}")));
                }
                covert = Some(spec);
                let d = dims_or(config, vec![spec.msg_dim])?;
                let key = if spec.with_key { spec.key_dim } else { 0 };
                (
                    vec![Role::Speaker, Role::Listener, Role::Adversary],
                    0,
                    vec![
                        shape(spec.msg_dim + key, false, 0, vec![d[0]]),
                        shape(key, false, spec.msg_dim, vec![]),
                        shape(0, false, spec.msg_dim, vec![]),
                    ],
                    vec![edge(0, 0, 1, d[0]), edge(0, 0, 2, d[0])],
                )
            }
            ScenarioKind::MultiTargetComm => {
                let n = config.n_landmarks.unwrap_or(5);
                if n < 2 {
                    return Err(Error::InvalidScenario(
                        "multi_target_comm needs ≥ 2 landmarks".into(),
                    ));
                }
                let d = dims_or(config, vec![n, n])?;
                let nav = 2 + 2 * n;
                (
                    vec![Role::Speaker, Role::Listener, Role::Listener],
                    n,
                    vec![
                        shape(nav + 3 * n, true, 0, vec![d[0], d[1]]),
                        shape(nav, true, 0, vec![]),
                        shape(nav, true, 0, vec![]),
                    ],
                    vec![edge(0, 0, 1, d[0]), edge(0, 1, 2, d[1])],
                )
            }
        };
        let graph = CommGraph::new(roles.len(), edges)?;
        let layout = Layout::new(&shapes, &graph)?;
        Ok(Self {
            config: config.clone(),
            kind: config.name,
            roles,
            n_landmarks,
            graph,
            layout,
            channel,
            physics,
            episode_len: EPISODE_LEN,
            covert,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.roles.len()
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn mobile(&self, agent: usize) -> bool {
        self.layout.agents[agent].mobile
    }

    /// Same scenario with a different message channel.
    pub fn with_channel(&self, channel: ChannelModel) -> Result<Self> {
        channel.validate()?;
        let mut s = self.clone();
        s.channel = channel;
        match channel {
            ChannelModel::Identity => {
                s.config.drop_p = None;
                s.config.gaussian_sigma = None;
            }
            ChannelModel::Dropout { p } => {
                s.config.drop_p = Some(p);
                s.config.gaussian_sigma = None;
            }
            ChannelModel::Gaussian { sigma } => {
                s.config.drop_p = None;
                s.config.gaussian_sigma = Some(sigma);
            }
        }
        Ok(s)
    }

    /// Named teams and their members. Cooperative tasks have one team.
    pub fn teams(&self) -> Vec<(&'static str, Vec<usize>)> {
        match self.kind {
            ScenarioKind::CovertComm => vec![("allies", vec![0, 1]), ("adversary", vec![2])],
            _ => vec![("team", (0..self.n_agents()).collect())],
        }
    }

    /// Converts an agent's summed episode reward to the reporting scale:
    /// per-episode sums for the navigation tasks, per-step averages for
    /// covert communication, and per-episode sums divided by the number of
    /// agents for multiple targets.
    pub fn report_return(&self, episode_sum: f64) -> f64 {
        match self.kind {
            ScenarioKind::CoopComm | ScenarioKind::HierarchicalComm => episode_sum,
            ScenarioKind::CovertComm => episode_sum / self.episode_len as f64,
            ScenarioKind::MultiTargetComm => episode_sum / self.n_agents() as f64,
        }
    }

    pub fn reporting_unit(&self) -> &'static str {
        match self.kind {
            ScenarioKind::CoopComm | ScenarioKind::HierarchicalComm => "reward per episode",
            ScenarioKind::CovertComm => "reward per step",
            ScenarioKind::MultiTargetComm => "reward per episode / 3",
        }
    }
}
