//! Observation and action layouts.
//!
//! An agent's observation is its environment block followed by one
//! communication slot per in-edge, ordered by sender. Its action is a 5-way
//! movement one-hot, an optional continuous decode block, then one message
//! block per outgoing block. Joint vectors concatenate agents in index order.

use crate::error::{Error, Result};
use crate::nn::Mat;
use crate::replay::graph::CommGraph;

/// Movement choices: no-op, +x, −x, +y, −y.
pub const MOVE_DIM: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub edge: usize,
    pub sender: usize,
    /// Offset within the agent's observation.
    pub offset: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentLayout {
    pub env_obs_dim: usize,
    pub slots: Vec<Slot>,
    pub mobile: bool,
    pub decode_dim: usize,
    pub message_dims: Vec<usize>,
}

impl AgentLayout {
    pub fn comm_obs_dim(&self) -> usize {
        self.slots.iter().map(|s| s.dim).sum()
    }

    pub fn obs_dim(&self) -> usize {
        self.env_obs_dim + self.comm_obs_dim()
    }

    pub fn env_act_dim(&self) -> usize {
        MOVE_DIM + self.decode_dim
    }

    pub fn comm_act_dim(&self) -> usize {
        self.message_dims.iter().sum()
    }

    pub fn act_dim(&self) -> usize {
        self.env_act_dim() + self.comm_act_dim()
    }

    /// Offset of message block `b` within the agent's action.
    pub fn message_offset(&self, b: usize) -> usize {
        self.env_act_dim() + self.message_dims[..b].iter().sum::<usize>()
    }

    /// Width of the policy head: movement logits only when mobile.
    pub fn policy_out_dim(&self) -> usize {
        (if self.mobile { MOVE_DIM } else { 0 }) + self.decode_dim + self.comm_act_dim()
    }

    /// Offsets of the decode and message blocks within the policy head.
    pub fn policy_decode_offset(&self) -> usize {
        if self.mobile {
            MOVE_DIM
        } else {
            0
        }
    }

    pub fn policy_message_offset(&self, b: usize) -> usize {
        self.policy_decode_offset() + self.decode_dim + self.message_dims[..b].iter().sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub agents: Vec<AgentLayout>,
    pub obs_offsets: Vec<usize>,
    pub act_offsets: Vec<usize>,
    pub joint_obs_dim: usize,
    pub joint_act_dim: usize,
    /// Per edge: (column of the receiver slot in the joint observation,
    /// column of the sender block in the joint action, width).
    pub edge_columns: Vec<(usize, usize, usize)>,
}

/// Per-agent description used to build a [`Layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct AgentShape {
    pub env_obs_dim: usize,
    pub mobile: bool,
    pub decode_dim: usize,
    pub message_dims: Vec<usize>,
}

impl Layout {
    pub fn new(shapes: &[AgentShape], graph: &CommGraph) -> Result<Self> {
        if shapes.len() != graph.n_agents() {
            return Err(Error::InvalidScenario(format!(
                "{} agent shapes for a {}-agent graph",
                shapes.len(),
                graph.n_agents()
            )));
        }
        for (i, e) in graph.edges().iter().enumerate() {
            let dims = &shapes[e.sender].message_dims;
            if e.block >= dims.len() || dims[e.block] != e.dim {
                return Err(Error::InvalidScenario(format!(
                    "edge {i} ({e:?}) does not match agent {} message blocks {dims:?}",
                    e.sender
                )));
            }
        }
        for (a, s) in shapes.iter().enumerate() {
            for b in 0..s.message_dims.len() {
                if !graph.out_edges(a).any(|(_, e)| e.block == b) {
                    return Err(Error::InvalidScenario(format!(
                        "message block {b} of agent {a} has no receiver"
                    )));
                }
            }
        }
        let agents: Vec<AgentLayout> = shapes
            .iter()
            .enumerate()
            .map(|(a, s)| {
                let mut offset = s.env_obs_dim;
                let slots = graph
                    .in_edges(a)
                    .map(|(edge, e)| {
                        let slot = Slot {
                            edge,
                            sender: e.sender,
                            offset,
                            dim: e.dim,
                        };
                        offset += e.dim;
                        slot
                    })
                    .collect();
                AgentLayout {
                    env_obs_dim: s.env_obs_dim,
                    slots,
                    mobile: s.mobile,
                    decode_dim: s.decode_dim,
                    message_dims: s.message_dims.clone(),
                }
            })
            .collect();
        let mut obs_offsets = Vec::new();
        let mut act_offsets = Vec::new();
        let (mut o, mut a) = (0, 0);
        for ag in &agents {
            obs_offsets.push(o);
            act_offsets.push(a);
            o += ag.obs_dim();
            a += ag.act_dim();
        }
        let edge_columns = graph
            .edges()
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let slot = agents[e.receiver]
                    .slots
                    .iter()
                    .find(|s| s.edge == i)
                    .expect("every edge has a slot");
                (
                    obs_offsets[e.receiver] + slot.offset,
                    act_offsets[e.sender] + agents[e.sender].message_offset(e.block),
                    e.dim,
                )
            })
            .collect();
        Ok(Self {
            agents,
            obs_offsets,
            act_offsets,
            joint_obs_dim: o,
            joint_act_dim: a,
            edge_columns,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agent_obs(&self, joint: &Mat, agent: usize) -> Mat {
        joint.columns(self.obs_offsets[agent], self.agents[agent].obs_dim())
    }

    pub fn agent_act(&self, joint: &Mat, agent: usize) -> Mat {
        joint.columns(self.act_offsets[agent], self.agents[agent].act_dim())
    }

    /// Joint-action columns `(start, width)` of agent `i`'s message blocks.
    pub fn message_columns(&self, agent: usize) -> Vec<(usize, usize)> {
        let ag = &self.agents[agent];
        (0..ag.message_dims.len())
            .map(|b| (self.act_offsets[agent] + ag.message_offset(b), ag.message_dims[b]))
            .collect()
    }

    /// Width of the joint message vector (all agents' blocks in order).
    pub fn joint_message_dim(&self) -> usize {
        self.agents.iter().map(AgentLayout::comm_act_dim).sum()
    }

    /// Concatenated message blocks of all agents, taken from joint actions.
    pub fn joint_messages(&self, actions: &Mat) -> Mat {
        let parts: Vec<Mat> = (0..self.n_agents())
            .filter(|&a| self.agents[a].comm_act_dim() > 0)
            .map(|a| {
                let start = self.act_offsets[a] + self.agents[a].env_act_dim();
                actions.columns(start, self.agents[a].comm_act_dim())
            })
            .collect();
        let refs: Vec<&Mat> = parts.iter().collect();
        if refs.is_empty() {
            return Mat::zeros(actions.rows, 0);
        }
        Mat::hcat(&refs)
    }
}
