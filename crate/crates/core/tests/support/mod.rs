//! Random communication graphs, data generation and a brute-force forward
//! replay oracle shared by the relabelling tests.
#![allow(dead_code)]

pub mod checks;
pub mod numeric;

use commrelabel::layout::{AgentShape, Layout};
use commrelabel::nn::gumbel::{argmax, one_hot};
use commrelabel::nn::{Activation, Mat, MlpParams};
use commrelabel::replay::{CommGraph, Edge, ExperienceRecord, MessagePolicy, ReplayBuffer};
use commrelabel::{Result, RngStream};

pub const EPISODE_LEN: usize = 25;

/// Random DAG over `2..=5` agents, agents ordered topologically by index.
/// Every sender owns one or two blocks, each broadcast to at least one
/// later agent.
pub fn random_graph(rng: &mut RngStream) -> (CommGraph, Layout) {
    loop {
        let n = 2 + rng.index(4);
        let mut edges = Vec::new();
        let mut shapes = Vec::new();
        for a in 0..n {
            let mut dims = Vec::new();
            if a + 1 < n && rng.bernoulli(0.8) {
                let blocks = 1 + rng.index(2);
                for b in 0..blocks {
                    let dim = 2 + rng.index(3);
                    dims.push(dim);
                    let mut any = false;
                    for r in a + 1..n {
                        if rng.bernoulli(0.5) {
                            edges.push(Edge { sender: a, block: b, receiver: r, dim });
                            any = true;
                        }
                    }
                    if !any {
                        let r = a + 1 + rng.index(n - a - 1);
                        edges.push(Edge { sender: a, block: b, receiver: r, dim });
                    }
                }
            }
            shapes.push(AgentShape {
                env_obs_dim: 1 + rng.index(3),
                mobile: rng.bernoulli(0.5),
                decode_dim: 0,
                message_dims: dims,
            });
        }
        if edges.is_empty() {
            continue;
        }
        let graph = CommGraph::new(n, edges).expect("index-ordered edges form a DAG");
        let layout = Layout::new(&shapes, &graph).expect("shapes match edges");
        return (graph, layout);
    }
}

/// Deterministic message policies: one random MLP per sender mapping the
/// agent's observation to message logits.
pub struct RandomPolicies {
    pub nets: Vec<Option<MlpParams>>,
}

impl RandomPolicies {
    pub fn new(layout: &Layout, rng: &mut RngStream) -> Self {
        let nets = layout
            .agents
            .iter()
            .map(|a| {
                (a.comm_act_dim() > 0).then(|| {
                    MlpParams::init(&[a.obs_dim(), 8, a.comm_act_dim()], Activation::Tanh, rng)
                        .expect("valid sizes")
                })
            })
            .collect();
        Self { nets }
    }
}

impl MessagePolicy for RandomPolicies {
    fn message_logits(&self, agent: usize, obs: &Mat) -> Result<Mat> {
        self.nets[agent]
            .as_ref()
            .expect("only senders are queried")
            .forward(obs)
    }
}

/// Greedy per-block messages of every agent for one joint observation.
pub fn greedy_messages(layout: &Layout, policy: &dyn MessagePolicy, joint_obs: &[f64]) -> Vec<Vec<f64>> {
    (0..layout.n_agents())
        .map(|a| {
            let al = &layout.agents[a];
            if al.comm_act_dim() == 0 {
                return Vec::new();
            }
            let o = layout.obs_offsets[a];
            let x = Mat::row_vector(joint_obs[o..o + al.obs_dim()].to_vec());
            let logits = policy.message_logits(a, &x).unwrap();
            let mut out = Vec::new();
            let mut start = 0;
            for &d in &al.message_dims {
                out.extend(one_hot(d, argmax(&logits.data[start..start + d])));
                start += d;
            }
            out
        })
        .collect()
}

fn random_one_hots(layout: &Layout, rng: &mut RngStream) -> Vec<Vec<f64>> {
    layout
        .agents
        .iter()
        .map(|al| {
            al.message_dims
                .iter()
                .flat_map(|&d| one_hot(d, rng.index(d)))
                .collect()
        })
        .collect()
}

/// Joint observation from per-agent environment parts and delivered
/// messages (identity channel).
pub fn assemble_obs(layout: &Layout, graph: &CommGraph, env: &[Vec<f64>], messages: Option<&[Vec<f64>]>) -> Vec<f64> {
    let mut joint = vec![0.0; layout.joint_obs_dim];
    for (a, e) in env.iter().enumerate() {
        let o = layout.obs_offsets[a];
        joint[o..o + e.len()].copy_from_slice(e);
    }
    if let Some(m) = messages {
        for (i, edge) in graph.edges().iter().enumerate() {
            let (col, _, dim) = layout.edge_columns[i];
            let al = &layout.agents[edge.sender];
            let start = al.message_offset(edge.block) - al.env_act_dim();
            joint[col..col + dim].copy_from_slice(&m[edge.sender][start..start + dim]);
        }
    }
    joint
}

/// Stored episode data: per step the environment parts and messages.
pub struct Episode {
    pub env: Vec<Vec<Vec<f64>>>,
    pub env_actions: Vec<Vec<Vec<f64>>>,
    pub messages: Vec<Vec<Vec<f64>>>,
}

/// How stored messages were produced.
pub enum Behaviour<'a> {
    Random,
    Policy(&'a dyn MessagePolicy),
}

/// Fills a buffer with `episodes` episodes of random environment data.
pub fn generate(
    layout: &Layout,
    graph: &CommGraph,
    behaviour: Behaviour<'_>,
    episodes: usize,
    rng: &mut RngStream,
) -> (ReplayBuffer, Vec<Episode>) {
    let mut buffer = ReplayBuffer::new(layout.clone(), 1_000_000).unwrap();
    let mut all = Vec::new();
    for ep in 0..episodes {
        let env: Vec<Vec<Vec<f64>>> = (0..=EPISODE_LEN)
            .map(|_| {
                layout
                    .agents
                    .iter()
                    .map(|a| (0..a.env_obs_dim).map(|_| rng.uniform_range(-1.0, 1.0)).collect())
                    .collect()
            })
            .collect();
        let env_actions: Vec<Vec<Vec<f64>>> = (0..EPISODE_LEN)
            .map(|_| layout.agents.iter().map(|a| one_hot(a.env_act_dim(), rng.index(5))).collect())
            .collect();
        let mut messages = Vec::new();
        let mut obs = assemble_obs(layout, graph, &env[0], None);
        for t in 0..EPISODE_LEN {
            let m = match &behaviour {
                Behaviour::Random => random_one_hots(layout, rng),
                Behaviour::Policy(p) => greedy_messages(layout, *p, &obs),
            };
            let next = assemble_obs(layout, graph, &env[t + 1], Some(&m));
            let actions: Vec<f64> = (0..layout.n_agents())
                .flat_map(|a| env_actions[t][a].iter().chain(&m[a]).copied().collect::<Vec<_>>())
                .collect();
            let rewards: Vec<f64> = (0..layout.n_agents()).map(|_| rng.normal()).collect();
            let rec = ExperienceRecord::from_joint(
                layout,
                ep as u64,
                t,
                &obs,
                &actions,
                &rewards,
                &next,
                t + 1 == EPISODE_LEN,
                t as f64 / 100.0,
            )
            .unwrap();
            buffer.push(&rec).unwrap();
            messages.push(m);
            obs = next;
        }
        all.push(Episode {
            env,
            env_actions,
            messages,
        });
    }
    (buffer, all)
}

/// Forward replay of `policy` from the start of an episode: joint
/// observations `o_0 … o_25` and messages `m_0 … m_24`.
pub fn forward_replay(
    layout: &Layout,
    graph: &CommGraph,
    policy: &dyn MessagePolicy,
    episode: &Episode,
) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let mut obs = vec![assemble_obs(layout, graph, &episode.env[0], None)];
    let mut msgs = Vec::new();
    for t in 0..EPISODE_LEN {
        let m = greedy_messages(layout, policy, &obs[t]);
        obs.push(assemble_obs(layout, graph, &episode.env[t + 1], Some(&m)));
        msgs.push(m);
    }
    (obs, msgs)
}
