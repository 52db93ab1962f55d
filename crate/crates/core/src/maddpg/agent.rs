//! Per-agent networks and the actor-critic updates.

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::layout::{AgentLayout, Layout, MOVE_DIM};
use crate::nn::gumbel::{gumbel_softmax_rows, one_hot_rows};
use crate::nn::{Activation, AdamConfig, AdamState, Gradients, Mat, MlpParams, NodeId, Tape};
use crate::replay::relabel::{MessagePolicy, TransitionBatch};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActMode {
    /// Gumbel-Softmax samples on every discrete block.
    Explore { beta: f64 },
    /// Argmax on every discrete block.
    Greedy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentNets {
    pub policy: MlpParams,
    pub critic: MlpParams,
    pub target_policy: MlpParams,
    pub target_critic: MlpParams,
    pub policy_opt: AdamState,
    pub critic_opt: AdamState,
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

/// Width of the critic input for a layout.
pub fn critic_input_dim(layout: &Layout, fingerprint: bool) -> usize {
    layout.joint_obs_dim + layout.joint_act_dim + fingerprint as usize
}

impl AgentNets {
    pub fn new(
        layout: &Layout,
        agent: usize,
        hidden: &[usize],
        fingerprint: bool,
        adam: AdamConfig,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let al = &layout.agents[agent];
        if al.policy_out_dim() == 0 {
            return Err(Error::InvalidScenario(format!("agent {agent} has no action outputs")));
        }
        let policy = MlpParams::init(
            &sizes(al.obs_dim().max(1), hidden, al.policy_out_dim()),
            Activation::Relu,
            rng,
        )?;
        let critic = MlpParams::init(
            &sizes(critic_input_dim(layout, fingerprint), hidden, 1),
            Activation::Relu,
            rng,
        )?;
        Ok(Self {
            policy_opt: AdamState::new(&policy, adam),
            critic_opt: AdamState::new(&critic, adam),
            target_policy: policy.clone(),
            target_critic: critic.clone(),
            policy,
            critic,
        })
    }

    pub fn update_targets(&mut self, tau: f64) -> Result<()> {
        self.target_policy.soft_update(&self.policy, tau)?;
        self.target_critic.soft_update(&self.critic, tau)
    }
}

/// Policy input for an agent. Agents with an empty observation read a
/// constant zero so that their policy reduces to a learned bias.
pub fn policy_input(layout: &Layout, joint_obs: &Mat, agent: usize) -> Mat {
    if layout.agents[agent].obs_dim() == 0 {
        Mat::zeros(joint_obs.rows, 1)
    } else {
        layout.agent_obs(joint_obs, agent)
    }
}

fn sample_block(logits: &Mat, mode: ActMode, rng: &mut RngStream) -> Result<Mat> {
    match mode {
        ActMode::Greedy => Ok(one_hot_rows(logits)),
        ActMode::Explore { beta } => Ok(gumbel_softmax_rows(logits, beta, rng)?.0),
    }
}

fn noop_rows(rows: usize) -> Mat {
    let mut m = Mat::zeros(rows, MOVE_DIM);
    (0..rows).for_each(|r| m.set(r, 0, 1.0));
    m
}

/// Maps policy-head outputs to the agent's action layout.
pub fn actions_from_logits(al: &AgentLayout, logits: &Mat, mode: ActMode, rng: &mut RngStream) -> Result<Mat> {
    if logits.cols != al.policy_out_dim() {
        return Err(Error::shape("policy head", al.policy_out_dim(), logits.cols));
    }
    let mut out = Mat::zeros(logits.rows, al.act_dim());
    if al.mobile {
        out.set_columns(0, &sample_block(&logits.columns(0, MOVE_DIM), mode, rng)?);
    } else {
        out.set_columns(0, &noop_rows(logits.rows));
    }
    if al.decode_dim > 0 {
        let d = logits
            .columns(al.policy_decode_offset(), al.decode_dim)
            .map(f64::tanh);
        out.set_columns(MOVE_DIM, &d);
    }
    for (b, &dim) in al.message_dims.iter().enumerate() {
        let block = logits.columns(al.policy_message_offset(b), dim);
        out.set_columns(al.message_offset(b), &sample_block(&block, mode, rng)?);
    }
    Ok(out)
}

/// Batched actions of one agent from its own observation rows.
pub fn act_batch(
    layout: &Layout,
    agent: usize,
    policy: &MlpParams,
    joint_obs: &Mat,
    mode: ActMode,
    rng: &mut RngStream,
) -> Result<Mat> {
    let logits = policy.forward(&policy_input(layout, joint_obs, agent))?;
    actions_from_logits(&layout.agents[agent], &logits, mode, rng)
}

/// Single-step action vector for an agent.
pub fn act(
    layout: &Layout,
    agent: usize,
    policy: &MlpParams,
    obs: &[f64],
    mode: ActMode,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let al = &layout.agents[agent];
    if obs.len() != al.obs_dim() {
        return Err(Error::shape(format!("observation of agent {agent}"), al.obs_dim(), obs.len()));
    }
    let x = if obs.is_empty() {
        Mat::zeros(1, 1)
    } else {
        Mat::row_vector(obs.to_vec())
    };
    let logits = policy.forward(&x)?;
    Ok(actions_from_logits(al, &logits, mode, rng)?.data)
}

/// Joint actions of all agents given joint observations.
pub fn joint_actions<'a>(
    layout: &Layout,
    policies: impl Fn(usize) -> &'a MlpParams,
    joint_obs: &Mat,
    mode: ActMode,
    rng: &mut RngStream,
) -> Result<Mat> {
    let mut out = Mat::zeros(joint_obs.rows, layout.joint_act_dim);
    for a in 0..layout.n_agents() {
        let acts = act_batch(layout, a, policies(a), joint_obs, mode, rng)?;
        out.set_columns(layout.act_offsets[a], &acts);
    }
    Ok(out)
}

/// `ô ⊕ â [⊕ fingerprint]`.
pub fn critic_input(obs: &Mat, actions: &Mat, fingerprint: Option<&[f64]>) -> Mat {
    match fingerprint {
        None => Mat::hcat(&[obs, actions]),
        Some(fp) => {
            let f = Mat {
                rows: fp.len(),
                cols: 1,
                data: fp.to_vec(),
            };
            Mat::hcat(&[obs, actions, &f])
        }
    }
}

fn check_batch(layout: &Layout, batch: &TransitionBatch) -> Result<()> {
    let b = batch.batch_size();
    let ok = batch.obs.shape() == (b, layout.joint_obs_dim)
        && batch.next_obs.shape() == (b, layout.joint_obs_dim)
        && batch.actions.shape() == (b, layout.joint_act_dim)
        && batch.rewards.shape() == (b, layout.n_agents())
        && batch.done.len() == b
        && batch.fingerprint.len() == b;
    if !ok {
        return Err(Error::shape("transition batch", "aligned joint columns", "misaligned batch"));
    }
    Ok(())
}

fn clip(grads: &mut Gradients, cfg: &TrainConfig) {
    if let Some(c) = cfg.grad_clip {
        grads.clip_global_norm(c);
    }
}

/// `y = r_i + γ (1 − done) Q'_i(ô', a')` with `a'` the greedy target-policy
/// actions on `ô'`.
pub fn critic_target(
    agents: &[AgentNets],
    layout: &Layout,
    agent: usize,
    batch: &TransitionBatch,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    check_batch(layout, batch)?;
    let mut unused = RngStream::new(0);
    let next_act = joint_actions(
        layout,
        |a| &agents[a].target_policy,
        &batch.next_obs,
        ActMode::Greedy,
        &mut unused,
    )?;
    let fp = cfg.fingerprint.then_some(batch.fingerprint.as_slice());
    let q = agents[agent]
        .target_critic
        .forward(&critic_input(&batch.next_obs, &next_act, fp))?;
    Ok((0..batch.batch_size())
        .map(|r| {
            let boot = if batch.done[r] { 0.0 } else { cfg.gamma * q.data[r] };
            batch.rewards.get(r, agent) + boot
        })
        .collect())
}

/// One Adam step on the mean squared TD error; returns the pre-step loss.
pub fn update_critic(
    agents: &mut [AgentNets],
    layout: &Layout,
    agent: usize,
    batch: &TransitionBatch,
    cfg: &TrainConfig,
) -> Result<f64> {
    let y = critic_target(agents, layout, agent, batch, cfg)?;
    let fp = cfg.fingerprint.then_some(batch.fingerprint.as_slice());
    let nets = &mut agents[agent];
    let mut tape = Tape::new();
    let x = tape.leaf(critic_input(&batch.obs, &batch.actions, fp));
    let (q, nodes) = nets.critic.forward_tape(&mut tape, x)?;
    let target = tape.leaf(Mat {
        rows: y.len(),
        cols: 1,
        data: y,
    });
    let diff = tape.sub(q, target)?;
    let sq = tape.square(diff);
    let loss = tape.mean(sq);
    let value = tape.value(loss).data[0];
    if !value.is_finite() {
        return Err(Error::NonFinite {
            context: format!("critic loss of agent {agent}"),
            layer: 0,
        });
    }
    tape.backward(loss)?;
    let mut grads = nodes.grads(&tape);
    clip(&mut grads, cfg);
    nets.critic_opt.update(&mut nets.critic, &grads)?;
    Ok(value)
}

/// Records the agent's action on the tape with straight-through gradients
/// for discrete blocks and tanh for decode blocks.
fn action_on_tape(
    tape: &mut Tape,
    al: &AgentLayout,
    logits: NodeId,
    beta: f64,
    rng: &mut RngStream,
) -> Result<NodeId> {
    let rows = tape.value(logits).rows;
    let mut parts = Vec::new();
    let st = |tape: &mut Tape, start: usize, width: usize, rng: &mut RngStream| -> Result<NodeId> {
        let block = tape.slice(logits, start, width)?;
        crate::nn::gumbel::straight_through_gumbel(tape, block, beta, rng)
    };
    if al.mobile {
        parts.push(st(tape, 0, MOVE_DIM, rng)?);
    } else {
        parts.push(tape.leaf(noop_rows(rows)));
    }
    if al.decode_dim > 0 {
        let d = tape.slice(logits, al.policy_decode_offset(), al.decode_dim)?;
        parts.push(tape.tanh(d));
    }
    for (b, &dim) in al.message_dims.iter().enumerate() {
        parts.push(st(tape, al.policy_message_offset(b), dim, rng)?);
    }
    tape.concat(&parts)
}

/// One Adam step ascending `Q_i` through agent `i`'s own action; the other
/// agents' actions are fresh Gumbel samples from their current policies,
/// held constant. Returns the pre-step mean `Q`.
pub fn update_policy(
    agents: &mut [AgentNets],
    layout: &Layout,
    agent: usize,
    batch: &TransitionBatch,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<f64> {
    check_batch(layout, batch)?;
    let mode = ActMode::Explore {
        beta: cfg.gumbel_beta,
    };
    let rows = batch.batch_size();
    let mut others = Vec::with_capacity(layout.n_agents());
    for a in 0..layout.n_agents() {
        others.push(if a == agent {
            None
        } else {
            Some(act_batch(layout, a, &agents[a].policy, &batch.obs, mode, rng)?)
        });
    }
    let nets = &mut agents[agent];
    let al = &layout.agents[agent];
    let mut tape = Tape::new();
    let x = tape.leaf(policy_input(layout, &batch.obs, agent));
    let (logits, pnodes) = nets.policy.forward_tape(&mut tape, x)?;
    let own = action_on_tape(&mut tape, al, logits, cfg.gumbel_beta, rng)?;

    let mut inputs = vec![tape.leaf(batch.obs.clone())];
    for acts in others {
        inputs.push(match acts {
            Some(m) => tape.leaf(m),
            None => own,
        });
    }
    if cfg.fingerprint {
        inputs.push(tape.leaf(Mat {
            rows,
            cols: 1,
            data: batch.fingerprint.clone(),
        }));
    }
    let critic_in = tape.concat(&inputs)?;
    let (q, _) = nets.critic.forward_tape(&mut tape, critic_in)?;
    let mean_q = tape.mean(q);
    let objective = tape.value(mean_q).data[0];
    let mut loss = tape.scale(mean_q, -1.0);
    if cfg.policy_reg > 0.0 {
        let sq = tape.square(logits);
        let reg = tape.mean(sq);
        let reg = tape.scale(reg, cfg.policy_reg);
        loss = tape.add(loss, reg)?;
    }
    if !tape.value(loss).data[0].is_finite() {
        return Err(Error::NonFinite {
            context: format!("policy objective of agent {agent}"),
            layer: 0,
        });
    }
    tape.backward(loss)?;
    let mut grads = pnodes.grads(&tape);
    clip(&mut grads, cfg);
    nets.policy_opt.update(&mut nets.policy, &grads)?;
    Ok(objective)
}

/// Current policies seen through their message heads.
pub struct CurrentPolicies<'a> {
    pub agents: &'a [AgentNets],
    pub layout: &'a Layout,
}

impl MessagePolicy for CurrentPolicies<'_> {
    fn message_logits(&self, agent: usize, obs: &Mat) -> Result<Mat> {
        let al = &self.layout.agents[agent];
        let x = if al.obs_dim() == 0 {
            Mat::zeros(obs.rows, 1)
        } else {
            obs.clone()
        };
        let logits = self.agents[agent].policy.forward(&x)?;
        Ok(logits.columns(al.policy_message_offset(0), al.comm_act_dim()))
    }
}
