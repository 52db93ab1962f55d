//! Particle-world state transitions.

use std::io::Write;

use super::scenario::{Scenario, ScenarioKind};
use crate::error::{Error, Result};
use crate::layout::{AgentLayout, MOVE_DIM};
use crate::nn::gumbel::{argmax, one_hot};
use crate::rng::RngStream;

pub type Vec2 = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub agent_pos: Vec<Vec2>,
    pub agent_vel: Vec<Vec2>,
    /// Landmark `l` has colour `l`.
    pub landmarks: Vec<Vec2>,
    /// Target landmark per agent.
    pub targets: Vec<usize>,
    /// Non-target colour shown to each speaker (hierarchical task).
    pub clues: Vec<Option<usize>>,
    pub secret: Vec<f64>,
    pub key: Vec<f64>,
    /// Most recent continuous decode output per agent.
    pub decoded: Vec<Vec<f64>>,
    /// Message in flight on each edge, observed at the next step.
    pub pending: Vec<Vec<f64>>,
    pub step: usize,
}

/// Structured per-agent action.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentAction {
    pub movement: usize,
    pub decode: Vec<f64>,
    pub messages: Vec<Vec<f64>>,
}

impl AgentAction {
    pub fn to_vector(&self, layout: &AgentLayout) -> Vec<f64> {
        let mut v = one_hot(MOVE_DIM, self.movement);
        v.extend_from_slice(&self.decode);
        for m in &self.messages {
            v.extend_from_slice(m);
        }
        debug_assert_eq!(v.len(), layout.act_dim());
        v
    }

    pub fn from_vector(v: &[f64], layout: &AgentLayout) -> Result<Self> {
        if v.len() != layout.act_dim() {
            return Err(Error::shape("action vector", layout.act_dim(), v.len()));
        }
        Ok(Self {
            movement: argmax(&v[..MOVE_DIM]),
            decode: v[MOVE_DIM..MOVE_DIM + layout.decode_dim].to_vec(),
            messages: (0..layout.message_dims.len())
                .map(|b| {
                    let o = layout.message_offset(b);
                    v[o..o + layout.message_dims[b]].to_vec()
                })
                .collect(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: WorldState,
    pub observations: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub done: bool,
}

fn uniform_point(rng: &mut RngStream) -> Vec2 {
    [rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0)]
}

/// Samples an initial state and returns it with the joint observation.
pub fn reset(scenario: &Scenario, rng: &mut RngStream) -> (WorldState, Vec<Vec<f64>>) {
    let n = scenario.n_agents();
    let agent_pos = (0..n).map(|_| uniform_point(rng)).collect();
    let landmarks = (0..scenario.n_landmarks).map(|_| uniform_point(rng)).collect();
    let mut targets = vec![0; n];
    let mut clues = vec![None; n];
    let mut secret = Vec::new();
    let mut key = Vec::new();
    match scenario.kind {
        ScenarioKind::CoopComm | ScenarioKind::HierarchicalComm => {
            let t = rng.index(scenario.n_landmarks);
            targets.iter_mut().for_each(|x| *x = t);
            if scenario.kind == ScenarioKind::HierarchicalComm {
                let mut others: Vec<usize> = (0..scenario.n_landmarks).filter(|&c| c != t).collect();
                rng.shuffle(&mut others);
                for (speaker, colour) in others.into_iter().enumerate() {
                    clues[speaker] = Some(colour);
                }
            }
        }
        ScenarioKind::MultiTargetComm => {
            targets
                .iter_mut()
                .for_each(|x| *x = rng.index(scenario.n_landmarks));
        }
        ScenarioKind::CovertComm => {
            let spec = scenario.covert.expect("covert scenario has a spec");
            secret = one_hot(spec.msg_dim, rng.index(spec.n_choices));
            key = one_hot(spec.key_dim, rng.index(spec.n_choices));
        }
    }
    let state = WorldState {
        agent_pos,
        agent_vel: vec![[0.0; 2]; n],
        landmarks,
        targets,
        clues,
        secret,
        key,
        decoded: scenario
            .layout
            .agents
            .iter()
            .map(|a| vec![0.0; a.decode_dim])
            .collect(),
        pending: scenario.graph.edges().iter().map(|e| vec![0.0; e.dim]).collect(),
        step: 0,
    };
    let obs = observe(&state, scenario);
    (state, obs)
}

fn direction(movement: usize) -> Vec2 {
    match movement {
        1 => [1.0, 0.0],
        2 => [-1.0, 0.0],
        3 => [0.0, 1.0],
        4 => [0.0, -1.0],
        _ => [0.0, 0.0],
    }
}

/// Damped point-mass update for every mobile agent; advances the step counter.
pub fn physics_step(scenario: &Scenario, state: &WorldState, moves: &[usize]) -> Result<WorldState> {
    if moves.len() != scenario.n_agents() {
        return Err(Error::shape("physics_step moves", scenario.n_agents(), moves.len()));
    }
    let cfg = &scenario.physics;
    let mut next = state.clone();
    for (i, &m) in moves.iter().enumerate() {
        if m >= MOVE_DIM {
            return Err(Error::InvalidArgument(format!("movement {m} out of range")));
        }
        if !scenario.mobile(i) {
            if m != 0 {
                return Err(Error::InvalidArgument(format!(
                    "agent {i} is immobile but was given movement {m}"
                )));
            }
            continue;
        }
        let d = direction(m);
        let mut v = state.agent_vel[i];
        for k in 0..2 {
            v[k] = cfg.damping * v[k] + cfg.force_scale * d[k] * cfg.dt;
        }
        if let Some(max) = cfg.max_speed {
            let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
            if speed > max {
                v = [v[0] / speed * max, v[1] / speed * max];
            }
        }
        next.agent_vel[i] = v;
        for k in 0..2 {
            next.agent_pos[i][k] += v[k] * cfg.dt;
        }
    }
    next.step += 1;
    Ok(next)
}

fn push_relative(out: &mut Vec<f64>, state: &WorldState, agent: usize) {
    let p = state.agent_pos[agent];
    for l in &state.landmarks {
        out.push(l[0] - p[0]);
        out.push(l[1] - p[1]);
    }
}

/// Joint observation: environment block ⊕ communication slots per agent.
pub fn observe(state: &WorldState, scenario: &Scenario) -> Vec<Vec<f64>> {
    let n = scenario.n_landmarks;
    (0..scenario.n_agents())
        .map(|i| {
            let layout = &scenario.layout.agents[i];
            let mut o = Vec::with_capacity(layout.obs_dim());
            match scenario.kind {
                ScenarioKind::CoopComm => {
                    if i == 0 {
                        o.extend(one_hot(n, state.targets[1]));
                    } else {
                        o.extend_from_slice(&state.agent_vel[i]);
                        push_relative(&mut o, state, i);
                    }
                }
                ScenarioKind::HierarchicalComm => {
                    if let Some(c) = state.clues[i] {
                        o.extend(one_hot(n, c));
                    } else {
                        o.extend_from_slice(&state.agent_vel[i]);
                        push_relative(&mut o, state, i);
                    }
                }
                ScenarioKind::MultiTargetComm => {
                    o.extend_from_slice(&state.agent_vel[i]);
                    push_relative(&mut o, state, i);
                    if i == 0 {
                        for &t in &state.targets {
                            o.extend(one_hot(n, t));
                        }
                    }
                }
                ScenarioKind::CovertComm => {
                    let with_key = scenario.covert.is_some_and(|c| c.with_key);
                    if i == 0 {
                        o.extend_from_slice(&state.secret);
                    }
                    if i < 2 && with_key {
                        o.extend_from_slice(&state.key);
                    }
                }
            }
            debug_assert_eq!(o.len(), layout.env_obs_dim);
            for slot in &layout.slots {
                o.extend_from_slice(&state.pending[slot.edge]);
            }
            o
        })
        .collect()
}

fn dist(a: Vec2, b: Vec2) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn sq_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

pub fn reward(scenario: &Scenario, state: &WorldState) -> Vec<f64> {
    let n = scenario.n_agents();
    match scenario.kind {
        ScenarioKind::CoopComm | ScenarioKind::HierarchicalComm => {
            let listener = n - 1;
            let r = -dist(state.agent_pos[listener], state.landmarks[state.targets[listener]]);
            vec![r; n]
        }
        ScenarioKind::MultiTargetComm => {
            let r = -(0..n)
                .map(|i| dist(state.agent_pos[i], state.landmarks[state.targets[i]]))
                .sum::<f64>();
            vec![r; n]
        }
        ScenarioKind::CovertComm => {
            let listener_err = sq_err(&state.decoded[1], &state.secret);
            let adversary_err = sq_err(&state.decoded[2], &state.secret);
            let allies = (adversary_err - listener_err) / 2.0;
            vec![allies, allies, -allies]
        }
    }
}

/// Full environment transition: physics, decode outputs, message delivery
/// through the scenario channel, rewards and the next observation.
pub fn step(
    scenario: &Scenario,
    state: &WorldState,
    actions: &[AgentAction],
    rng: &mut RngStream,
) -> Result<StepOutcome> {
    if actions.len() != scenario.n_agents() {
        return Err(Error::shape("step actions", scenario.n_agents(), actions.len()));
    }
    if state.step >= scenario.episode_len {
        return Err(Error::InvalidArgument("episode already finished; reset first".into()));
    }
    let moves: Vec<usize> = actions.iter().map(|a| a.movement).collect();
    let mut next = physics_step(scenario, state, &moves)?;
    for (i, a) in actions.iter().enumerate() {
        let layout = &scenario.layout.agents[i];
        if a.decode.len() != layout.decode_dim || a.messages.len() != layout.message_dims.len() {
            return Err(Error::shape(
                format!("action of agent {i}"),
                format!("decode {} / {} blocks", layout.decode_dim, layout.message_dims.len()),
                format!("decode {} / {} blocks", a.decode.len(), a.messages.len()),
            ));
        }
        next.decoded[i].clone_from(&a.decode);
    }
    for (e, edge) in scenario.graph.edges().iter().enumerate() {
        let msg = &actions[edge.sender].messages[edge.block];
        scenario
            .channel
            .transmit_into(msg, &mut next.pending[e], rng)?;
    }
    let rewards = reward(scenario, &next);
    let observations = observe(&next, scenario);
    let done = next.step >= scenario.episode_len;
    Ok(StepOutcome {
        state: next,
        observations,
        rewards,
        done,
    })
}

/// Per-step CSV dump: `episode,step,agent,pos_x,pos_y,action,message,reward`.
/// `message` is the argmax of the agent's first message block, empty when it
/// sends none.
pub struct TrajectoryWriter<W: Write> {
    out: W,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "episode,step,agent,pos_x,pos_y,action,message,reward")?;
        Ok(Self { out })
    }

    pub fn record(
        &mut self,
        episode: u64,
        state: &WorldState,
        actions: &[AgentAction],
        rewards: &[f64],
    ) -> Result<()> {
        for (i, a) in actions.iter().enumerate() {
            let msg = a
                .messages
                .first()
                .map(|m| argmax(m).to_string())
                .unwrap_or_default();
            writeln!(
                self.out,
                "{episode},{},{i},{},{},{},{msg},{}",
                state.step, state.agent_pos[i][0], state.agent_pos[i][1], a.movement, rewards[i]
            )?;
        }
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::channel::ChannelModel;

    fn noop_actions(s: &Scenario) -> Vec<AgentAction> {
        s.layout
            .agents
            .iter()
            .map(|a| AgentAction {
                movement: 0,
                decode: vec![0.0; a.decode_dim],
                messages: a.message_dims.iter().map(|&d| one_hot(d, 0)).collect(),
            })
            .collect()
    }

    #[test]
    fn reset_is_seeded() {
        let s = Scenario::coop_comm(5, 0.0).unwrap();
        let (a, oa) = reset(&s, &mut RngStream::new(3));
        let (b, ob) = reset(&s, &mut RngStream::new(3));
        assert_eq!(a, b);
        assert_eq!(oa, ob);
        assert!(a.pending.iter().flatten().all(|&x| x == 0.0));
        assert!(a.agent_pos.iter().chain(&a.landmarks).flatten().all(|x| x.abs() <= 1.0));
    }

    #[test]
    fn coop_observation_blocks() {
        let s = Scenario::coop_comm(5, 0.0).unwrap();
        let (st, obs) = reset(&s, &mut RngStream::new(1));
        assert_eq!(obs[0], one_hot(5, st.targets[1]));
        assert_eq!(obs[1].len(), 12 + 5);
        assert!(obs[1][12..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn hierarchical_clues_partition_non_targets() {
        let s = Scenario::hierarchical_comm().unwrap();
        let mut rng = RngStream::new(8);
        for _ in 0..50 {
            let (st, _) = reset(&s, &mut rng);
            let mut seen: Vec<usize> = st.clues[..3].iter().map(|c| c.unwrap()).collect();
            seen.push(st.targets[3]);
            seen.sort();
            assert_eq!(seen, vec![0, 1, 2, 3]);
            assert!(st.clues[3].is_none());
        }
    }

    #[test]
    fn noop_keeps_position_and_damping_scales_velocity() {
        let s = Scenario::coop_comm(3, 0.0).unwrap();
        let (mut st, _) = reset(&s, &mut RngStream::new(2));
        let p = st.agent_pos[1];
        let st2 = physics_step(&s, &st, &[0, 0]).unwrap();
        assert_eq!(st2.agent_pos[1], p);
        st.agent_vel[1] = [0.4, -0.2];
        let st3 = physics_step(&s, &st, &[0, 0]).unwrap();
        assert_eq!(st3.agent_vel[1], [0.75 * 0.4, 0.75 * -0.2]);
    }

    #[test]
    fn immobile_agent_rejects_movement() {
        let s = Scenario::coop_comm(3, 0.0).unwrap();
        let (st, _) = reset(&s, &mut RngStream::new(2));
        assert!(physics_step(&s, &st, &[1, 0]).is_err());
    }

    #[test]
    fn distance_rewards() {
        let s = Scenario::coop_comm(3, 0.0).unwrap();
        let (mut st, _) = reset(&s, &mut RngStream::new(2));
        let t = st.targets[1];
        st.agent_pos[1] = st.landmarks[t];
        assert_eq!(reward(&s, &st), vec![0.0, 0.0]);
        st.agent_pos[1] = [st.landmarks[t][0] + 1.0, st.landmarks[t][1]];
        let r = reward(&s, &st);
        assert!((r[0] + 1.0).abs() < 1e-12 && r[0] == r[1]);
    }

    #[test]
    fn covert_equal_errors_give_zero() {
        let s = Scenario::covert_comm(4, 4).unwrap();
        let (mut st, _) = reset(&s, &mut RngStream::new(6));
        st.decoded[1] = vec![0.5; 4];
        st.decoded[2] = vec![0.5; 4];
        assert_eq!(reward(&s, &st), vec![0.0, 0.0, 0.0]);
        // Listener right, adversary on the other one-hot: allies get 1.
        st.decoded[1] = st.secret.clone();
        st.decoded[2] = st.secret.iter().rev().cloned().collect();
        let r = reward(&s, &st);
        assert_eq!(r, vec![1.0, 1.0, -1.0]);
    }

    #[test]
    fn identity_channel_delivers_next_step() {
        let s = Scenario::hierarchical_comm().unwrap();
        let mut rng = RngStream::new(5);
        let (st, _) = reset(&s, &mut rng);
        let mut acts = noop_actions(&s);
        acts[1].messages[0] = one_hot(6, 4);
        let out = step(&s, &st, &acts, &mut rng).unwrap();
        let slot = &s.layout.agents[2].slots[0];
        assert_eq!(out.observations[2][slot.offset..slot.offset + 6], one_hot(6, 4)[..]);
    }

    #[test]
    fn episode_ends_after_25_steps() {
        let s = Scenario::coop_comm(3, 0.0).unwrap();
        let mut rng = RngStream::new(5);
        let (mut st, _) = reset(&s, &mut rng);
        let acts = noop_actions(&s);
        for t in 0..25 {
            let out = step(&s, &st, &acts, &mut rng).unwrap();
            assert_eq!(out.done, t == 24);
            st = out.state;
        }
        assert!(step(&s, &st, &acts, &mut rng).is_err());
    }

    #[test]
    fn dropout_zeroes_slots() {
        let s = Scenario::coop_comm(3, 0.0)
            .unwrap()
            .with_channel(ChannelModel::Dropout { p: 1.0 })
            .unwrap();
        let mut rng = RngStream::new(5);
        let (st, _) = reset(&s, &mut rng);
        let out = step(&s, &st, &noop_actions(&s), &mut rng).unwrap();
        assert!(out.observations[1][8..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn trajectory_csv_rows() {
        let s = Scenario::coop_comm(3, 0.0).unwrap();
        let (st, _) = reset(&s, &mut RngStream::new(0));
        let mut w = TrajectoryWriter::new(Vec::new()).unwrap();
        w.record(7, &st, &noop_actions(&s), &[-1.0, -1.0]).unwrap();
        let text = String::from_utf8(w.into_inner()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("7,0,0,"));
        assert!(lines[1].ends_with(",0,0,-1"));
        assert!(lines[2].ends_with(",0,,-1"));
    }
}
