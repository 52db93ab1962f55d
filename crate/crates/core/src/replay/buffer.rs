//! Episodic ring buffer and k-step window sampling.

use crate::checkpoint::Archive;
use crate::error::{Error, Result};
use crate::layout::Layout;
use crate::nn::Mat;
use crate::rng::RngStream;

pub const DEFAULT_CAPACITY: usize = 10_000_000;

/// One agent's slice of a transition, split into environment and
/// communication parts.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentTransition {
    pub obs_env: Vec<f64>,
    pub obs_comm: Vec<f64>,
    pub act_env: Vec<f64>,
    pub act_comm: Vec<f64>,
    pub reward: f64,
    pub next_obs_env: Vec<f64>,
    pub next_obs_comm: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceRecord {
    pub episode: u64,
    pub step: usize,
    pub agents: Vec<AgentTransition>,
    pub done: bool,
    pub fingerprint: f64,
}

fn split_obs(layout: &Layout, joint: &[f64], agent: usize) -> (Vec<f64>, Vec<f64>) {
    let a = &layout.agents[agent];
    let o = layout.obs_offsets[agent];
    (
        joint[o..o + a.env_obs_dim].to_vec(),
        joint[o + a.env_obs_dim..o + a.obs_dim()].to_vec(),
    )
}

fn split_act(layout: &Layout, joint: &[f64], agent: usize) -> (Vec<f64>, Vec<f64>) {
    let a = &layout.agents[agent];
    let o = layout.act_offsets[agent];
    (
        joint[o..o + a.env_act_dim()].to_vec(),
        joint[o + a.env_act_dim()..o + a.act_dim()].to_vec(),
    )
}

impl ExperienceRecord {
    /// Builds a record from per-agent observation and action vectors.
    #[allow(clippy::too_many_arguments)]
    pub fn from_agents(
        layout: &Layout,
        episode: u64,
        step: usize,
        obs: &[Vec<f64>],
        actions: &[Vec<f64>],
        rewards: &[f64],
        next_obs: &[Vec<f64>],
        done: bool,
        fingerprint: f64,
    ) -> Result<Self> {
        let n = layout.n_agents();
        for (what, len) in [
            ("observations", obs.len()),
            ("actions", actions.len()),
            ("rewards", rewards.len()),
            ("next observations", next_obs.len()),
        ] {
            if len != n {
                return Err(Error::shape(format!("record {what}"), n, len));
            }
        }
        let flat = |v: &[Vec<f64>]| v.concat();
        Self::from_joint(
            layout,
            episode,
            step,
            &flat(obs),
            &flat(actions),
            rewards,
            &flat(next_obs),
            done,
            fingerprint,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_joint(
        layout: &Layout,
        episode: u64,
        step: usize,
        obs: &[f64],
        actions: &[f64],
        rewards: &[f64],
        next_obs: &[f64],
        done: bool,
        fingerprint: f64,
    ) -> Result<Self> {
        if obs.len() != layout.joint_obs_dim || next_obs.len() != layout.joint_obs_dim {
            return Err(Error::shape(
                "joint observation",
                layout.joint_obs_dim,
                obs.len().max(next_obs.len()),
            ));
        }
        if actions.len() != layout.joint_act_dim {
            return Err(Error::shape("joint action", layout.joint_act_dim, actions.len()));
        }
        if rewards.len() != layout.n_agents() {
            return Err(Error::shape("rewards", layout.n_agents(), rewards.len()));
        }
        let agents = (0..layout.n_agents())
            .map(|i| {
                let (obs_env, obs_comm) = split_obs(layout, obs, i);
                let (act_env, act_comm) = split_act(layout, actions, i);
                let (next_obs_env, next_obs_comm) = split_obs(layout, next_obs, i);
                AgentTransition {
                    obs_env,
                    obs_comm,
                    act_env,
                    act_comm,
                    reward: rewards[i],
                    next_obs_env,
                    next_obs_comm,
                }
            })
            .collect();
        Ok(Self {
            episode,
            step,
            agents,
            done,
            fingerprint,
        })
    }

    pub fn validate(&self, layout: &Layout) -> Result<()> {
        if self.agents.len() != layout.n_agents() {
            return Err(Error::shape("record agents", layout.n_agents(), self.agents.len()));
        }
        for (i, (t, a)) in self.agents.iter().zip(&layout.agents).enumerate() {
            let checks = [
                ("obs_env", t.obs_env.len(), a.env_obs_dim),
                ("obs_comm", t.obs_comm.len(), a.comm_obs_dim()),
                ("act_env", t.act_env.len(), a.env_act_dim()),
                ("act_comm", t.act_comm.len(), a.comm_act_dim()),
                ("next_obs_env", t.next_obs_env.len(), a.env_obs_dim),
                ("next_obs_comm", t.next_obs_comm.len(), a.comm_obs_dim()),
            ];
            for (name, got, want) in checks {
                if got != want {
                    return Err(Error::shape(format!("agent {i} {name}"), want, got));
                }
            }
        }
        let finite = self.fingerprint.is_finite()
            && self.agents.iter().all(|t| {
                t.reward.is_finite()
                    && [&t.obs_env, &t.obs_comm, &t.act_env, &t.act_comm, &t.next_obs_env, &t.next_obs_comm]
                        .iter()
                        .all(|v| v.iter().all(|x| x.is_finite()))
            });
        if !finite {
            return Err(Error::InvalidArgument("record contains non-finite values".into()));
        }
        Ok(())
    }

    /// Joint observation `⊕_i (o^e_i ⊕ o^m_i)`.
    pub fn joint_obs(&self) -> Vec<f64> {
        self.agents
            .iter()
            .flat_map(|t| t.obs_env.iter().chain(&t.obs_comm).copied())
            .collect()
    }

    pub fn joint_actions(&self) -> Vec<f64> {
        self.agents
            .iter()
            .flat_map(|t| t.act_env.iter().chain(&t.act_comm).copied())
            .collect()
    }

    pub fn joint_next_obs(&self) -> Vec<f64> {
        self.agents
            .iter()
            .flat_map(|t| t.next_obs_env.iter().chain(&t.next_obs_comm).copied())
            .collect()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.agents.iter().map(|t| t.reward).collect()
    }
}

/// Ring storage of transitions in columnar form. Records are addressed by
/// a global insertion index; the live range is `[oldest, total_pushed)`.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    layout: Layout,
    capacity: usize,
    total: u64,
    obs: Vec<f64>,
    next_obs: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    episode: Vec<u64>,
    step: Vec<u32>,
    done: Vec<bool>,
    fingerprint: Vec<f64>,
}

/// A batch of sampled indices with `k` steps of clamped history each.
#[derive(Debug, Clone, PartialEq)]
pub struct MinibatchWindow {
    pub k: usize,
    /// Global buffer indices of the sampled steps `t`.
    pub indices: Vec<u64>,
    /// Per sample: how many steps of history are really available (≤ k).
    pub lengths: Vec<usize>,
    /// `history[j]` holds `o_{t−k+j}`; rows before a sample's clamp point
    /// repeat its earliest available observation.
    pub history: Vec<Mat>,
    pub actions: Mat,
    pub rewards: Mat,
    pub next_obs: Mat,
    pub done: Vec<bool>,
    pub fingerprint: Vec<f64>,
}

impl MinibatchWindow {
    pub fn batch_size(&self) -> usize {
        self.indices.len()
    }

    /// Stored `o_t`.
    pub fn obs(&self) -> &Mat {
        &self.history[self.k]
    }

    /// The same samples with only the last `k` steps of history.
    pub fn truncate(&self, k: usize) -> Result<Self> {
        if k > self.k {
            return Err(Error::InvalidArgument(format!(
                "cannot extend a {}-step window to {k}",
                self.k
            )));
        }
        let mut w = self.clone();
        w.history.drain(..self.k - k);
        w.lengths.iter_mut().for_each(|l| *l = (*l).min(k));
        w.k = k;
        Ok(w)
    }
}

impl ReplayBuffer {
    pub fn new(layout: Layout, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("buffer capacity must be positive".into()));
        }
        Ok(Self {
            layout,
            capacity,
            total: 0,
            obs: Vec::new(),
            next_obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            episode: Vec::new(),
            step: Vec::new(),
            done: Vec::new(),
            fingerprint: Vec::new(),
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.episode.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episode.is_empty()
    }

    pub fn total_pushed(&self) -> u64 {
        self.total
    }

    /// Oldest live global index.
    pub fn oldest(&self) -> u64 {
        self.total - self.len() as u64
    }

    fn slot(&self, index: u64) -> usize {
        (index % self.capacity as u64) as usize
    }

    fn live(&self, index: u64) -> Result<usize> {
        if index < self.oldest() || index >= self.total {
            return Err(Error::InvalidArgument(format!(
                "index {index} outside live range {}..{}",
                self.oldest(),
                self.total
            )));
        }
        Ok(self.slot(index))
    }

    pub fn push(&mut self, record: &ExperienceRecord) -> Result<()> {
        record.validate(&self.layout)?;
        if let Some(last) = self.total.checked_sub(1) {
            let s = self.slot(last);
            let (pe, ps, pd) = (self.episode[s], self.step[s] as usize, self.done[s]);
            let continues = record.episode == pe && record.step == ps + 1 && !pd;
            let starts = record.step == 0 && record.episode != pe;
            if !continues && !starts {
                return Err(Error::InvalidArgument(format!(
                    "record (episode {}, step {}) does not follow (episode {pe}, step {ps}{})",
                    record.episode,
                    record.step,
                    if pd { ", done" } else { "" }
                )));
            }
        } else if record.step != 0 {
            return Err(Error::InvalidArgument("first record must start an episode".into()));
        }
        let obs = record.joint_obs();
        let acts = record.joint_actions();
        let next = record.joint_next_obs();
        let rewards = record.rewards();
        if self.len() < self.capacity {
            self.obs.extend_from_slice(&obs);
            self.next_obs.extend_from_slice(&next);
            self.actions.extend_from_slice(&acts);
            self.rewards.extend_from_slice(&rewards);
            self.episode.push(record.episode);
            self.step.push(record.step as u32);
            self.done.push(record.done);
            self.fingerprint.push(record.fingerprint);
        } else {
            let s = self.slot(self.total);
            let (od, ad, n) = (
                self.layout.joint_obs_dim,
                self.layout.joint_act_dim,
                self.layout.n_agents(),
            );
            self.obs[s * od..(s + 1) * od].copy_from_slice(&obs);
            self.next_obs[s * od..(s + 1) * od].copy_from_slice(&next);
            self.actions[s * ad..(s + 1) * ad].copy_from_slice(&acts);
            self.rewards[s * n..(s + 1) * n].copy_from_slice(&rewards);
            self.episode[s] = record.episode;
            self.step[s] = record.step as u32;
            self.done[s] = record.done;
            self.fingerprint[s] = record.fingerprint;
        }
        self.total += 1;
        Ok(())
    }

    fn obs_row(&self, s: usize) -> &[f64] {
        let d = self.layout.joint_obs_dim;
        &self.obs[s * d..(s + 1) * d]
    }

    pub fn get(&self, index: u64) -> Result<ExperienceRecord> {
        let s = self.live(index)?;
        let (od, ad, n) = (
            self.layout.joint_obs_dim,
            self.layout.joint_act_dim,
            self.layout.n_agents(),
        );
        ExperienceRecord::from_joint(
            &self.layout,
            self.episode[s],
            self.step[s] as usize,
            &self.obs[s * od..(s + 1) * od],
            &self.actions[s * ad..(s + 1) * ad],
            &self.rewards[s * n..(s + 1) * n],
            &self.next_obs[s * od..(s + 1) * od],
            self.done[s],
            self.fingerprint[s],
        )
    }

    /// Steps of in-episode history available before `index`, capped at `k`.
    pub fn history_len(&self, index: u64, k: usize) -> Result<usize> {
        let s = self.live(index)?;
        let within_episode = self.step[s] as usize;
        let within_buffer = (index - self.oldest()) as usize;
        Ok(k.min(within_episode).min(within_buffer))
    }

    /// Builds the window for the given global indices.
    pub fn window(&self, indices: &[u64], k: usize) -> Result<MinibatchWindow> {
        let (od, ad, n) = (
            self.layout.joint_obs_dim,
            self.layout.joint_act_dim,
            self.layout.n_agents(),
        );
        let b = indices.len();
        let mut history = vec![Mat::zeros(b, od); k + 1];
        let mut actions = Mat::zeros(b, ad);
        let mut rewards = Mat::zeros(b, n);
        let mut next_obs = Mat::zeros(b, od);
        let mut lengths = Vec::with_capacity(b);
        let mut done = Vec::with_capacity(b);
        let mut fingerprint = Vec::with_capacity(b);
        for (row, &t) in indices.iter().enumerate() {
            let s = self.live(t)?;
            let len = self.history_len(t, k)?;
            for (j, h) in history.iter_mut().enumerate() {
                let back = (k - j).min(len) as u64;
                h.row_mut(row).copy_from_slice(self.obs_row(self.slot(t - back)));
            }
            actions
                .row_mut(row)
                .copy_from_slice(&self.actions[s * ad..(s + 1) * ad]);
            rewards
                .row_mut(row)
                .copy_from_slice(&self.rewards[s * n..(s + 1) * n]);
            next_obs
                .row_mut(row)
                .copy_from_slice(&self.next_obs[s * od..(s + 1) * od]);
            lengths.push(len);
            done.push(self.done[s]);
            fingerprint.push(self.fingerprint[s]);
        }
        Ok(MinibatchWindow {
            k,
            indices: indices.to_vec(),
            lengths,
            history,
            actions,
            rewards,
            next_obs,
            done,
            fingerprint,
        })
    }

    /// Uniformly samples `batch_size` live indices with replacement.
    pub fn sample_indices(&self, rng: &mut RngStream, batch_size: usize) -> Result<Vec<u64>> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("cannot sample from an empty buffer".into()));
        }
        let oldest = self.oldest();
        Ok((0..batch_size)
            .map(|_| oldest + rng.index(self.len()) as u64)
            .collect())
    }

    pub fn sample_window(
        &self,
        rng: &mut RngStream,
        batch_size: usize,
        k: usize,
    ) -> Result<MinibatchWindow> {
        let idx = self.sample_indices(rng, batch_size)?;
        self.window(&idx, k)
    }

    /// Copy of the oldest `n` live records (all of them if fewer).
    pub fn prefix(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        let mut out = Self::new(self.layout.clone(), n.max(1))?;
        let (od, ad, na) = (
            self.layout.joint_obs_dim,
            self.layout.joint_act_dim,
            self.layout.n_agents(),
        );
        for g in self.oldest()..self.oldest() + n as u64 {
            let s = self.slot(g);
            out.obs.extend_from_slice(&self.obs[s * od..(s + 1) * od]);
            out.next_obs
                .extend_from_slice(&self.next_obs[s * od..(s + 1) * od]);
            out.actions
                .extend_from_slice(&self.actions[s * ad..(s + 1) * ad]);
            out.rewards
                .extend_from_slice(&self.rewards[s * na..(s + 1) * na]);
            out.episode.push(self.episode[s]);
            out.step.push(self.step[s]);
            out.done.push(self.done[s]);
            out.fingerprint.push(self.fingerprint[s]);
        }
        out.total = n as u64;
        Ok(out)
    }

    /// Writes the live contents under `prefix` in oldest-first order.
    pub fn store(&self, archive: &mut Archive, prefix: &str) {
        let order: Vec<usize> = (self.oldest()..self.total).map(|i| self.slot(i)).collect();
        let gather = |src: &[f64], d: usize| -> Vec<f64> {
            order
                .iter()
                .flat_map(|&s| src[s * d..(s + 1) * d].iter().copied())
                .collect()
        };
        let (od, ad, n) = (
            self.layout.joint_obs_dim,
            self.layout.joint_act_dim,
            self.layout.n_agents(),
        );
        archive.put_u64s(
            &format!("{prefix}.meta"),
            vec![self.capacity as u64, self.total, self.len() as u64],
        );
        archive.put_f64s(&format!("{prefix}.obs"), gather(&self.obs, od));
        archive.put_f64s(&format!("{prefix}.next_obs"), gather(&self.next_obs, od));
        archive.put_f64s(&format!("{prefix}.actions"), gather(&self.actions, ad));
        archive.put_f64s(&format!("{prefix}.rewards"), gather(&self.rewards, n));
        archive.put_f64s(
            &format!("{prefix}.fingerprint"),
            order.iter().map(|&s| self.fingerprint[s]).collect(),
        );
        archive.put_u64s(
            &format!("{prefix}.episode"),
            order.iter().map(|&s| self.episode[s]).collect(),
        );
        archive.put_u64s(
            &format!("{prefix}.step"),
            order
                .iter()
                .map(|&s| self.step[s] as u64 | (self.done[s] as u64) << 32)
                .collect(),
        );
    }

    pub fn load(layout: Layout, archive: &Archive, prefix: &str) -> Result<Self> {
        let meta = archive.u64s(&format!("{prefix}.meta"))?;
        let [capacity, total, len] = meta else {
            return Err(Error::Checkpoint(format!("{prefix}.meta must hold 3 values")));
        };
        let (capacity, total, len) = (*capacity as usize, *total, *len as usize);
        let mut buf = Self::new(layout, capacity)?;
        if len > capacity || len as u64 > total {
            return Err(Error::Checkpoint(format!("{prefix}: inconsistent sizes")));
        }
        let (od, ad, n) = (
            buf.layout.joint_obs_dim,
            buf.layout.joint_act_dim,
            buf.layout.n_agents(),
        );
        let obs = archive.f64s(&format!("{prefix}.obs"))?;
        let next_obs = archive.f64s(&format!("{prefix}.next_obs"))?;
        let actions = archive.f64s(&format!("{prefix}.actions"))?;
        let rewards = archive.f64s(&format!("{prefix}.rewards"))?;
        let fingerprint = archive.f64s(&format!("{prefix}.fingerprint"))?;
        let episode = archive.u64s(&format!("{prefix}.episode"))?;
        let step = archive.u64s(&format!("{prefix}.step"))?;
        if obs.len() != len * od
            || next_obs.len() != len * od
            || actions.len() != len * ad
            || rewards.len() != len * n
            || fingerprint.len() != len
            || episode.len() != len
            || step.len() != len
        {
            return Err(Error::Checkpoint(format!(
                "{prefix}: stored arrays do not match the scenario layout"
            )));
        }
        // Slot s holds global index g with g % capacity == s.
        let oldest = total - len as u64;
        if len < capacity && oldest != 0 {
            return Err(Error::Checkpoint(format!("{prefix}: eviction before the buffer filled")));
        }
        let shift = (oldest % capacity as u64) as usize;
        let order: Vec<usize> = (0..len).map(|s| (s + len - shift % len.max(1)) % len.max(1)).collect();
        let pick = |src: &[f64], d: usize| -> Vec<f64> {
            order
                .iter()
                .flat_map(|&p| src[p * d..(p + 1) * d].iter().copied())
                .collect()
        };
        buf.obs = pick(&obs, od);
        buf.next_obs = pick(&next_obs, od);
        buf.actions = pick(&actions, ad);
        buf.rewards = pick(&rewards, n);
        buf.fingerprint = order.iter().map(|&p| fingerprint[p]).collect();
        buf.episode = order.iter().map(|&p| episode[p]).collect();
        buf.step = order.iter().map(|&p| (step[p] & 0xffff_ffff) as u32).collect();
        buf.done = order.iter().map(|&p| step[p] >> 32 != 0).collect();
        buf.total = total;
        Ok(buf)
    }
}
