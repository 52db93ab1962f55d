//! Relabelling of stored messages with the senders' current policies.
//!
//! A window `o_{t−K} … o_t` is replayed forward: at each step the current
//! policies emit messages from the relabelled observation, the channel
//! delivers them, and the stored environment parts are kept. The final step
//! yields `ô_t`, `ô_{t+1}` and the relabelled message actions `â^m_t`.

use std::io::Write;

use super::buffer::MinibatchWindow;
use super::graph::CommGraph;
use crate::env::channel::ChannelModel;
use crate::error::{Error, Result};
use crate::layout::Layout;
use crate::nn::gumbel::{gumbel_softmax_rows, one_hot_rows};
use crate::nn::Mat;
use crate::rng::RngStream;

/// Source of message logits under the current parameters.
pub trait MessagePolicy {
    /// Logits of all message blocks of `agent`, one row per observation
    /// row; width is the agent's total message dimension.
    fn message_logits(&self, agent: usize, obs: &Mat) -> Result<Mat>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MessageSampling {
    Gumbel { beta: f64 },
    Greedy,
}

impl Default for MessageSampling {
    fn default() -> Self {
        MessageSampling::Gumbel { beta: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionMode {
    None,
    Fcc,
    Occ,
}

impl CorrectionMode {
    pub fn name(self) -> &'static str {
        match self {
            CorrectionMode::None => "none",
            CorrectionMode::Fcc => "fcc",
            CorrectionMode::Occ => "occ",
        }
    }
}

/// Static context shared by every relabelling call.
#[derive(Debug, Clone, Copy)]
pub struct Relabeller<'a> {
    pub layout: &'a Layout,
    pub graph: &'a CommGraph,
    pub channel: ChannelModel,
    pub sampling: MessageSampling,
    /// Skip messages that cannot reach `ô_t` or later.
    pub skip_unreachable: bool,
}

/// Joint transition batch for one learner.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBatch {
    pub obs: Mat,
    pub actions: Mat,
    pub rewards: Mat,
    pub next_obs: Mat,
    pub done: Vec<bool>,
    pub fingerprint: Vec<f64>,
}

impl TransitionBatch {
    /// The stored transition at the head of a window.
    pub fn from_window(w: &MinibatchWindow) -> Self {
        Self {
            obs: w.obs().clone(),
            actions: w.actions.clone(),
            rewards: w.rewards.clone(),
            next_obs: w.next_obs.clone(),
            done: w.done.clone(),
            fingerprint: w.fingerprint.clone(),
        }
    }

    pub fn batch_size(&self) -> usize {
        self.obs.rows
    }
}

/// Output of a forward relabelling pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Relabelled {
    /// `ô_{t−K} … ô_t`.
    pub history: Vec<Mat>,
    pub next_obs: Mat,
    /// `â_t = a^e_t ⊕ â^m_t`.
    pub actions: Mat,
}

impl Relabelled {
    pub fn obs(&self) -> &Mat {
        self.history.last().expect("history is never empty")
    }

    pub fn into_batch(self, w: &MinibatchWindow) -> TransitionBatch {
        let obs = self.obs().clone();
        TransitionBatch {
            obs,
            actions: self.actions,
            rewards: w.rewards.clone(),
            next_obs: self.next_obs,
            done: w.done.clone(),
            fingerprint: w.fingerprint.clone(),
        }
    }
}

impl Relabeller<'_> {
    fn check(&self, obs: &Mat, what: &str) -> Result<()> {
        if obs.cols != self.layout.joint_obs_dim {
            return Err(Error::shape(what, self.layout.joint_obs_dim, obs.cols));
        }
        if self.layout.n_agents() != self.graph.n_agents() {
            return Err(Error::shape("relabel graph", self.layout.n_agents(), self.graph.n_agents()));
        }
        Ok(())
    }

    /// Samples message blocks for each agent flagged in `regenerate`.
    fn messages(
        &self,
        policy: &dyn MessagePolicy,
        obs: &Mat,
        regenerate: &[bool],
        rng: &mut RngStream,
    ) -> Result<Vec<Option<Mat>>> {
        let mut out = Vec::with_capacity(self.layout.n_agents());
        for (agent, al) in self.layout.agents.iter().enumerate() {
            if !regenerate[agent] || al.message_dims.is_empty() {
                out.push(None);
                continue;
            }
            let own = self.layout.agent_obs(obs, agent);
            let logits = policy.message_logits(agent, &own)?;
            if logits.shape() != (obs.rows, al.comm_act_dim()) {
                return Err(Error::shape(
                    format!("message logits of agent {agent}"),
                    format!("{:?}", (obs.rows, al.comm_act_dim())),
                    format!("{:?}", logits.shape()),
                ));
            }
            let mut msgs = Mat::zeros(obs.rows, al.comm_act_dim());
            let mut start = 0;
            for &d in &al.message_dims {
                let block = logits.columns(start, d);
                let hard = match self.sampling {
                    MessageSampling::Greedy => one_hot_rows(&block),
                    MessageSampling::Gumbel { beta } => gumbel_softmax_rows(&block, beta, rng)?.0,
                };
                msgs.set_columns(start, &hard);
                start += d;
            }
            out.push(Some(msgs));
        }
        Ok(out)
    }

    /// One relabelling step: messages from `ô_τ` delivered into the stored
    /// `o_{τ+1}`, whose environment parts are kept. Only edges whose sender
    /// is flagged in `regenerate` are overwritten; `active` rows are
    /// relabelled and the rest keep the stored row. Returns `ô_{τ+1}` and the
    /// sampled messages.
    pub fn relabel_step_masked(
        &self,
        policy: &dyn MessagePolicy,
        obs: &Mat,
        stored_next: &Mat,
        regenerate: &[bool],
        active: Option<&[bool]>,
        rng: &mut RngStream,
    ) -> Result<(Mat, Vec<Option<Mat>>)> {
        self.check(obs, "relabel observation")?;
        self.check(stored_next, "relabel stored next observation")?;
        if obs.rows != stored_next.rows {
            return Err(Error::shape("relabel rows", obs.rows, stored_next.rows));
        }
        let msgs = self.messages(policy, obs, regenerate, rng)?;
        let mut next = stored_next.clone();
        let mut buf = Vec::new();
        for r in 0..obs.rows {
            if active.is_some_and(|a| !a[r]) {
                continue;
            }
            for (e, edge) in self.graph.edges().iter().enumerate() {
                let Some(m) = &msgs[edge.sender] else { continue };
                let (obs_col, _, dim) = self.layout.edge_columns[e];
                let start = self.layout.agents[edge.sender].message_offset(edge.block)
                    - self.layout.agents[edge.sender].env_act_dim();
                buf.resize(dim, 0.0);
                self.channel
                    .transmit_into(&m.row(r)[start..start + dim], &mut buf, rng)?;
                next.row_mut(r)[obs_col..obs_col + dim].copy_from_slice(&buf);
            }
        }
        Ok((next, msgs))
    }

    /// Every sender regenerates and every row is relabelled.
    pub fn relabel_step(
        &self,
        policy: &dyn MessagePolicy,
        obs: &Mat,
        stored_next: &Mat,
        rng: &mut RngStream,
    ) -> Result<Mat> {
        let all = vec![true; self.layout.n_agents()];
        Ok(self
            .relabel_step_masked(policy, obs, stored_next, &all, None, rng)?
            .0)
    }

    /// Ordered correction over the last `depth` steps of the window.
    pub fn occ_relabel(
        &self,
        window: &MinibatchWindow,
        policy: &dyn MessagePolicy,
        depth: usize,
        rng: &mut RngStream,
    ) -> Result<Relabelled> {
        let w = window.truncate(depth)?;
        let k = w.k;
        let n = self.layout.n_agents();
        let mut history = Vec::with_capacity(k + 1);
        history.push(w.history[0].clone());
        let mut actions = w.actions.clone();
        let mut next_obs = None;
        for p in 0..=k {
            let steps_back = k - p;
            let regenerate: Vec<bool> = (0..n)
                .map(|a| !self.skip_unreachable || self.graph.height(a) >= steps_back)
                .collect();
            // Rows whose history starts later keep their stored observation.
            let active: Vec<bool> = w.lengths.iter().map(|&l| p >= k - l).collect();
            let stored = if p < k { &w.history[p + 1] } else { &w.next_obs };
            let current = &history[p];
            let (next, msgs) = self.relabel_step_masked(policy, current, stored, &regenerate, Some(&active), rng)?;
            if p < k {
                history.push(next);
            } else {
                for (agent, m) in msgs.iter().enumerate() {
                    if let Some(m) = m {
                        let al = &self.layout.agents[agent];
                        actions.set_columns(self.layout.act_offsets[agent] + al.env_act_dim(), m);
                    }
                }
                next_obs = Some(next);
            }
        }
        Ok(Relabelled {
            history,
            next_obs: next_obs.expect("loop runs at least once"),
            actions,
        })
    }

    /// First-step correction: one extra past observation.
    pub fn fcc_relabel(
        &self,
        window: &MinibatchWindow,
        policy: &dyn MessagePolicy,
        rng: &mut RngStream,
    ) -> Result<Relabelled> {
        Relabeller {
            skip_unreachable: false,
            ..*self
        }
        .occ_relabel(window, policy, 1, rng)
    }

    /// Batches for every agent under per-agent correction modes. Each
    /// distinct mode is relabelled once and then restored per agent.
    pub fn assemble_batches(
        &self,
        window: &MinibatchWindow,
        policy: &dyn MessagePolicy,
        modes: &[CorrectionMode],
        occ_depth: usize,
        rng: &mut RngStream,
    ) -> Result<Vec<TransitionBatch>> {
        let n = self.layout.n_agents();
        if modes.len() != n {
            return Err(Error::shape("correction modes", n, modes.len()));
        }
        let original = TransitionBatch::from_window(window);
        let mut fcc = None;
        let mut occ = None;
        if modes.contains(&CorrectionMode::Fcc) {
            fcc = Some(self.fcc_relabel(window, policy, rng)?.into_batch(window));
        }
        if modes.contains(&CorrectionMode::Occ) {
            occ = Some(self.occ_relabel(window, policy, occ_depth, rng)?.into_batch(window));
        }
        modes
            .iter()
            .enumerate()
            .map(|(agent, mode)| {
                Ok(match mode {
                    CorrectionMode::None => original.clone(),
                    CorrectionMode::Fcc => per_agent_restore(
                        fcc.as_ref().expect("computed above"),
                        &original,
                        agent,
                        self.layout,
                        self.graph,
                    ),
                    CorrectionMode::Occ => per_agent_restore(
                        occ.as_ref().expect("computed above"),
                        &original,
                        agent,
                        self.layout,
                        self.graph,
                    ),
                })
            })
            .collect()
    }
}

/// Agent `i`'s view of a relabelled batch: its own message actions and the
/// receiver slots carrying its messages in `ô_t` and `ô_{t+1}` go back to the
/// stored values.
pub fn per_agent_restore(
    relabelled: &TransitionBatch,
    original: &TransitionBatch,
    agent: usize,
    layout: &Layout,
    graph: &CommGraph,
) -> TransitionBatch {
    let mut out = relabelled.clone();
    for (start, width) in layout.message_columns(agent) {
        out.actions
            .set_columns(start, &original.actions.columns(start, width));
    }
    for (e, _) in graph.out_edges(agent) {
        let (col, _, dim) = layout.edge_columns[e];
        out.obs.set_columns(col, &original.obs.columns(col, dim));
        out.next_obs
            .set_columns(col, &original.next_obs.columns(col, dim));
    }
    out
}

/// Writes one row per sample with the original and relabelled joint message
/// vectors: `sample,orig_0..,relab_0..`.
pub fn write_message_pairs(
    out: &mut impl Write,
    layout: &Layout,
    original_actions: &Mat,
    relabelled_actions: &Mat,
) -> Result<()> {
    let a = layout.joint_messages(original_actions);
    let b = layout.joint_messages(relabelled_actions);
    if a.shape() != b.shape() {
        return Err(Error::shape("message pairs", format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    let mut header = vec!["sample".to_string()];
    header.extend((0..a.cols).map(|c| format!("orig_{c}")));
    header.extend((0..b.cols).map(|c| format!("relab_{c}")));
    writeln!(out, "{}", header.join(","))?;
    for r in 0..a.rows {
        let cells: Vec<String> = a.row(r).iter().chain(b.row(r)).map(|x| x.to_string()).collect();
        writeln!(out, "{r},{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::scenario::Scenario;
    use crate::nn::gumbel::one_hot;
    use crate::replay::buffer::{ExperienceRecord, ReplayBuffer};

    /// Emits the one-hot of a fixed function of the agent's first input.
    struct Shifted(usize);

    impl MessagePolicy for Shifted {
        fn message_logits(&self, _agent: usize, obs: &Mat) -> Result<Mat> {
            let d = 3;
            let mut out = Mat::zeros(obs.rows, d);
            for r in 0..obs.rows {
                let k = (obs.get(r, 0) as usize + self.0) % d;
                out.set(r, k, 1.0);
            }
            Ok(out)
        }
    }

    fn coop_buffer(speaker_symbol: impl Fn(usize) -> usize) -> (Scenario, ReplayBuffer) {
        let s = Scenario::coop_comm(3, 0.0).unwrap();
        let l = &s.layout;
        let mut b = ReplayBuffer::new(l.clone(), 100).unwrap();
        let mut prev_msg = vec![0.0; 3];
        for t in 0..4 {
            let speaker_obs = one_hot(3, t % 3);
            let msg = one_hot(3, speaker_symbol(t));
            let mut listener_obs = vec![0.25; 8];
            listener_obs.extend_from_slice(&prev_msg);
            let mut next_listener = vec![0.25; 8];
            next_listener.extend_from_slice(&msg);
            let mut act0 = one_hot(5, 0);
            act0.extend_from_slice(&msg);
            let r = ExperienceRecord::from_agents(
                l,
                0,
                t,
                &[speaker_obs.clone(), listener_obs],
                &[act0, one_hot(5, 1)],
                &[-1.0, -1.0],
                &[one_hot(3, (t + 1) % 3), next_listener],
                false,
                0.0,
            )
            .unwrap();
            b.push(&r).unwrap();
            prev_msg = msg;
        }
        (s, b)
    }

    fn ctx(s: &Scenario) -> Relabeller<'_> {
        Relabeller {
            layout: &s.layout,
            graph: &s.graph,
            channel: ChannelModel::Identity,
            sampling: MessageSampling::Greedy,
            skip_unreachable: false,
        }
    }

    /// Speaker policy that argmaxes its one-hot input, shifted by `shift`.
    struct Speaker(usize);

    impl MessagePolicy for Speaker {
        fn message_logits(&self, _agent: usize, obs: &Mat) -> Result<Mat> {
            let mut out = Mat::zeros(obs.rows, 3);
            for r in 0..obs.rows {
                let k = crate::nn::gumbel::argmax(&obs.row(r)[..3]);
                out.set(r, (k + self.0) % 3, 1.0);
            }
            Ok(out)
        }
    }

    #[test]
    fn no_drift_reproduces_stored() {
        let (s, b) = coop_buffer(|t| t % 3);
        let w = b.window(&[0, 1, 2, 3], 1).unwrap();
        let mut rng = RngStream::new(0);
        let out = ctx(&s).occ_relabel(&w, &Speaker(0), 1, &mut rng).unwrap();
        assert_eq!(out.obs(), w.obs());
        assert_eq!(out.next_obs, w.next_obs);
        assert_eq!(out.actions, w.actions);
    }

    #[test]
    fn drifted_speaker_changes_listener_slot() {
        let (s, b) = coop_buffer(|t| t % 3);
        let w = b.window(&[2], 1).unwrap();
        let mut rng = RngStream::new(0);
        let out = ctx(&s).occ_relabel(&w, &Speaker(1), 1, &mut rng).unwrap();
        // Speaker saw colour 1 at t = 1 and colour 2 at t = 2.
        assert_eq!(&out.obs().row(0)[3 + 8..], &one_hot(3, 2)[..]);
        assert_eq!(&out.next_obs.row(0)[3 + 8..], &one_hot(3, 0)[..]);
        assert_eq!(&out.actions.row(0)[5..8], &one_hot(3, 0)[..]);
        // Environment parts untouched.
        assert_eq!(&out.obs().row(0)[..3 + 8], &w.obs().row(0)[..3 + 8]);
    }

    #[test]
    fn restore_pins_speaker_view() {
        let (s, b) = coop_buffer(|t| t % 3);
        let w = b.window(&[1, 2, 3], 1).unwrap();
        let mut rng = RngStream::new(0);
        let modes = [CorrectionMode::Occ, CorrectionMode::Occ];
        let batches = ctx(&s)
            .assemble_batches(&w, &Speaker(2), &modes, 1, &mut rng)
            .unwrap();
        let original = TransitionBatch::from_window(&w);
        assert_eq!(batches[0], original);
        assert_ne!(batches[1].obs, original.obs);
        assert_eq!(batches[1].rewards, original.rewards);
    }

    #[test]
    fn mode_none_is_stored_data() {
        let (s, b) = coop_buffer(|t| (t * 2) % 3);
        let w = b.window(&[0, 3], 2).unwrap();
        let mut rng = RngStream::new(0);
        let modes = [CorrectionMode::None, CorrectionMode::None];
        let batches = ctx(&s).assemble_batches(&w, &Shifted(1), &modes, 1, &mut rng).unwrap();
        for batch in batches {
            assert_eq!(batch, TransitionBatch::from_window(&w));
        }
    }

    #[test]
    fn first_step_keeps_stored_start() {
        let (s, b) = coop_buffer(|t| t % 3);
        let w = b.window(&[0], 1).unwrap();
        assert_eq!(w.lengths, vec![0]);
        let mut rng = RngStream::new(0);
        let out = ctx(&s).occ_relabel(&w, &Speaker(1), 1, &mut rng).unwrap();
        assert_eq!(out.obs(), w.obs());
        assert_eq!(&out.next_obs.row(0)[3 + 8..], &one_hot(3, 1)[..]);
    }

    #[test]
    fn message_pairs_csv() {
        let (s, b) = coop_buffer(|t| t % 3);
        let w = b.window(&[1], 1).unwrap();
        let mut rng = RngStream::new(0);
        let out = ctx(&s).occ_relabel(&w, &Speaker(1), 1, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_message_pairs(&mut buf, &s.layout, &w.actions, &out.actions).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "sample,orig_0,orig_1,orig_2,relab_0,relab_1,relab_2");
        assert_eq!(text.lines().nth(1).unwrap(), "0,0,1,0,0,0,1");
    }
}
