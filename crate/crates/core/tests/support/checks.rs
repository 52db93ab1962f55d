//! Relabelling, buffer and channel checks returning a description of the
//! first violation. Shared by the property tests and the acceptance run.
#![allow(dead_code)]

use commrelabel::env::{ChannelModel, Scenario};
use commrelabel::layout::{AgentShape, Layout};
use commrelabel::nn::Mat;
use commrelabel::replay::{
    per_agent_restore, CommGraph, CorrectionMode, Edge, ExperienceRecord, MessageSampling, MinibatchWindow,
    Relabeller, ReplayBuffer, TransitionBatch,
};
use commrelabel::RngStream;

use super::{forward_replay, generate, random_graph, Behaviour, RandomPolicies, EPISODE_LEN};

pub type Check = std::result::Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn env_columns_equal(layout: &Layout, a: &TransitionBatch, b: &TransitionBatch) -> bool {
    (0..layout.n_agents()).all(|i| {
        let al = &layout.agents[i];
        let (o, ao) = (layout.obs_offsets[i], layout.act_offsets[i]);
        a.obs.columns(o, al.env_obs_dim) == b.obs.columns(o, al.env_obs_dim)
            && a.next_obs.columns(o, al.env_obs_dim) == b.next_obs.columns(o, al.env_obs_dim)
            && a.actions.columns(ao, al.env_act_dim()) == b.actions.columns(ao, al.env_act_dim())
    }) && a.rewards == b.rewards
        && a.done == b.done
        && a.fingerprint == b.fingerprint
}

fn own_messages_equal(layout: &Layout, agent: usize, a: &TransitionBatch, b: &TransitionBatch) -> bool {
    layout
        .message_columns(agent)
        .iter()
        .all(|&(s, w)| a.actions.columns(s, w) == b.actions.columns(s, w))
}

pub fn channel_for(choice: u8) -> ChannelModel {
    match choice % 3 {
        0 => ChannelModel::Identity,
        1 => ChannelModel::Dropout { p: 0.25 },
        _ => ChannelModel::Gaussian { sigma: 0.3 },
    }
}

pub fn mode_for(x: u64) -> CorrectionMode {
    [CorrectionMode::None, CorrectionMode::Fcc, CorrectionMode::Occ][(x % 3) as usize]
}

struct Case {
    graph: CommGraph,
    layout: Layout,
    policies: RandomPolicies,
    window: MinibatchWindow,
}

fn case(seed: u64, behaviour_is_policy: bool, batch: usize) -> Case {
    let mut rng = RngStream::new(seed);
    let (graph, layout) = random_graph(&mut rng);
    let policies = RandomPolicies::new(&layout, &mut rng);
    let (buffer, _) = if behaviour_is_policy {
        generate(&layout, &graph, Behaviour::Policy(&policies), 2, &mut rng)
    } else {
        generate(&layout, &graph, Behaviour::Random, 2, &mut rng)
    };
    let k = graph.correction_depth().max(1);
    let window = buffer.sample_window(&mut rng, batch, k).unwrap();
    Case {
        graph,
        layout,
        policies,
        window,
    }
}

/// Copy of a window with its history, actions and next observation
/// replaced by relabelled values.
fn with_relabelled(w: &MinibatchWindow, history: &[Mat], actions: &Mat, next_obs: &Mat) -> MinibatchWindow {
    let mut out = w.clone();
    let offset = w.history.len() - history.len();
    for (j, h) in history.iter().enumerate() {
        out.history[offset + j] = h.clone();
    }
    out.actions = actions.clone();
    out.next_obs = next_obs.clone();
    out
}

/// Compares ordered relabelling against forward replay of the current
/// policies over whole episodes. Returns the number of mismatching values
/// after relabelling and in the stored data.
pub fn oracle_trial(seed: u64, skip_unreachable: bool) -> (usize, usize) {
    let mut rng = RngStream::new(seed);
    let (graph, layout) = random_graph(&mut rng);
    let policies = RandomPolicies::new(&layout, &mut rng);
    let (buffer, episodes) = generate(&layout, &graph, Behaviour::Random, 2, &mut rng);
    let k = graph.correction_depth();
    let indices: Vec<u64> = (0..buffer.len() as u64).collect();
    let window = buffer.window(&indices, k).unwrap();
    let relabeller = Relabeller {
        layout: &layout,
        graph: &graph,
        channel: ChannelModel::Identity,
        sampling: MessageSampling::Greedy,
        skip_unreachable,
    };
    let out = relabeller.occ_relabel(&window, &policies, k, &mut rng).unwrap();
    let mut mismatches = 0;
    let mut stale = 0;
    for (e, episode) in episodes.iter().enumerate() {
        let (obs, msgs) = forward_replay(&layout, &graph, &policies, episode);
        for t in 0..EPISODE_LEN {
            let row = e * EPISODE_LEN + t;
            mismatches += out.obs().row(row).iter().zip(&obs[t]).filter(|(a, b)| a != b).count();
            stale += window.obs().row(row).iter().zip(&obs[t]).filter(|(a, b)| a != b).count();
            mismatches += out.next_obs.row(row).iter().zip(&obs[t + 1]).filter(|(a, b)| a != b).count();
            for a in 0..layout.n_agents() {
                for (start, width) in layout.message_columns(a) {
                    let base = layout.act_offsets[a] + layout.agents[a].env_act_dim();
                    let got = &out.actions.row(row)[start..start + width];
                    let want = &msgs[t][a][start - base..start - base + width];
                    mismatches += got.iter().zip(want).filter(|(x, y)| x != y).count();
                }
            }
        }
    }
    (mismatches, stale)
}

/// Environment columns untouched, own messages and out-edge slots restored,
/// and uncorrected agents see the stored batch.
pub fn restore_invariants(seed: u64, channel: ChannelModel, greedy: bool, mode_bits: u64) -> Check {
    let c = case(seed, false, 40);
    let r = Relabeller {
        layout: &c.layout,
        graph: &c.graph,
        channel,
        sampling: if greedy {
            MessageSampling::Greedy
        } else {
            MessageSampling::Gumbel { beta: 1.0 }
        },
        skip_unreachable: seed.is_multiple_of(2),
    };
    let n = c.layout.n_agents();
    let modes: Vec<CorrectionMode> = (0..n).map(|i| mode_for(mode_bits >> (2 * i))).collect();
    let depth = c.window.k;
    let batches = r
        .assemble_batches(&c.window, &c.policies, &modes, depth, &mut RngStream::new(seed))
        .map_err(|e| e.to_string())?;
    let original = TransitionBatch::from_window(&c.window);
    ensure!(batches.len() == n, "{} batches for {n} agents", batches.len());
    for (i, b) in batches.iter().enumerate() {
        ensure!(env_columns_equal(&c.layout, b, &original), "agent {i}: environment columns changed");
        ensure!(own_messages_equal(&c.layout, i, b, &original), "agent {i}: own messages changed");
        for (e, _) in c.graph.out_edges(i) {
            let (col, _, dim) = c.layout.edge_columns[e];
            ensure!(
                b.obs.columns(col, dim) == original.obs.columns(col, dim)
                    && b.next_obs.columns(col, dim) == original.next_obs.columns(col, dim),
                "agent {i}: slot of its own edge {e} changed"
            );
        }
        if modes[i] == CorrectionMode::None {
            ensure!(b == &original, "agent {i}: uncorrected batch differs");
        }
    }
    Ok(())
}

/// Relabelling an already relabelled window with greedy messages changes
/// nothing.
pub fn idempotence(seed: u64, skip: bool) -> Check {
    let c = case(seed, false, 30);
    let r = Relabeller {
        layout: &c.layout,
        graph: &c.graph,
        channel: ChannelModel::Identity,
        sampling: MessageSampling::Greedy,
        skip_unreachable: skip,
    };
    let k = c.window.k;
    let once = r.occ_relabel(&c.window, &c.policies, k, &mut RngStream::new(1)).unwrap();
    let relabelled = with_relabelled(&c.window, &once.history, &once.actions, &once.next_obs);
    let twice = r.occ_relabel(&relabelled, &c.policies, k, &mut RngStream::new(2)).unwrap();
    ensure!(once.obs() == twice.obs(), "observations moved on the second pass");
    ensure!(once.next_obs == twice.next_obs, "next observations moved on the second pass");
    ensure!(once.actions == twice.actions, "actions moved on the second pass");
    Ok(())
}

/// Data generated by the current greedy policies is left unchanged.
pub fn no_drift_fixpoint(seed: u64, mode: CorrectionMode) -> Check {
    let c = case(seed, true, 30);
    let r = Relabeller {
        layout: &c.layout,
        graph: &c.graph,
        channel: ChannelModel::Identity,
        sampling: MessageSampling::Greedy,
        skip_unreachable: true,
    };
    let modes = vec![mode; c.layout.n_agents()];
    let k = c.window.k;
    let batches = r
        .assemble_batches(&c.window, &c.policies, &modes, k, &mut RngStream::new(0))
        .map_err(|e| e.to_string())?;
    let original = TransitionBatch::from_window(&c.window);
    for (i, b) in batches.iter().enumerate() {
        ensure!(b == &original, "agent {i}: {mode:?} relabelling moved policy-generated data");
    }
    Ok(())
}

/// One shared relabelling plus per-agent restore equals independent
/// per-agent relabelling on a three-agent chain.
pub fn shared_equals_independent() -> Check {
    let edges = vec![
        Edge { sender: 0, block: 0, receiver: 1, dim: 3 },
        Edge { sender: 1, block: 0, receiver: 2, dim: 3 },
    ];
    let graph = CommGraph::new(3, edges).unwrap();
    let shape = |m: Vec<usize>| AgentShape { env_obs_dim: 2, mobile: false, decode_dim: 0, message_dims: m };
    let layout = Layout::new(&[shape(vec![3]), shape(vec![3]), shape(vec![])], &graph).unwrap();
    let mut rng = RngStream::new(17);
    let policies = RandomPolicies::new(&layout, &mut rng);
    let (buffer, _) = generate(&layout, &graph, Behaviour::Random, 3, &mut rng);
    let window = buffer.sample_window(&mut rng, 60, 2).unwrap();
    let r = Relabeller {
        layout: &layout,
        graph: &graph,
        channel: ChannelModel::Identity,
        sampling: MessageSampling::Greedy,
        skip_unreachable: false,
    };
    let modes = vec![CorrectionMode::Occ; 3];
    let shared = r.assemble_batches(&window, &policies, &modes, 2, &mut RngStream::new(0)).unwrap();
    let original = TransitionBatch::from_window(&window);
    for agent in 0..3 {
        let own = r
            .occ_relabel(&window, &policies, 2, &mut RngStream::new(agent as u64 + 100))
            .unwrap()
            .into_batch(&window);
        let independent = per_agent_restore(&own, &original, agent, &layout, &graph);
        ensure!(shared[agent] == independent, "agent {agent}: shared and independent batches differ");
    }
    ensure!(shared[2].obs != original.obs, "the sink's batch kept no relabelled slot");
    Ok(())
}

fn record(layout: &Layout, episode: u64, step: usize, done: bool, tag: f64) -> ExperienceRecord {
    let obs = vec![tag; layout.joint_obs_dim];
    let next = vec![tag + 0.5; layout.joint_obs_dim];
    let act = vec![-tag; layout.joint_act_dim];
    let rewards = vec![tag; layout.n_agents()];
    ExperienceRecord::from_joint(layout, episode, step, &obs, &act, &rewards, &next, done, tag).unwrap()
}

/// Pushes random-length episodes through a ring and compares every stored
/// record and every clamped window against a reference list. Returns the
/// number of records pushed.
pub fn ring_and_window_semantics(seed: u64, capacity: usize, k: usize, records: usize) -> std::result::Result<usize, String> {
    let mut rng = RngStream::new(seed);
    let (_, layout) = random_graph(&mut rng);
    let mut buffer = ReplayBuffer::new(layout.clone(), capacity).unwrap();
    let mut pushed: Vec<(u64, usize)> = Vec::new();
    let mut episode = 0u64;
    while pushed.len() < records {
        let len = 1 + rng.index(25);
        for t in 0..len {
            let tag = pushed.len() as f64;
            buffer.push(&record(&layout, episode, t, t + 1 == len, tag)).map_err(|e| e.to_string())?;
            pushed.push((episode, t));
        }
        episode += 1;
    }
    let total = pushed.len() as u64;
    ensure!(buffer.total_pushed() == total, "total_pushed {} != {total}", buffer.total_pushed());
    ensure!(buffer.len() == (total as usize).min(capacity), "len {} with capacity {capacity}", buffer.len());
    let oldest = buffer.oldest();
    ensure!(oldest == total - buffer.len() as u64, "oldest {oldest}");
    for g in 0..total {
        match buffer.get(g) {
            Err(_) => ensure!(g < oldest, "record {g} missing"),
            Ok(r) => {
                ensure!(g >= oldest, "evicted record {g} still readable");
                ensure!((r.episode, r.step) == pushed[g as usize], "record {g} has wrong position");
                ensure!(r.fingerprint == g as f64, "record {g} has wrong payload");
            }
        }
    }
    let idx: Vec<u64> = (oldest..total).collect();
    let w = buffer.window(&idx, k).map_err(|e| e.to_string())?;
    for (row, &g) in idx.iter().enumerate() {
        let (ep, step) = pushed[g as usize];
        let expect_len = k.min(step).min((g - oldest) as usize);
        ensure!(w.lengths[row] == expect_len, "record {g}: window length {} != {expect_len}", w.lengths[row]);
        for j in 0..=k {
            let back = (k - j).min(expect_len) as u64;
            let src = g - back;
            ensure!(pushed[src as usize].0 == ep, "record {g}: window crosses an episode");
            ensure!(w.history[j].get(row, 0) == src as f64, "record {g}: position {j} holds the wrong record");
        }
        ensure!(w.next_obs.get(row, 0) == g as f64 + 0.5, "record {g}: wrong next observation");
    }
    Ok(pushed.len())
}

/// Streams 10^4 records through a ring of 997 slots, checking that random
/// windows stay inside one episode.
pub fn small_ring_stream() -> Check {
    let mut rng = RngStream::new(77);
    let (_, layout) = random_graph(&mut rng);
    let mut buffer = ReplayBuffer::new(layout.clone(), 997).unwrap();
    let mut episode = 0;
    let mut n = 0u64;
    while n < 10_000 {
        let len = 1 + rng.index(25);
        for t in 0..len {
            buffer.push(&record(&layout, episode, t, t + 1 == len, n as f64)).map_err(|e| e.to_string())?;
            n += 1;
        }
        episode += 1;
        let g = buffer.oldest() + rng.index(buffer.len()) as u64;
        let w = buffer.window(&[g], 4).map_err(|e| e.to_string())?;
        let first = g - w.lengths[0] as u64;
        ensure!(
            buffer.get(first).unwrap().episode == buffer.get(g).unwrap().episode,
            "window of record {g} crosses an episode"
        );
    }
    ensure!(buffer.len() == 997, "len {}", buffer.len());
    Ok(())
}

/// Uniform minibatch index sampling: per-bin 3σ and a chi-square bound
/// near the 0.999 quantile over 10^5 draws from 50 slots.
pub fn uniform_sampling() -> Check {
    let mut rng = RngStream::new(4);
    let (_, layout) = random_graph(&mut rng);
    let mut buffer = ReplayBuffer::new(layout.clone(), 50).unwrap();
    for t in 0..70 {
        buffer.push(&record(&layout, 0, t, false, t as f64)).unwrap();
    }
    let draws = 100_000;
    let idx = buffer.sample_indices(&mut rng, draws).unwrap();
    let mut counts = vec![0usize; 50];
    for g in idx {
        counts[(g - buffer.oldest()) as usize] += 1;
    }
    let p = 1.0 / 50.0;
    let mean = draws as f64 * p;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    let mut chi2 = 0.0;
    for &c in &counts {
        ensure!((c as f64 - mean).abs() <= 3.0 * sigma, "bin count {c} outside 3σ: {counts:?}");
        chi2 += (c as f64 - mean).powi(2) / mean;
    }
    ensure!(chi2 < 85.4, "chi-square {chi2}");
    Ok(())
}

/// Dropped count over `n` transmissions at p = 0.25 and whether it lies
/// within 3σ of n/4.
pub fn channel_drop_rate(seed: u64, n: usize) -> std::result::Result<(usize, bool), String> {
    let channel = ChannelModel::Dropout { p: 0.25 };
    let mut rng = RngStream::new(seed);
    let msg = [0.0, 1.0, 0.0];
    let mut dropped = 0;
    for _ in 0..n {
        let out = channel.transmit(&msg, 3, &mut rng).map_err(|e| e.to_string())?;
        if out.iter().all(|&x| x == 0.0) {
            dropped += 1;
        } else {
            ensure!(out == msg, "delivered message altered: {out:?}");
        }
    }
    let sigma = (n as f64 * 0.25 * 0.75).sqrt();
    let ok = (dropped as f64 - 0.25 * n as f64).abs() <= 3.0 * sigma;
    Ok((dropped, ok))
}

/// Fraction of relabelled slots zeroed by the dropout channel stays within
/// 3σ of 0.25.
pub fn relabelled_drop_rate(seed: u64) -> Check {
    let mut rng = RngStream::new(seed);
    let scenario = Scenario::coop_comm(3, 0.25).unwrap();
    let policies = RandomPolicies::new(&scenario.layout, &mut rng);
    let (buffer, _) = generate(&scenario.layout, &scenario.graph, Behaviour::Random, 20, &mut rng);
    let window = buffer.sample_window(&mut rng, 10_000, 1).unwrap();
    let r = Relabeller {
        layout: &scenario.layout,
        graph: &scenario.graph,
        channel: scenario.channel,
        sampling: MessageSampling::Gumbel { beta: 1.0 },
        skip_unreachable: true,
    };
    let out = r.occ_relabel(&window, &policies, 1, &mut rng).unwrap();
    let (col, _, dim) = scenario.layout.edge_columns[0];
    let zeros = (0..out.next_obs.rows)
        .filter(|&row| out.next_obs.row(row)[col..col + dim].iter().all(|&x| x == 0.0))
        .count();
    let n = out.next_obs.rows as f64;
    let sigma = (n * 0.25 * 0.75).sqrt();
    ensure!((zeros as f64 - 0.25 * n).abs() <= 3.0 * sigma, "{zeros} zero slots of {n}");
    Ok(())
}

/// Environment columns and own messages survive ordered relabelling through
/// the dropout channel.
pub fn dropout_invariants(seed: u64) -> Check {
    let mut rng = RngStream::new(seed);
    let (graph, layout) = random_graph(&mut rng);
    let policies = RandomPolicies::new(&layout, &mut rng);
    let (buffer, _) = generate(&layout, &graph, Behaviour::Random, 2, &mut rng);
    let k = graph.correction_depth();
    let window = buffer.sample_window(&mut rng, 50, k).unwrap();
    let r = Relabeller {
        layout: &layout,
        graph: &graph,
        channel: ChannelModel::Dropout { p: 0.25 },
        sampling: MessageSampling::Gumbel { beta: 1.0 },
        skip_unreachable: true,
    };
    let modes = vec![CorrectionMode::Occ; layout.n_agents()];
    let batches = r.assemble_batches(&window, &policies, &modes, k, &mut rng).map_err(|e| e.to_string())?;
    let original = TransitionBatch::from_window(&window);
    for (i, b) in batches.iter().enumerate() {
        ensure!(env_columns_equal(&layout, b, &original), "agent {i}: environment columns changed");
        ensure!(own_messages_equal(&layout, i, b, &original), "agent {i}: own messages changed");
    }
    Ok(())
}
