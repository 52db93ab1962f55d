//! `correlation`: how well relabelled early-training messages reflect the
//! current communication policies.
//!
//! Sample sets, each a matrix of joint one-hot message vectors (one row per
//! stored step, every agent's message blocks concatenated):
//!
//! - `fresh`: the current policies rolled forward through the stored
//!   episodes, starting from each episode's first step, keeping the stored
//!   environment observations.
//! - `fresh_new`: the current policies on newly simulated episodes.
//! - `uncorrected`: the stored messages.
//! - `fcc`, `occ`: the stored messages after first-step and ordered
//!   relabelling, with the ordered depth taken from the graph.
//!
//! Every set is built twice, with greedy messages and with Gumbel samples.
//! Components with zero variance are masked and excluded from distances.
//! `pairs_<sampling>.csv` holds each stored message next to its ordered
//! relabel.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use commrelabel::checkpoint::Archive;
use commrelabel::env::Scenario;
use commrelabel::maddpg::{act_batch, play_episode, ActMode, CurrentPolicies, Trainer};
use commrelabel::nn::Mat;
use commrelabel::replay::{write_message_pairs, MessageSampling, ReplayBuffer};
use commrelabel::RngStream;

use crate::stats::CorrMatrix;
use crate::svg::heatmaps;

pub const DEFAULT_SAMPLES: usize = 10_000;
pub const SETS: [&str; 5] = ["fresh", "fresh_new", "uncorrected", "fcc", "occ"];
pub const SAMPLINGS: [&str; 2] = ["greedy", "gumbel"];

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceRow {
    pub sampling: String,
    pub a: String,
    pub b: String,
    pub distance: f64,
    pub entries: usize,
}

#[derive(Debug, Clone)]
pub struct CorrelationReport {
    pub components: Vec<String>,
    /// `(sampling, set, matrix)`.
    pub matrices: Vec<(String, String, CorrMatrix)>,
    pub distances: Vec<DistanceRow>,
    pub samples: usize,
    /// `(sampling, stored actions, ordered-relabelled actions)`.
    pub pairs: Vec<(String, Mat, Mat)>,
}

impl CorrelationReport {
    pub fn distance(&self, sampling: &str, a: &str, b: &str) -> Option<f64> {
        self.distances
            .iter()
            .find(|r| r.sampling == sampling && r.a == a && r.b == b)
            .map(|r| r.distance)
    }

    pub fn matrix(&self, sampling: &str, set: &str) -> Option<&CorrMatrix> {
        self.matrices
            .iter()
            .find(|(s, n, _)| s == sampling && n == set)
            .map(|(_, _, m)| m)
    }
}

fn component_names(scenario: &Scenario) -> Vec<String> {
    let mut out = Vec::new();
    for (a, al) in scenario.layout.agents.iter().enumerate() {
        for (b, &d) in al.message_dims.iter().enumerate() {
            out.extend((0..d).map(|k| format!("agent{a}.m{b}.{k}")));
        }
    }
    out
}

fn rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.rows).map(|r| m.row(r).to_vec()).collect()
}

fn act_mode(sampling: MessageSampling) -> ActMode {
    match sampling {
        MessageSampling::Greedy => ActMode::Greedy,
        MessageSampling::Gumbel { beta } => ActMode::Explore { beta },
    }
}

/// Start index of every complete episode in the buffer.
fn episode_starts(buffer: &ReplayBuffer, len: usize) -> Result<Vec<u64>> {
    let mut starts = Vec::new();
    let end = buffer.total_pushed();
    let mut g = buffer.oldest();
    while g < end {
        let r = buffer.get(g)?;
        if r.step != 0 {
            g += 1;
            continue;
        }
        if g + len as u64 > end {
            break;
        }
        let last = buffer.get(g + len as u64 - 1)?;
        if last.episode != r.episode || !last.done {
            bail!("episode {} in the sample is not {len} steps long", r.episode);
        }
        starts.push(g);
        g += len as u64;
    }
    Ok(starts)
}

/// Joint messages of the current policies rolled forward through stored
/// episodes: stored environment observations, regenerated message slots.
pub fn forward_replay_messages(
    trainer: &Trainer,
    buffer: &ReplayBuffer,
    starts: &[u64],
    sampling: MessageSampling,
    rng: &mut RngStream,
) -> Result<Mat> {
    let layout = &trainer.scenario.layout;
    let channel = trainer.scenario.channel;
    let len = trainer.scenario.episode_len;
    let mode = act_mode(sampling);
    let n = starts.len();
    let mut per_step: Vec<Mat> = Vec::with_capacity(len);
    let mut prev: Option<Mat> = None;
    for t in 0..len {
        let idx: Vec<u64> = starts.iter().map(|s| s + t as u64).collect();
        let mut obs = buffer.window(&idx, 0)?.obs().clone();
        if let Some(prev) = &prev {
            for &(obs_col, act_col, dim) in &layout.edge_columns {
                for r in 0..n {
                    let msg = prev.row(r)[act_col..act_col + dim].to_vec();
                    channel.transmit_into(&msg, &mut obs.row_mut(r)[obs_col..obs_col + dim], rng)?;
                }
            }
        }
        let mut actions = Mat::zeros(n, layout.joint_act_dim);
        for (a, agent) in trainer.agents.iter().enumerate() {
            let acts = act_batch(layout, a, &agent.policy, &obs, mode, rng)?;
            actions.set_columns(layout.act_offsets[a], &acts);
        }
        per_step.push(layout.joint_messages(&actions));
        prev = Some(actions);
    }
    // Reorder to stored order: episode-major, then step.
    let width = layout.joint_message_dim();
    let mut out = Mat::zeros(n * len, width);
    for (t, m) in per_step.iter().enumerate() {
        for r in 0..n {
            out.row_mut(r * len + t).copy_from_slice(m.row(r));
        }
    }
    Ok(out)
}

fn fresh_episodes(trainer: &Trainer, episodes: usize, mode: ActMode, seed: u64) -> Result<Mat> {
    let layout = &trainer.scenario.layout;
    let root = RngStream::new(seed);
    let (mut env, mut act) = (root.fork("corr-env"), root.fork("corr-act"));
    let policies = trainer.policies();
    let mut acts: Vec<f64> = Vec::new();
    let mut count = 0;
    for _ in 0..episodes {
        play_episode(&trainer.scenario, &policies, mode, &mut env, &mut act, |_, _, a, _| {
            for v in a {
                acts.extend_from_slice(v);
            }
            count += 1;
            Ok(())
        })?;
    }
    let m = Mat::from_vec(count, layout.joint_act_dim, acts)?;
    Ok(layout.joint_messages(&m))
}

/// Builds every sample set and the distances to the fresh sets.
pub fn analyse(trainer: &Trainer, early: &ReplayBuffer, samples: usize, seed: u64) -> Result<CorrelationReport> {
    let scenario = &trainer.scenario;
    let len = scenario.episode_len;
    let mut starts = episode_starts(early, len)?;
    starts.truncate((samples / len).max(1));
    if starts.is_empty() {
        bail!("no complete episode among the stored samples");
    }
    let indices: Vec<u64> = starts.iter().flat_map(|&s| s..s + len as u64).collect();
    let depth = trainer.occ_depth().max(1);
    let window = early.window(&indices, depth)?;
    let first = window.truncate(1)?;
    let policy = CurrentPolicies {
        agents: &trainer.agents,
        layout: &scenario.layout,
    };
    let mut matrices = Vec::new();
    let mut distances = Vec::new();
    let mut pairs = Vec::new();
    let root = RngStream::new(seed);
    for sampling_name in SAMPLINGS {
        let sampling = match sampling_name {
            "greedy" => MessageSampling::Greedy,
            _ => MessageSampling::Gumbel {
                beta: trainer.config.gumbel_beta,
            },
        };
        let mut rng = root.fork(sampling_name);
        let mut relabeller = trainer.relabeller();
        relabeller.sampling = sampling;
        let fresh = forward_replay_messages(trainer, early, &starts, sampling, &mut rng)?;
        let fresh_new = fresh_episodes(trainer, starts.len(), act_mode(sampling), rng.next_u64())?;
        let uncorrected = scenario.layout.joint_messages(&window.actions);
        let fcc = relabeller.fcc_relabel(&first, &policy, &mut rng)?;
        let occ = relabeller.occ_relabel(&window, &policy, depth, &mut rng)?;
        let sets = [
            fresh,
            fresh_new,
            uncorrected,
            scenario.layout.joint_messages(&fcc.actions),
            scenario.layout.joint_messages(&occ.actions),
        ];
        let mats: Vec<CorrMatrix> = sets.iter().map(|m| CorrMatrix::from_rows(&rows(m))).collect();
        for reference in ["fresh", "fresh_new"] {
            let ri = SETS.iter().position(|s| *s == reference).unwrap();
            for (i, name) in SETS.iter().enumerate() {
                if i == ri {
                    continue;
                }
                let (distance, entries) = mats[i].distance(&mats[ri]);
                distances.push(DistanceRow {
                    sampling: sampling_name.to_string(),
                    a: name.to_string(),
                    b: reference.to_string(),
                    distance,
                    entries,
                });
            }
        }
        for (name, m) in SETS.iter().zip(mats) {
            matrices.push((sampling_name.to_string(), name.to_string(), m));
        }
        pairs.push((sampling_name.to_string(), window.actions.clone(), occ.actions));
    }
    Ok(CorrelationReport {
        components: component_names(scenario),
        matrices,
        distances,
        samples: indices.len(),
        pairs,
    })
}

pub fn write_report(dir: &Path, scenario: &Scenario, report: &CorrelationReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let title = scenario.name();
    for (sampling, stored, relabelled) in &report.pairs {
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("pairs_{sampling}.csv")))?);
        write_message_pairs(&mut f, &scenario.layout, stored, relabelled)?;
    }
    for (sampling, set, m) in &report.matrices {
        let mut w = csv::Writer::from_path(dir.join(format!("corr_{sampling}_{set}.csv")))?;
        let mut header = vec!["component".to_string()];
        header.extend(report.components.iter().cloned());
        w.write_record(&header)?;
        for i in 0..m.dim {
            let mut row = vec![report.components[i].clone()];
            row.extend((0..m.dim).map(|j| m.get(i, j).map_or_else(String::new, |v| v.to_string())));
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    let mut w = csv::Writer::from_path(dir.join("distances.csv"))?;
    w.write_record(["sampling", "set", "reference", "frobenius", "entries"])?;
    for d in &report.distances {
        w.write_record([
            d.sampling.clone(),
            d.a.clone(),
            d.b.clone(),
            d.distance.to_string(),
            d.entries.to_string(),
        ])?;
    }
    w.flush()?;
    for sampling in SAMPLINGS {
        let panels: Vec<(String, &CorrMatrix)> = ["fresh", "uncorrected", "fcc", "occ"]
            .iter()
            .filter_map(|set| {
                let m = report.matrix(sampling, set)?;
                let label = match report.distance(sampling, set, "fresh") {
                    Some(d) => format!("{set} (d = {d:.3})"),
                    None => set.to_string(),
                };
                Some((label, m))
            })
            .collect();
        let t = format!("{title}: joint message correlations, {sampling} messages, {} samples", report.samples);
        std::fs::write(dir.join(format!("correlation_{sampling}.svg")), heatmaps(&t, &panels))?;
    }
    Ok(())
}

pub struct CorrelationOptions {
    pub checkpoint: PathBuf,
    /// Checkpoint holding a full buffer to sample from instead of the early
    /// snapshot.
    pub buffer: Option<PathBuf>,
    pub samples: usize,
    pub out: Option<PathBuf>,
    pub seed: u64,
}

pub fn cmd_correlation(opts: &CorrelationOptions) -> Result<(PathBuf, CorrelationReport)> {
    let archive = Archive::load(&opts.checkpoint)
        .with_context(|| format!("loading checkpoint {}", opts.checkpoint.display()))?;
    let trainer = Trainer::from_archive(&archive)?;
    let early = match &opts.buffer {
        None => trainer
            .early_buffer(&archive)
            .context("checkpoint holds no early-training snapshot")?,
        Some(p) => {
            let a = Archive::load(p).with_context(|| format!("loading {}", p.display()))?;
            ReplayBuffer::load(trainer.scenario.layout.clone(), &a, "buffer")
                .with_context(|| format!("{} holds no replay buffer", p.display()))?
        }
    };
    let report = analyse(&trainer, &early, opts.samples, opts.seed)?;
    let out = match &opts.out {
        Some(o) => o.clone(),
        None => opts
            .checkpoint
            .parent()
            .map_or_else(|| PathBuf::from("correlation"), |p| p.join("correlation")),
    };
    write_report(&out, &trainer.scenario, &report)?;
    Ok((out, report))
}
