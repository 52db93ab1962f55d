//! Rollout, replay and update loop.

use std::io::Write;
use std::path::Path;

use super::agent::{act, update_critic, update_policy, ActMode, AgentNets, CurrentPolicies};
use super::config::{fingerprint_value, TrainConfig};
use crate::checkpoint::Archive;
use crate::env::scenario::{Scenario, ScenarioConfig};
use crate::env::world::{self, AgentAction, TrajectoryWriter};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, MlpParams};
use crate::replay::buffer::{ExperienceRecord, ReplayBuffer};
use crate::replay::relabel::{CorrectionMode, Relabeller};
use crate::rng::{RngState, RngStream};

/// Early-training records kept for the correlation analysis.
pub const EARLY_SNAPSHOT_STEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: u64,
    /// Summed reward per agent.
    pub agent_returns: Vec<f64>,
    /// Per team, on the scenario's reporting scale.
    pub team_returns: Vec<f64>,
    /// Mean losses of the updates run during this episode, per agent.
    pub critic_loss: Option<Vec<f64>>,
    pub policy_loss: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub episodes: usize,
    pub team_names: Vec<String>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

struct Streams {
    env: RngStream,
    act: RngStream,
    sample: RngStream,
    relabel: RngStream,
    update: RngStream,
}

impl Streams {
    const NAMES: [&'static str; 5] = ["env", "act", "sample", "relabel", "update"];

    fn new(seed: u64) -> Self {
        let root = RngStream::new(seed);
        Self {
            env: root.fork("env"),
            act: root.fork("act"),
            sample: root.fork("sample"),
            relabel: root.fork("relabel"),
            update: root.fork("update"),
        }
    }

    fn all(&self) -> [&RngStream; 5] {
        [&self.env, &self.act, &self.sample, &self.relabel, &self.update]
    }

    fn all_mut(&mut self) -> [&mut RngStream; 5] {
        [
            &mut self.env,
            &mut self.act,
            &mut self.sample,
            &mut self.relabel,
            &mut self.update,
        ]
    }
}

pub struct Trainer {
    pub scenario: Scenario,
    pub config: TrainConfig,
    pub agents: Vec<AgentNets>,
    pub buffer: ReplayBuffer,
    modes: Vec<CorrectionMode>,
    occ_depth: usize,
    window_depth: usize,
    rngs: Streams,
    episode: u64,
    env_steps: u64,
    steps_since_update: usize,
    updates: u64,
}

/// Team returns on the reporting scale from per-agent sums.
pub fn team_returns(scenario: &Scenario, agent_returns: &[f64]) -> Vec<f64> {
    scenario
        .teams()
        .iter()
        .map(|(_, members)| {
            let mean = members.iter().map(|&m| agent_returns[m]).sum::<f64>() / members.len() as f64;
            scenario.report_return(mean)
        })
        .collect()
}

/// Plays one episode; `on_step` sees the pre-step state, the joint
/// observation, the action vectors and the outcome.
pub fn play_episode(
    scenario: &Scenario,
    policies: &[&MlpParams],
    mode: ActMode,
    env_rng: &mut RngStream,
    act_rng: &mut RngStream,
    mut on_step: impl FnMut(&world::WorldState, &[Vec<f64>], &[Vec<f64>], &world::StepOutcome) -> Result<()>,
) -> Result<Vec<f64>> {
    let layout = &scenario.layout;
    let (mut state, mut obs) = world::reset(scenario, env_rng);
    let mut returns = vec![0.0; scenario.n_agents()];
    loop {
        let mut vectors = Vec::with_capacity(scenario.n_agents());
        let mut actions = Vec::with_capacity(scenario.n_agents());
        for (a, p) in policies.iter().enumerate() {
            let v = act(layout, a, p, &obs[a], mode, act_rng)?;
            actions.push(AgentAction::from_vector(&v, &layout.agents[a])?);
            vectors.push(v);
        }
        let out = world::step(scenario, &state, &actions, env_rng)?;
        on_step(&state, &obs, &vectors, &out)?;
        for (r, x) in returns.iter_mut().zip(&out.rewards) {
            *r += x;
        }
        let done = out.done;
        state = out.state;
        obs = out.observations;
        if done {
            return Ok(returns);
        }
    }
}

/// Greedy evaluation over `episodes` episodes with a dedicated seed.
pub fn evaluate(scenario: &Scenario, policies: &[&MlpParams], episodes: usize, seed: u64) -> Result<EvalSummary> {
    let root = RngStream::new(seed);
    let mut env = root.fork("eval-env");
    let mut act_rng = root.fork("eval-act");
    let teams = scenario.teams();
    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(episodes); teams.len()];
    for _ in 0..episodes {
        let r = play_episode(scenario, policies, ActMode::Greedy, &mut env, &mut act_rng, |_, _, _, _| Ok(()))?;
        for (s, v) in samples.iter_mut().zip(team_returns(scenario, &r)) {
            s.push(v);
        }
    }
    let n = episodes.max(1) as f64;
    let mean: Vec<f64> = samples.iter().map(|s| s.iter().sum::<f64>() / n).collect();
    let stderr = samples
        .iter()
        .zip(&mean)
        .map(|(s, m)| {
            if s.len() < 2 {
                return 0.0;
            }
            let var = s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (s.len() - 1) as f64;
            (var / s.len() as f64).sqrt()
        })
        .collect();
    Ok(EvalSummary {
        episodes,
        team_names: teams.iter().map(|(n, _)| n.to_string()).collect(),
        mean,
        stderr,
    })
}

fn mean_rows(v: &[Vec<f64>]) -> Option<Vec<f64>> {
    let first = v.first()?;
    let mut out = vec![0.0; first.len()];
    for row in v {
        out.iter_mut().zip(row).for_each(|(o, x)| *o += x);
    }
    out.iter_mut().for_each(|o| *o /= v.len() as f64);
    Some(out)
}

impl Trainer {
    pub fn new(scenario: Scenario, config: TrainConfig) -> Result<Self> {
        config.validate(scenario.n_agents())?;
        let modes = config.modes(scenario.n_agents());
        let occ_depth = config
            .correction_depth
            .unwrap_or_else(|| scenario.graph.correction_depth());
        let window_depth = modes
            .iter()
            .map(|m| match m {
                CorrectionMode::None => 0,
                CorrectionMode::Fcc => 1,
                CorrectionMode::Occ => occ_depth,
            })
            .max()
            .unwrap_or(0);
        let rngs = Streams::new(config.seed);
        let mut init = RngStream::new(config.seed).fork("init");
        let adam = AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        };
        let agents = (0..scenario.n_agents())
            .map(|a| AgentNets::new(&scenario.layout, a, &config.hidden, config.fingerprint, adam, &mut init))
            .collect::<Result<Vec<_>>>()?;
        let buffer = ReplayBuffer::new(scenario.layout.clone(), config.buffer_capacity)?;
        Ok(Self {
            scenario,
            config,
            agents,
            buffer,
            modes,
            occ_depth,
            window_depth,
            rngs,
            episode: 0,
            env_steps: 0,
            steps_since_update: 0,
            updates: 0,
        })
    }

    pub fn modes(&self) -> &[CorrectionMode] {
        &self.modes
    }

    pub fn occ_depth(&self) -> usize {
        self.occ_depth
    }

    pub fn episodes_done(&self) -> u64 {
        self.episode
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn updates_done(&self) -> u64 {
        self.updates
    }

    fn warmup(&self) -> usize {
        self.config
            .warmup_steps
            .unwrap_or(self.config.batch_size)
    }

    pub fn relabeller(&self) -> Relabeller<'_> {
        Relabeller {
            layout: &self.scenario.layout,
            graph: &self.scenario.graph,
            channel: self.scenario.channel,
            sampling: self.config.relabel_sampling(),
            skip_unreachable: self.config.skip_unreachable,
        }
    }

    pub fn policies(&self) -> Vec<&MlpParams> {
        self.agents.iter().map(|a| &a.policy).collect()
    }

    /// One minibatch update of every agent. Returns critic losses and
    /// policy objectives per agent.
    pub fn update(&mut self) -> Result<(Vec<f64>, Vec<f64>)> {
        let window = self
            .buffer
            .sample_window(&mut self.rngs.sample, self.config.batch_size, self.window_depth)?;
        let batches = {
            let policy = CurrentPolicies {
                agents: &self.agents,
                layout: &self.scenario.layout,
            };
            let relabeller = Relabeller {
                layout: &self.scenario.layout,
                graph: &self.scenario.graph,
                channel: self.scenario.channel,
                sampling: self.config.relabel_sampling(),
                skip_unreachable: self.config.skip_unreachable,
            };
            relabeller.assemble_batches(&window, &policy, &self.modes, self.occ_depth, &mut self.rngs.relabel)?
        };
        let layout = &self.scenario.layout;
        let mut critic = Vec::with_capacity(batches.len());
        let mut policy = Vec::with_capacity(batches.len());
        for (i, batch) in batches.iter().enumerate() {
            critic.push(update_critic(&mut self.agents, layout, i, batch, &self.config)?);
            policy.push(update_policy(
                &mut self.agents,
                layout,
                i,
                batch,
                &self.config,
                &mut self.rngs.update,
            )?);
            self.agents[i].update_targets(self.config.tau)?;
        }
        self.updates += 1;
        Ok((critic, policy))
    }

    /// Runs one exploration episode, storing every step and updating on
    /// schedule.
    pub fn run_episode<W: Write>(&mut self, mut trajectory: Option<&mut TrajectoryWriter<W>>) -> Result<EpisodeMetrics> {
        let episode = self.episode;
        let layout = self.scenario.layout.clone();
        let mode = ActMode::Explore {
            beta: self.config.gumbel_beta,
        };
        let (mut state, mut obs) = world::reset(&self.scenario, &mut self.rngs.env);
        let mut returns = vec![0.0; self.scenario.n_agents()];
        let mut critic_losses = Vec::new();
        let mut policy_losses = Vec::new();
        loop {
            let mut vectors = Vec::with_capacity(layout.n_agents());
            let mut actions = Vec::with_capacity(layout.n_agents());
            for a in 0..layout.n_agents() {
                let v = act(&layout, a, &self.agents[a].policy, &obs[a], mode, &mut self.rngs.act)?;
                actions.push(AgentAction::from_vector(&v, &layout.agents[a])?);
                vectors.push(v);
            }
            let out = world::step(&self.scenario, &state, &actions, &mut self.rngs.env)?;
            if let Some(w) = trajectory.as_deref_mut() {
                w.record(episode, &state, &actions, &out.rewards)?;
            }
            let record = ExperienceRecord::from_agents(
                &layout,
                episode,
                state.step,
                &obs,
                &vectors,
                &out.rewards,
                &out.observations,
                out.done,
                fingerprint_value(self.env_steps),
            )?;
            self.buffer.push(&record)?;
            self.env_steps += 1;
            self.steps_since_update += 1;
            for (r, x) in returns.iter_mut().zip(&out.rewards) {
                *r += x;
            }
            if self.steps_since_update >= self.config.update_every && self.buffer.len() >= self.warmup() {
                self.steps_since_update = 0;
                let (c, p) = self.update()?;
                critic_losses.push(c);
                policy_losses.push(p);
            }
            let done = out.done;
            state = out.state;
            obs = out.observations;
            if done {
                break;
            }
        }
        self.episode += 1;
        Ok(EpisodeMetrics {
            episode,
            team_returns: team_returns(&self.scenario, &returns),
            agent_returns: returns,
            critic_loss: mean_rows(&critic_losses),
            policy_loss: mean_rows(&policy_losses),
        })
    }

    /// Trains until `config.episodes` episodes have run in total.
    pub fn train(&mut self, mut on_episode: impl FnMut(&Self, &EpisodeMetrics) -> Result<()>) -> Result<()> {
        while (self.episode as usize) < self.config.episodes {
            let m = self.run_episode::<std::io::Sink>(None)?;
            on_episode(self, &m)?;
        }
        Ok(())
    }

    /// Full training state. The replay buffer is included when
    /// `with_buffer` is set; the early snapshot is always included.
    pub fn to_archive(&self, with_buffer: bool) -> Archive {
        let mut a = Archive::new();
        a.put_text("scenario", self.scenario.config.to_toml());
        a.put_text("train_config", self.config.to_toml());
        a.put_u64s(
            "counters",
            vec![self.episode, self.env_steps, self.steps_since_update as u64, self.updates],
        );
        for (name, rng) in Streams::NAMES.iter().zip(self.rngs.all()) {
            let s = rng.state();
            a.put_u64s(
                &format!("rng.{name}"),
                vec![s.seed, s.word_pos as u64, (s.word_pos >> 64) as u64],
            );
        }
        for (i, n) in self.agents.iter().enumerate() {
            n.policy.store(&mut a, &format!("agent{i}.policy"));
            n.critic.store(&mut a, &format!("agent{i}.critic"));
            n.target_policy.store(&mut a, &format!("agent{i}.target_policy"));
            n.target_critic.store(&mut a, &format!("agent{i}.target_critic"));
            n.policy_opt.store(&mut a, &format!("agent{i}.policy_opt"));
            n.critic_opt.store(&mut a, &format!("agent{i}.critic_opt"));
        }
        if let Ok(early) = self.buffer.prefix(EARLY_SNAPSHOT_STEPS) {
            early.store(&mut a, "early");
        }
        if with_buffer {
            self.buffer.store(&mut a, "buffer");
        }
        a
    }

    pub fn save(&self, path: impl AsRef<Path>, with_buffer: bool) -> Result<()> {
        self.to_archive(with_buffer).save(path)
    }

    /// Restores a trainer. Without a stored buffer training resumes with an
    /// empty one.
    pub fn from_archive(a: &Archive) -> Result<Self> {
        let sc = ScenarioConfig::from_toml(a.text("scenario")?)?;
        let config = TrainConfig::from_toml(a.text("train_config")?)?;
        let mut t = Self::new(Scenario::from_config(&sc)?, config)?;
        let c = a.u64s("counters")?;
        let [episode, env_steps, since, updates] = c else {
            return Err(Error::Checkpoint("counters must hold 4 values".into()));
        };
        t.episode = *episode;
        t.env_steps = *env_steps;
        t.steps_since_update = *since as usize;
        t.updates = *updates;
        for (name, rng) in Streams::NAMES.iter().zip(t.rngs.all_mut()) {
            let v = a.u64s(&format!("rng.{name}"))?;
            let [seed, lo, hi] = v else {
                return Err(Error::Checkpoint(format!("rng.{name} must hold 3 values")));
            };
            *rng = RngStream::from_state(RngState {
                seed: *seed,
                word_pos: (*lo as u128) | ((*hi as u128) << 64),
            });
        }
        for (i, n) in t.agents.iter_mut().enumerate() {
            let load = |name: &str, like: &MlpParams| -> Result<MlpParams> {
                let p = MlpParams::load(a, &format!("agent{i}.{name}"))?;
                if !p.same_architecture(like) {
                    return Err(Error::Checkpoint(format!(
                        "agent{i}.{name} does not match the scenario layout"
                    )));
                }
                Ok(p)
            };
            n.policy = load("policy", &n.policy)?;
            n.critic = load("critic", &n.critic)?;
            n.target_policy = load("target_policy", &n.policy)?;
            n.target_critic = load("target_critic", &n.critic)?;
            n.policy_opt = AdamState::load(a, &format!("agent{i}.policy_opt"), &n.policy)?;
            n.critic_opt = AdamState::load(a, &format!("agent{i}.critic_opt"), &n.critic)?;
        }
        if a.contains("buffer.meta") {
            t.buffer = ReplayBuffer::load(t.scenario.layout.clone(), a, "buffer")?;
        }
        Ok(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_archive(&Archive::load(path)?)
    }

    /// Early-training records stored in an archive.
    pub fn early_buffer(&self, a: &Archive) -> Result<ReplayBuffer> {
        ReplayBuffer::load(self.scenario.layout.clone(), a, "early")
    }
}
