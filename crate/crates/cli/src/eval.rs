//! `eval`: greedy evaluation of a checkpoint over a sweep of message-drop
//! probabilities.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use commrelabel::env::world::{AgentAction, TrajectoryWriter};
use commrelabel::env::{ChannelModel, ScenarioConfig};
use commrelabel::maddpg::{evaluate, play_episode, ActMode, Trainer};
use commrelabel::RngStream;

use crate::config::RunConfig;
use crate::svg::{bar_chart, Bar};

pub const DEFAULT_EVAL_EPISODES: usize = 5000;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub drop_p: f64,
    pub team: String,
    pub episodes: usize,
    pub mean: f64,
    pub stderr: f64,
}

fn without_channel(c: &ScenarioConfig) -> ScenarioConfig {
    let mut c = c.clone();
    c.drop_p = None;
    c.gaussian_sigma = None;
    c
}

/// Rejects a config whose scenario differs from the checkpoint's in
/// anything but the channel.
pub fn check_scenario(trainer: &Trainer, cfg: &RunConfig) -> Result<()> {
    let want = without_channel(&cfg.scenario);
    let have = without_channel(&trainer.scenario.config);
    if want != have {
        bail!(
            "checkpoint was trained on\n{}\nbut the config describes\n{}",
            have.to_toml(),
            want.to_toml()
        );
    }
    Ok(())
}

pub fn evaluate_sweep(trainer: &Trainer, drop_ps: &[f64], episodes: usize, seed: u64) -> Result<Vec<EvalRow>> {
    let policies = trainer.policies();
    let mut rows = Vec::new();
    for &p in drop_ps {
        if !(0.0..=1.0).contains(&p) {
            bail!("drop probability {p} outside [0, 1]");
        }
        let channel = if p == 0.0 {
            ChannelModel::Identity
        } else {
            ChannelModel::Dropout { p }
        };
        let scenario = trainer.scenario.with_channel(channel)?;
        let e = evaluate(&scenario, &policies, episodes, seed)?;
        for (k, team) in e.team_names.iter().enumerate() {
            rows.push(EvalRow {
                drop_p: p,
                team: team.clone(),
                episodes,
                mean: e.mean[k],
                stderr: e.stderr[k],
            });
        }
    }
    Ok(rows)
}

pub fn write_rows(path: &Path, rows: &[EvalRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["drop_p", "team", "episodes", "mean", "stderr"])?;
    for r in rows {
        w.write_record([
            r.drop_p.to_string(),
            r.team.clone(),
            r.episodes.to_string(),
            r.mean.to_string(),
            r.stderr.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub struct EvalOptions {
    pub checkpoint: PathBuf,
    pub config: Option<RunConfig>,
    pub drop_ps: Vec<f64>,
    pub episodes: usize,
    pub out: Option<PathBuf>,
    pub seed: u64,
    /// Greedy episodes dumped step by step to `trajectories.csv`.
    pub trajectories: usize,
}

/// Per-step CSV of greedy episodes under the checkpoint's own channel.
pub fn write_trajectories(trainer: &Trainer, episodes: usize, seed: u64, path: &Path) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut w = TrajectoryWriter::new(file)?;
    let root = RngStream::new(seed);
    let (mut env, mut act) = (root.fork("traj-env"), root.fork("traj-act"));
    let layout = &trainer.scenario.layout;
    for e in 0..episodes as u64 {
        play_episode(&trainer.scenario, &trainer.policies(), ActMode::Greedy, &mut env, &mut act, |s, _, v, out| {
            let actions = v
                .iter()
                .zip(&layout.agents)
                .map(|(v, al)| AgentAction::from_vector(v, al))
                .collect::<commrelabel::Result<Vec<_>>>()?;
            w.record(e, s, &actions, &out.rewards)
        })?;
    }
    w.into_inner().flush()?;
    Ok(())
}

/// Writes `eval.csv` and `eval.svg` and returns the rows.
pub fn cmd_eval(opts: &EvalOptions) -> Result<(PathBuf, Vec<EvalRow>)> {
    let trainer = Trainer::load(&opts.checkpoint)
        .with_context(|| format!("loading checkpoint {}", opts.checkpoint.display()))?;
    if let Some(cfg) = &opts.config {
        check_scenario(&trainer, cfg)?;
    }
    let drop_ps = if opts.drop_ps.is_empty() { vec![0.0] } else { opts.drop_ps.clone() };
    let rows = evaluate_sweep(&trainer, &drop_ps, opts.episodes, opts.seed)?;
    let out = match &opts.out {
        Some(o) => o.clone(),
        None => opts
            .checkpoint
            .parent()
            .map_or_else(|| PathBuf::from("eval"), |p| p.join("eval")),
    };
    std::fs::create_dir_all(&out)?;
    write_rows(&out.join("eval.csv"), &rows)?;
    if opts.trajectories > 0 {
        write_trajectories(&trainer, opts.trajectories, opts.seed, &out.join("trajectories.csv"))?;
    }
    let bars: Vec<Bar> = rows
        .iter()
        .map(|r| Bar {
            group: format!("p = {}", r.drop_p),
            label: r.team.clone(),
            value: r.mean,
            err: r.stderr,
        })
        .collect();
    let title = format!(
        "{}: greedy return vs message drop probability ({} episodes per bar)",
        trainer.scenario.name(),
        opts.episodes
    );
    std::fs::write(out.join("eval.svg"), bar_chart(&title, trainer.scenario.reporting_unit(), &bars))?;
    Ok((out, rows))
}
