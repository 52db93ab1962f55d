//! `train` and `covert-nokey`: one training run per seed, aggregated into a
//! run directory.
//!
//! ```text
//! <out>/config.toml          resolved configuration
//! <out>/manifest.toml        status, timings, file inventory
//! <out>/metrics.csv          all seeds, in seed-list order
//! <out>/eval.csv             greedy evaluations at the configured cadence
//! <out>/seed_<s>/metrics.csv
//! <out>/seed_<s>/timings.csv wall-clock seconds per episode
//! <out>/seed_<s>/eval.csv
//! <out>/seed_<s>/ckpt_<episode>.ckpt, final.ckpt
//! ```
//!
//! `metrics.csv` columns: `seed, episode, return_agent<i>..., return_<team>...,
//! critic_loss_agent<i>..., policy_loss_agent<i>...`. Returns are on the
//! scenario's reporting scale for teams and raw sums for agents; loss cells
//! are empty for episodes without an update. Wall time lives in
//! `timings.csv` so that `metrics.csv` is reproducible bit for bit.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use commrelabel::env::{Scenario, ScenarioKind};
use commrelabel::maddpg::{evaluate, EpisodeMetrics, Trainer};

use crate::config::RunConfig;
use crate::manifest::{code_version, inventory, RunManifest, SeedStatus, Status};

pub const METRICS_FILE: &str = "metrics.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
/// Allies' per-step reward against an adversary guessing uniformly.
pub const RANDOM_ADVERSARY_REWARD: f64 = 0.5;

#[derive(Debug, Clone, Default)]
pub struct TrainOverrides {
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub episodes: Option<usize>,
    pub quiet: bool,
}

pub fn seed_dir(run: &Path, seed: u64) -> PathBuf {
    run.join(format!("seed_{seed}"))
}

/// Evaluation seed derived from the training seed.
pub fn eval_seed(seed: u64) -> u64 {
    seed ^ 0x5EED_E7A1_0000_0000
}

pub fn metrics_header(scenario: &Scenario) -> Vec<String> {
    let n = scenario.n_agents();
    let mut h = vec!["seed".to_string(), "episode".to_string()];
    h.extend((0..n).map(|i| format!("return_agent{i}")));
    h.extend(scenario.teams().iter().map(|(t, _)| format!("return_{t}")));
    h.extend((0..n).map(|i| format!("critic_loss_agent{i}")));
    h.extend((0..n).map(|i| format!("policy_loss_agent{i}")));
    h
}

fn metrics_row(seed: u64, m: &EpisodeMetrics, n: usize) -> Vec<String> {
    let mut r = vec![seed.to_string(), m.episode.to_string()];
    r.extend(m.agent_returns.iter().map(f64::to_string));
    r.extend(m.team_returns.iter().map(f64::to_string));
    for losses in [&m.critic_loss, &m.policy_loss] {
        match losses {
            Some(v) => r.extend(v.iter().map(f64::to_string)),
            None => r.extend(std::iter::repeat_n(String::new(), n)),
        }
    }
    r
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

struct SeedOutcome {
    episodes: u64,
    wall_seconds: f64,
}

fn train_seed(cfg: &RunConfig, scenario: &Scenario, seed: u64, run: &Path, quiet: bool) -> Result<SeedOutcome> {
    let dir = seed_dir(run, seed);
    std::fs::create_dir_all(&dir)?;
    let tc = cfg.train_config(scenario, seed)?;
    let mut trainer = Trainer::new(scenario.clone(), tc)?;
    let n = scenario.n_agents();
    let mut metrics = csv_writer(&dir.join(METRICS_FILE))?;
    metrics.write_record(metrics_header(scenario))?;
    let mut timings = csv_writer(&dir.join("timings.csv"))?;
    timings.write_record(["episode", "wall_seconds"])?;
    let mut evals = csv_writer(&dir.join(EVAL_FILE))?;
    evals.write_record(["seed", "episode", "team", "episodes", "mean", "stderr"])?;
    let start = Instant::now();
    let mut recent = Vec::new();
    trainer.train(|t, m| {
        let io = |e: csv::Error| commrelabel::Error::Io(e.into());
        metrics.write_record(metrics_row(seed, m, n)).map_err(io)?;
        timings
            .write_record([m.episode.to_string(), start.elapsed().as_secs_f64().to_string()])
            .map_err(io)?;
        let done = m.episode + 1;
        if cfg.eval_every > 0 && done % cfg.eval_every as u64 == 0 {
            let e = evaluate(&t.scenario, &t.policies(), cfg.eval_episodes, eval_seed(seed))?;
            for (k, team) in e.team_names.iter().enumerate() {
                evals
                    .write_record([
                        seed.to_string(),
                        done.to_string(),
                        team.clone(),
                        e.episodes.to_string(),
                        e.mean[k].to_string(),
                        e.stderr[k].to_string(),
                    ])
                    .map_err(io)?;
            }
        }
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every as u64 == 0 {
            t.save(dir.join(format!("ckpt_{done:08}.ckpt")), cfg.save_buffer)?;
        }
        recent.push(m.team_returns[0]);
        if !quiet && done % 1000 == 0 {
            let mean = recent.iter().sum::<f64>() / recent.len() as f64;
            eprintln!(
                "seed {seed}: episode {done}, mean {} of last {} = {mean:.3} ({:.0}s)",
                scenario.teams()[0].0,
                recent.len(),
                start.elapsed().as_secs_f64()
            );
            recent.clear();
        }
        Ok(())
    })?;
    metrics.flush()?;
    timings.flush()?;
    evals.flush()?;
    trainer.save(dir.join(FINAL_CHECKPOINT), cfg.save_buffer)?;
    Ok(SeedOutcome {
        episodes: trainer.episodes_done(),
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Concatenates per-seed CSVs (same header) in seed-list order.
fn aggregate(run: &Path, seeds: &[u64], file: &str) -> Result<()> {
    let mut out: Option<csv::Writer<BufWriter<File>>> = None;
    for &seed in seeds {
        let mut r = csv::Reader::from_path(seed_dir(run, seed).join(file))?;
        let w = match &mut out {
            Some(w) => w,
            None => {
                let mut w = csv_writer(&run.join(file))?;
                w.write_record(r.headers()?)?;
                out.insert(w)
            }
        };
        for rec in r.records() {
            w.write_record(&rec?)?;
        }
    }
    if let Some(mut w) = out {
        w.flush()?;
    }
    Ok(())
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Trains every seed and returns the run directory.
pub fn cmd_train(cfg: &RunConfig, overrides: &TrainOverrides, command: &str) -> Result<PathBuf> {
    let mut cfg = cfg.clone();
    if let Some(s) = &overrides.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(e) = overrides.episodes {
        cfg.train.episodes = e;
    }
    if let Some(o) = &overrides.out {
        cfg.out_dir = Some(o.clone());
    }
    cfg.validate()?;
    let run = cfg
        .out_dir
        .clone()
        .ok_or_else(|| anyhow!("no output directory: set out_dir or pass --out"))?;
    std::fs::create_dir_all(&run)?;
    std::fs::write(run.join(CONFIG_FILE), cfg.to_toml())?;
    let scenario = cfg.build_scenario()?;
    let first = Trainer::new(scenario.clone(), cfg.train_config(&scenario, cfg.seeds[0])?)?;
    let mut reference = BTreeMap::new();
    if command == "covert-nokey" {
        reference.insert("random_adversary_allies_reward".to_string(), RANDOM_ADVERSARY_REWARD);
    }
    let manifest = RunManifest {
        command: command.to_string(),
        code_version: code_version(),
        status: Status::Running,
        variant: cfg.variant.to_string(),
        scenario: scenario.name().to_string(),
        reporting_unit: scenario.reporting_unit().to_string(),
        correction_depth: first.occ_depth(),
        started_unix: unix_now(),
        total_wall_seconds: None,
        files: Vec::new(),
        config: cfg.to_toml(),
        reference,
        seeds: cfg
            .seeds
            .iter()
            .map(|&seed| SeedStatus {
                seed,
                status: Status::Pending,
                episodes: 0,
                wall_seconds: None,
                error: None,
            })
            .collect(),
    };
    drop(first);
    manifest.write(&run)?;
    let manifest = Mutex::new(manifest);
    let start = Instant::now();
    let next = AtomicUsize::new(0);
    let workers = cfg.workers.min(cfg.seeds.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&seed) = cfg.seeds.get(i) else { break };
                {
                    let mut m = manifest.lock().unwrap();
                    m.seed_mut(seed).status = Status::Running;
                    let _ = m.write(&run);
                }
                let result = train_seed(&cfg, &scenario, seed, &run, overrides.quiet);
                let mut m = manifest.lock().unwrap();
                let s = m.seed_mut(seed);
                match result {
                    Ok(o) => {
                        s.status = Status::Complete;
                        s.episodes = o.episodes;
                        s.wall_seconds = Some(o.wall_seconds);
                    }
                    Err(e) => {
                        s.status = Status::Failed;
                        s.error = Some(format!("{e:#}"));
                    }
                }
                let _ = m.write(&run);
            });
        }
    });
    let mut m = manifest.into_inner().unwrap();
    let failed: Vec<String> = m
        .seeds
        .iter()
        .filter(|s| s.status != Status::Complete)
        .map(|s| format!("seed {}: {}", s.seed, s.error.as_deref().unwrap_or("not run")))
        .collect();
    if failed.is_empty() {
        aggregate(&run, &cfg.seeds, METRICS_FILE)?;
        aggregate(&run, &cfg.seeds, EVAL_FILE)?;
    }
    m.status = if failed.is_empty() { Status::Complete } else { Status::Failed };
    m.total_wall_seconds = Some(start.elapsed().as_secs_f64());
    m.files = inventory(&run)?;
    if !m.files.iter().any(|f| f == crate::manifest::MANIFEST_FILE) {
        m.files.push(crate::manifest::MANIFEST_FILE.to_string());
        m.files.sort();
    }
    m.write(&run)?;
    if !failed.is_empty() {
        bail!("training failed:\n{}", failed.join("\n"));
    }
    Ok(run)
}

/// Covert communication with the key removed from the allies' observations.
pub fn cmd_covert_nokey(cfg: &RunConfig, overrides: &TrainOverrides) -> Result<PathBuf> {
    if cfg.scenario.name != ScenarioKind::CovertComm {
        bail!("covert-nokey needs scenario.name = \"covert_comm\", got {}", cfg.scenario.name.name());
    }
    let mut cfg = cfg.clone();
    cfg.scenario.with_key = Some(false);
    cmd_train(&cfg, overrides, "covert-nokey")
}
