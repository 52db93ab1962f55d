//! Run configuration.
//!
//! ```toml
//! variant = "maddpg+occ"         # maddpg | maddpg+fp | maddpg+fcc | maddpg+occ
//! seeds = [0, 1, 2]
//! out_dir = "runs/coop_occ"
//! eval_every = 1000              # episodes between greedy evaluations, 0 disables
//! eval_episodes = 100
//! checkpoint_every = 0           # episodes between checkpoints, 0 keeps only the final one
//! save_buffer = false
//! workers = 1
//!
//! [scenario]
//! name = "coop_comm"
//! n_landmarks = 5
//!
//! [train]
//! episodes = 10000
//! batch_size = 1024
//! ```
//!
//! Covert communication may assign a variant per team:
//!
//! ```toml
//! [variant]
//! allies = "maddpg+occ"
//! adversary = "maddpg"
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use commrelabel::env::{Scenario, ScenarioConfig, ScenarioKind};
use commrelabel::maddpg::TrainConfig;
use commrelabel::replay::CorrectionMode;
use serde::{Deserialize, Serialize};

const TOP_KEYS: &[&str] = &[
    "scenario",
    "variant",
    "train",
    "seeds",
    "out_dir",
    "eval_every",
    "eval_episodes",
    "checkpoint_every",
    "save_buffer",
    "workers",
];
const SCENARIO_KEYS: &[&str] = &[
    "name",
    "n_landmarks",
    "drop_p",
    "gaussian_sigma",
    "message_dims",
    "msg_dim",
    "key_dim",
    "n_choices",
    "with_key",
    "physics",
];
const PHYSICS_KEYS: &[&str] = &["dt", "damping", "force_scale", "max_speed"];
const TRAIN_KEYS: &[&str] = &[
    "lr",
    "tau",
    "gamma",
    "batch_size",
    "update_every",
    "buffer_capacity",
    "gumbel_beta",
    "correction_depth",
    "episodes",
    "hidden",
    "grad_clip",
    "policy_reg",
    "relabel_greedy",
    "skip_unreachable",
    "warmup_steps",
];
/// Train keys owned by `variant` and `seeds`.
const DERIVED_TRAIN_KEYS: &[&str] = &["correction", "agent_corrections", "fingerprint", "seed"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "maddpg")]
    Maddpg,
    #[serde(rename = "maddpg+fp")]
    MaddpgFp,
    #[serde(rename = "maddpg+fcc")]
    MaddpgFcc,
    #[serde(rename = "maddpg+occ")]
    MaddpgOcc,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Maddpg => "maddpg",
            Variant::MaddpgFp => "maddpg+fp",
            Variant::MaddpgFcc => "maddpg+fcc",
            Variant::MaddpgOcc => "maddpg+occ",
        }
    }

    pub fn correction(self) -> CorrectionMode {
        match self {
            Variant::Maddpg | Variant::MaddpgFp => CorrectionMode::None,
            Variant::MaddpgFcc => CorrectionMode::Fcc,
            Variant::MaddpgOcc => CorrectionMode::Occ,
        }
    }

    pub fn fingerprint(self) -> bool {
        self == Variant::MaddpgFp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VariantSpec {
    Single(Variant),
    /// Team name → variant.
    Teams(BTreeMap<String, Variant>),
}

impl fmt::Display for VariantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VariantSpec::Single(v) => f.write_str(v.name()),
            VariantSpec::Teams(t) => {
                let parts: Vec<String> = t.iter().map(|(k, v)| format!("{k}={}", v.name())).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_eval_episodes() -> usize {
    100
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub variant: VariantSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub eval_every: usize,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default)]
    pub checkpoint_every: usize,
    #[serde(default)]
    pub save_buffer: bool,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn unknown_keys(table: &toml::Table, known: &[&str], path: &str, out: &mut Vec<String>) {
    for k in table.keys() {
        if !known.contains(&k.as_str()) {
            out.push(format!("{path}{k}"));
        }
    }
}

/// Every key that does not belong to the schema, with its table path.
pub fn offending_keys(text: &str) -> Result<Vec<String>> {
    let root: toml::Table = text.parse().context("config is not valid TOML")?;
    let mut out = Vec::new();
    unknown_keys(&root, TOP_KEYS, "", &mut out);
    if let Some(toml::Value::Table(s)) = root.get("scenario") {
        unknown_keys(s, SCENARIO_KEYS, "scenario.", &mut out);
        if let Some(toml::Value::Table(p)) = s.get("physics") {
            unknown_keys(p, PHYSICS_KEYS, "scenario.physics.", &mut out);
        }
    }
    if let Some(toml::Value::Table(t)) = root.get("train") {
        let mut all: Vec<&str> = TRAIN_KEYS.to_vec();
        all.extend_from_slice(DERIVED_TRAIN_KEYS);
        unknown_keys(t, &all, "train.", &mut out);
    }
    Ok(out)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let bad = offending_keys(text)?;
        if !bad.is_empty() {
            bail!("schema error: unknown keys: {}", bad.join(", "));
        }
        let root: toml::Table = text.parse()?;
        if let Some(toml::Value::Table(t)) = root.get("train") {
            let derived: Vec<&str> = DERIVED_TRAIN_KEYS
                .iter()
                .copied()
                .filter(|k| t.contains_key(*k))
                .collect();
            if !derived.is_empty() {
                bail!(
                    "schema error: train.{} set by `variant` and `seeds`, not [train]",
                    derived.join(", train.")
                );
            }
        }
        let cfg: RunConfig = toml::from_str(text).map_err(|e| anyhow::anyhow!("schema error: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Serialized form accepted by [`RunConfig::from_toml`]: train keys owned
    /// by `variant` and `seeds` are left out.
    pub fn to_toml(&self) -> String {
        let mut table = toml::Table::try_from(self).expect("run config serializes");
        if let Some(toml::Value::Table(t)) = table.get_mut("train") {
            for k in DERIVED_TRAIN_KEYS {
                t.remove(*k);
            }
        }
        toml::to_string(&table).expect("run config serializes")
    }

    pub fn build_scenario(&self) -> Result<Scenario> {
        Ok(Scenario::from_config(&self.scenario)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seeds must list at least one seed");
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            bail!("seeds contain duplicates: {:?}", self.seeds);
        }
        if self.workers == 0 {
            bail!("workers must be positive");
        }
        let scenario = self.build_scenario()?;
        for seed in &self.seeds {
            self.train_config(&scenario, *seed)?.validate(scenario.n_agents())?;
        }
        Ok(())
    }

    /// Training setup of one seed with the variant applied.
    pub fn train_config(&self, scenario: &Scenario, seed: u64) -> Result<TrainConfig> {
        let mut t = self.train.clone();
        t.seed = seed;
        match &self.variant {
            VariantSpec::Single(v) => {
                t.correction = v.correction();
                t.agent_corrections = None;
                t.fingerprint = v.fingerprint();
            }
            VariantSpec::Teams(by_team) => {
                if scenario.kind != ScenarioKind::CovertComm {
                    bail!("per-team variants are only allowed for covert_comm");
                }
                let teams = scenario.teams();
                let names: Vec<&str> = teams.iter().map(|(n, _)| *n).collect();
                for k in by_team.keys() {
                    if !names.contains(&k.as_str()) {
                        bail!("unknown team `{k}`, expected {names:?}");
                    }
                }
                let mut modes = vec![CorrectionMode::None; scenario.n_agents()];
                let mut fps = Vec::new();
                for (name, members) in &teams {
                    let v = *by_team
                        .get(*name)
                        .with_context(|| format!("variant missing for team `{name}`"))?;
                    fps.push(v.fingerprint());
                    for &m in members {
                        modes[m] = v.correction();
                    }
                }
                if fps.iter().any(|&f| f != fps[0]) {
                    bail!("maddpg+fp must be used by every team or none");
                }
                t.correction = CorrectionMode::None;
                t.agent_corrections = Some(modes);
                t.fingerprint = fps[0];
            }
        }
        Ok(t)
    }
}

/// Parses `0,1,2`, `0..5` or a mix such as `0..3,10`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let (a, b): (u64, u64) = (a.parse()?, b.parse()?);
            if a >= b {
                bail!("empty seed range `{part}`");
            }
            out.extend(a..b);
        } else {
            out.push(part.parse().with_context(|| format!("bad seed `{part}`"))?);
        }
    }
    if out.is_empty() {
        bail!("no seeds in `{text}`");
    }
    Ok(out)
}

pub fn parse_floats(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<f64>().with_context(|| format!("bad number `{p}`")))
        .collect()
}
