//! WebAssembly bindings for the demo page in `www/`.

use commrelabel::env::Scenario;
use commrelabel::maddpg::{play_episode, ActMode, CurrentPolicies, TrainConfig, Trainer};
use commrelabel::nn::gumbel::{argmax, gumbel_softmax, softmax};
use commrelabel::replay::{CorrectionMode, MessageSampling};
use commrelabel::RngStream;
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Counts of hard Gumbel-softmax samples per category.
#[wasm_bindgen]
pub fn gumbel_histogram(logits: &[f64], beta: f64, draws: u32, seed: u64) -> Result<Vec<u32>, JsError> {
    let mut rng = RngStream::new(seed);
    let mut counts = vec![0u32; logits.len()];
    for _ in 0..draws {
        counts[gumbel_softmax(logits, beta, &mut rng).map_err(js_err)?.index()] += 1;
    }
    Ok(counts)
}

#[wasm_bindgen]
pub fn category_probabilities(logits: &[f64]) -> Vec<f64> {
    softmax(logits)
}

#[derive(Serialize)]
struct Frame {
    agents: Vec<[f64; 2]>,
    /// Chosen symbol per message block, agent-major.
    messages: Vec<usize>,
    reward: f64,
}

#[derive(Serialize)]
struct Trace {
    landmarks: Vec<[f64; 2]>,
    targets: Vec<usize>,
    frames: Vec<Frame>,
    team_return: f64,
}

#[derive(Serialize)]
struct Staleness {
    depth: usize,
    steps: usize,
    /// `mismatch[k][t]`: fraction of message entries at step `t` that differ
    /// from the full-depth relabel after relabelling to depth `k`.
    mismatch: Vec<Vec<f64>>,
}

/// A trainer kept alive between calls.
#[wasm_bindgen]
pub struct Session {
    trainer: Trainer,
}

#[wasm_bindgen]
impl Session {
    /// `scenario`: coop | hierarchical. `correction`: none | fcc | occ.
    #[wasm_bindgen(constructor)]
    pub fn new(scenario: &str, correction: &str, seed: u64) -> Result<Session, JsError> {
        let scenario = match scenario {
            "coop" => Scenario::coop_comm(3, 0.0),
            "hierarchical" => Scenario::hierarchical_comm(),
            other => return Err(JsError::new(&format!("unknown scenario {other}"))),
        }
        .map_err(js_err)?;
        let correction = match correction {
            "none" => CorrectionMode::None,
            "fcc" => CorrectionMode::Fcc,
            "occ" => CorrectionMode::Occ,
            other => return Err(JsError::new(&format!("unknown correction {other}"))),
        };
        let config = TrainConfig {
            correction,
            seed,
            episodes: 0,
            ..TrainConfig::default()
        };
        Ok(Session {
            trainer: Trainer::new(scenario, config).map_err(js_err)?,
        })
    }

    /// Trains `episodes` more episodes; returns their mean team return.
    pub fn train(&mut self, episodes: u32) -> Result<f64, JsError> {
        self.trainer.config.episodes += episodes as usize;
        let mut sum = 0.0;
        self.trainer
            .train(|_, m| {
                sum += m.team_returns[0];
                Ok(())
            })
            .map_err(js_err)?;
        Ok(sum / episodes.max(1) as f64)
    }

    #[wasm_bindgen(getter)]
    pub fn episodes(&self) -> u32 {
        self.trainer.episodes_done() as u32
    }

    /// Greedy rollout of the current policies as JSON.
    pub fn rollout(&self, seed: u64) -> Result<String, JsError> {
        let t = &self.trainer;
        let layout = &t.scenario.layout;
        let mut env = RngStream::new(seed);
        let mut act = RngStream::new(seed.wrapping_add(1));
        let mut frames = Vec::new();
        let mut first = None;
        let returns = play_episode(&t.scenario, &t.policies(), ActMode::Greedy, &mut env, &mut act, |s, _, a, out| {
            if first.is_none() {
                first = Some((s.landmarks.clone(), s.targets.clone()));
            }
            let mut messages = Vec::new();
            for (i, al) in layout.agents.iter().enumerate() {
                for (b, &d) in al.message_dims.iter().enumerate() {
                    let o = al.message_offset(b);
                    messages.push(argmax(&a[i][o..o + d]));
                }
            }
            frames.push(Frame {
                agents: s.agent_pos.clone(),
                messages,
                reward: out.rewards.iter().sum::<f64>() / out.rewards.len() as f64,
            });
            Ok(())
        })
        .map_err(js_err)?;
        let (landmarks, targets) = first.unwrap_or_default();
        let team_return = commrelabel::maddpg::team_returns(&t.scenario, &returns)[0];
        serde_json::to_string(&Trace {
            landmarks,
            targets,
            frames,
            team_return,
        })
        .map_err(js_err)
    }

    /// Relabels the oldest stored episodes with the current policies at
    /// every depth and reports how far each falls short of the deepest.
    pub fn staleness(&self, episodes: u32) -> Result<String, JsError> {
        let t = &self.trainer;
        let len = t.scenario.episode_len;
        let stored = t.buffer.len() / len;
        let n = (episodes as usize).min(stored);
        if n == 0 {
            return Err(JsError::new("train at least one episode first"));
        }
        let depth = t.scenario.graph.correction_depth().max(1);
        let start = t.buffer.oldest();
        let indices: Vec<u64> = (start..start + (n * len) as u64).collect();
        let window = t.buffer.window(&indices, depth).map_err(js_err)?;
        let policy = CurrentPolicies {
            agents: &t.agents,
            layout: &t.scenario.layout,
        };
        let mut relabeller = t.relabeller();
        relabeller.sampling = MessageSampling::Greedy;
        let mut rng = RngStream::new(0);
        let layout = &t.scenario.layout;
        let mut sets = vec![layout.joint_messages(&window.actions)];
        for k in 1..=depth {
            let r = relabeller.occ_relabel(&window, &policy, k, &mut rng).map_err(js_err)?;
            sets.push(layout.joint_messages(&r.actions));
        }
        let exact = &sets[depth];
        let width = exact.cols;
        let mismatch = sets
            .iter()
            .map(|m| {
                (0..len)
                    .map(|step| {
                        let mut wrong = 0;
                        for e in 0..n {
                            let r = e * len + step;
                            wrong += m.row(r).iter().zip(exact.row(r)).filter(|(a, b)| a != b).count();
                        }
                        wrong as f64 / (n * width) as f64
                    })
                    .collect()
            })
            .collect();
        serde_json::to_string(&Staleness {
            depth,
            steps: len,
            mismatch,
        })
        .map_err(js_err)
    }
}
