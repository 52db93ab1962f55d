//! `plot`: reward curves from one or more run directories.
//!
//! Each seed's team return is smoothed with a trailing mean over `window`
//! episodes; curves show the mean over seeds with a band of ± one standard
//! error of the mean. A second chart shows every seed's smoothed trace.
//! Both are pure functions of `metrics.csv` (and the variant label in the
//! manifest, when present).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::manifest::RunManifest;
use crate::run::METRICS_FILE;
use crate::stats::{mean, sem, trailing_mean};
use crate::svg::{LineChart, Series};

pub const DEFAULT_WINDOW: usize = 500;

/// Team return traces per seed, in episode order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunCurves {
    pub label: String,
    pub unit: String,
    /// Team name → seed → returns.
    pub teams: BTreeMap<String, Vec<(u64, Vec<f64>)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub episodes: Vec<f64>,
    pub mean: Vec<f64>,
    pub sem: Vec<f64>,
    pub n: usize,
}

pub fn read_metrics(path: &Path) -> Result<BTreeMap<String, Vec<(u64, Vec<f64>)>>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let team_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("return_") && !h.starts_with("return_agent"))
        .map(|(i, h)| (i, h["return_".len()..].to_string()))
        .collect();
    let mut missing = Vec::new();
    for need in ["seed", "episode"] {
        if col(need).is_none() {
            missing.push(need.to_string());
        }
    }
    if team_cols.is_empty() {
        missing.push("return_<team>".to_string());
    }
    if !missing.is_empty() {
        bail!("{} is missing columns: {}", path.display(), missing.join(", "));
    }
    let (si, ei) = (col("seed").unwrap(), col("episode").unwrap());
    let mut by_seed: Vec<(u64, Vec<(u64, Vec<f64>)>)> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let seed: u64 = rec[si].parse().context("bad seed cell")?;
        let episode: u64 = rec[ei].parse().context("bad episode cell")?;
        let vals = team_cols
            .iter()
            .map(|(i, _)| rec[*i].parse::<f64>().context("bad return cell"))
            .collect::<Result<Vec<_>>>()?;
        match by_seed.iter_mut().find(|(s, _)| *s == seed) {
            Some((_, v)) => v.push((episode, vals)),
            None => by_seed.push((seed, vec![(episode, vals)])),
        }
    }
    let mut teams: BTreeMap<String, Vec<(u64, Vec<f64>)>> = BTreeMap::new();
    for (seed, mut rows) in by_seed {
        rows.sort_by_key(|(e, _)| *e);
        for (k, (_, team)) in team_cols.iter().enumerate() {
            teams
                .entry(team.clone())
                .or_default()
                .push((seed, rows.iter().map(|(_, v)| v[k]).collect()));
        }
    }
    Ok(teams)
}

pub fn load_run(dir: &Path) -> Result<RunCurves> {
    let teams = read_metrics(&dir.join(METRICS_FILE))?;
    let (label, unit) = match RunManifest::read(dir) {
        Ok(m) => (m.variant, m.reporting_unit),
        Err(_) => (
            dir.file_name().map_or_else(|| "run".to_string(), |n| n.to_string_lossy().into_owned()),
            "return".to_string(),
        ),
    };
    Ok(RunCurves { label, unit, teams })
}

/// Mean ± sem over seeds of the smoothed traces, truncated to the shortest.
pub fn aggregate(seeds: &[(u64, Vec<f64>)], window: usize) -> Aggregate {
    let smoothed: Vec<Vec<f64>> = seeds.iter().map(|(_, v)| trailing_mean(v, window)).collect();
    let len = smoothed.iter().map(Vec::len).min().unwrap_or(0);
    let mut out = Aggregate {
        episodes: Vec::with_capacity(len),
        mean: Vec::with_capacity(len),
        sem: Vec::with_capacity(len),
        n: seeds.len(),
    };
    for i in 0..len {
        let col: Vec<f64> = smoothed.iter().map(|s| s[i]).collect();
        out.episodes.push((i + 1) as f64);
        out.mean.push(mean(&col));
        out.sem.push(sem(&col));
    }
    out
}

/// Keeps at most `max` evenly spaced points so large runs stay small.
fn thin(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    let mut idx: Vec<usize> = (0..max).map(|i| i * (n - 1) / (max - 1)).collect();
    idx.dedup();
    idx
}

pub struct PlotOptions {
    pub runs: Vec<PathBuf>,
    pub out: Option<PathBuf>,
    pub window: usize,
}

/// Writes `reward_curves.svg`, `seed_traces.svg` and `curves.csv`.
pub fn cmd_plot(opts: &PlotOptions) -> Result<PathBuf> {
    if opts.runs.is_empty() {
        bail!("no run directories given");
    }
    let runs = opts.runs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>>>()?;
    let out = opts.out.clone().unwrap_or_else(|| opts.runs[0].join("plots"));
    std::fs::create_dir_all(&out)?;
    let window = opts.window.max(1);
    let note = format!("trailing mean over {window} episodes; band = ±1 s.e.m. over seeds");
    let multi_team = runs.iter().any(|r| r.teams.len() > 1);
    let mut series = Vec::new();
    let mut csv = csv::Writer::from_path(out.join("curves.csv"))?;
    csv.write_record(["run", "team", "episode", "mean", "sem", "n_seeds", "window"])?;
    for run in &runs {
        for (team, seeds) in &run.teams {
            let agg = aggregate(seeds, window);
            for i in 0..agg.mean.len() {
                csv.write_record([
                    run.label.clone(),
                    team.clone(),
                    agg.episodes[i].to_string(),
                    agg.mean[i].to_string(),
                    agg.sem[i].to_string(),
                    agg.n.to_string(),
                    window.to_string(),
                ])?;
            }
            let keep = thin(agg.mean.len(), 1500);
            let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let (m, s) = (pick(&agg.mean), pick(&agg.sem));
            let lo = m.iter().zip(&s).map(|(a, b)| a - b).collect();
            let hi = m.iter().zip(&s).map(|(a, b)| a + b).collect();
            series.push(Series {
                label: if multi_team {
                    format!("{} ({team}, n={})", run.label, agg.n)
                } else {
                    format!("{} (n={})", run.label, agg.n)
                },
                x: pick(&agg.episodes),
                y: m,
                band: Some((lo, hi)),
            });
        }
    }
    csv.flush()?;
    let unit = runs[0].unit.clone();
    let chart = LineChart {
        title: "Training reward".into(),
        x_label: "episode".into(),
        y_label: unit.clone(),
        note: Some(note.clone()),
        series,
    };
    std::fs::write(out.join("reward_curves.svg"), chart.render())?;

    let mut traces = Vec::new();
    for run in &runs {
        for (team, seeds) in &run.teams {
            for (seed, v) in seeds {
                let s = trailing_mean(v, window);
                let keep = thin(s.len(), 800);
                traces.push(Series {
                    label: format!("{} {team} seed {seed}", run.label),
                    x: keep.iter().map(|&i| (i + 1) as f64).collect(),
                    y: keep.iter().map(|&i| s[i]).collect(),
                    band: None,
                });
            }
        }
    }
    let chart = LineChart {
        title: "Individual seeds".into(),
        x_label: "episode".into(),
        y_label: unit,
        note: Some(format!("trailing mean over {window} episodes")),
        series: traces,
    };
    std::fs::write(out.join("seed_traces.svg"), chart.render())?;
    Ok(out)
}
