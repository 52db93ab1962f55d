use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use commrelabel_cli::config::{parse_floats, parse_seeds, RunConfig};
use commrelabel_cli::correlation::{cmd_correlation, CorrelationOptions, DEFAULT_SAMPLES};
use commrelabel_cli::eval::{cmd_eval, EvalOptions, DEFAULT_EVAL_EPISODES};
use commrelabel_cli::plot::{cmd_plot, PlotOptions, DEFAULT_WINDOW};
use commrelabel_cli::run::{cmd_covert_nokey, cmd_train, TrainOverrides, RANDOM_ADVERSARY_REWARD};

#[derive(Parser)]
#[command(name = "commrelabel", version, about = "MADDPG with relabelled communication: experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma list or range, e.g. `0..5` or `1,3,7`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the number of training episodes.
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a run configuration.
    Train(TrainArgs),
    /// Covert communication with the key withheld from the allies.
    CovertNokey(TrainArgs),
    /// Greedy evaluation of a checkpoint, optionally over drop probabilities.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Run config whose scenario must match the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma list of message drop probabilities.
        #[arg(long = "drop-p", default_value = "0")]
        drop_p: String,
        #[arg(long, default_value_t = DEFAULT_EVAL_EPISODES)]
        episodes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also dump this many greedy episodes to trajectories.csv.
        #[arg(long, default_value_t = 0)]
        trajectories: usize,
    },
    /// Correlation matrices of joint messages before and after relabelling.
    Correlation {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Checkpoint saved with its replay buffer, sampled instead of the
        /// early-training snapshot.
        #[arg(long)]
        buffer: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Reward curves (mean ± sem) from run directories.
    Plot {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
    },
}

fn overrides(a: &TrainArgs) -> Result<TrainOverrides> {
    Ok(TrainOverrides {
        seeds: a.seeds.as_deref().map(parse_seeds).transpose()?,
        out: a.out.clone(),
        episodes: a.episodes,
        quiet: a.quiet,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => {
            let cfg = RunConfig::load(&a.config)?;
            let dir = cmd_train(&cfg, &overrides(&a)?, "train")?;
            println!("run complete: {}", dir.display());
        }
        Command::CovertNokey(a) => {
            let cfg = RunConfig::load(&a.config)?;
            let dir = cmd_covert_nokey(&cfg, &overrides(&a)?)?;
            println!("run complete: {}", dir.display());
            println!("reference: allies reward against a random adversary = {RANDOM_ADVERSARY_REWARD}");
        }
        Command::Eval {
            checkpoint,
            config,
            drop_p,
            episodes,
            out,
            seed,
            trajectories,
        } => {
            let config = config.as_deref().map(RunConfig::load).transpose()?;
            let (dir, rows) = cmd_eval(&EvalOptions {
                checkpoint,
                config,
                drop_ps: parse_floats(&drop_p)?,
                episodes,
                out,
                seed,
                trajectories,
            })?;
            println!("drop_p\tteam\tmean\tstderr");
            for r in rows {
                println!("{}\t{}\t{:.4}\t{:.4}", r.drop_p, r.team, r.mean, r.stderr);
            }
            println!("written to {}", dir.display());
        }
        Command::Correlation {
            checkpoint,
            buffer,
            samples,
            out,
            seed,
        } => {
            let (dir, report) = cmd_correlation(&CorrelationOptions {
                checkpoint,
                buffer,
                samples,
                out,
                seed,
            })?;
            println!("sampling\tset\treference\tfrobenius");
            for d in &report.distances {
                println!("{}\t{}\t{}\t{:.6}", d.sampling, d.a, d.b, d.distance);
            }
            println!("written to {}", dir.display());
        }
        Command::Plot { runs, out, window } => {
            let dir = cmd_plot(&PlotOptions { runs, out, window })?;
            println!("plots written to {}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
