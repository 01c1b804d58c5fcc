use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use explorebench::harness::{
    load_summaries, render_report, replay, run_all, solve, write_report, ExperimentConfig, Layout,
    WorldRef,
};
use explorebench::worldgen::{GridDims, WorldKind, WorldSpec};

#[derive(Parser)]
#[command(
    name = "explorebench",
    version,
    about = "Exploration benchmark for text agents in grid worlds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a world and write it as JSON.
    Generate {
        #[arg(long, default_value = "treasure_rooms")]
        kind: WorldKind,
        #[arg(long, default_value = "4x4")]
        dims: GridDims,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        p_drop: Option<f64>,
        #[arg(long)]
        p_ball: Option<f64>,
        #[arg(long)]
        n_balls: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every configuration of an experiment file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Continue unfinished logs after their last complete episode.
        #[arg(long)]
        resume: bool,
        /// Concurrent runs; overrides the config file.
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Print oracle values for a world, optionally along a logged history.
    Solve {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Aggregate finished logs into a CSV table.
    Report {
        #[arg(long, default_value = "runs/*.jsonl")]
        glob: String,
        #[arg(long, default_value = "gaps_table")]
        layout: Layout,
        /// Average gaps normalized by each world's maximum return.
        #[arg(long)]
        normalize: bool,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-execute a log against its world and report the first divergence.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        world: PathBuf,
    },
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate {
            kind,
            dims,
            seed,
            p_drop,
            p_ball,
            n_balls,
            out,
        } => {
            let mut world = WorldRef::generated(kind, dims, seed);
            if let Some(p) = p_drop {
                world.p_drop = p;
            }
            if let Some(p) = p_ball {
                world.p_ball = p;
            }
            if let Some(n) = n_balls {
                world.n_balls = n;
            }
            let world_spec = world.resolve()?;
            world_spec
                .save(&out)
                .with_context(|| format!("writing {}", out.display()))?;
            println!(
                "{}: {} rooms, {} doors, {} balls, budget {}, r_max {}",
                world_spec.world_id,
                world_spec.rooms.len(),
                world_spec.doors.len(),
                world_spec.balls.len(),
                world_spec.door_budget,
                world_spec.r_max
            );
        }
        Command::Run {
            config,
            resume,
            parallelism,
        } => {
            let experiment = ExperimentConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let runs = experiment.runs()?;
            let threads = parallelism.unwrap_or(experiment.parallelism);
            let mut failed = 0;
            for (run, outcome) in runs.iter().zip(run_all(&runs, threads, resume)) {
                match outcome {
                    Ok(o) => println!(
                        "{}: return {:.2} mean, exploit {}/{}, coverage {:.1}% -> {}",
                        o.name,
                        o.summary.agent_return_mean,
                        o.summary.exploit_return_final,
                        o.summary.r_max,
                        o.summary.coverage_pct,
                        o.log_path.display()
                    ),
                    Err(e) => {
                        failed += 1;
                        eprintln!("{}: {e}", run.name);
                    }
                }
            }
            if failed > 0 {
                bail!("{failed} of {} runs failed", runs.len());
            }
        }
        Command::Solve { world, log } => {
            let world_spec = WorldSpec::load(&world)?;
            let output = solve(&world_spec, log.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&output)?);
        }
        Command::Report {
            glob,
            layout,
            normalize,
            out,
        } => {
            let summaries = load_summaries(&glob)?;
            match out {
                Some(path) => write_report(&summaries, layout, normalize, &path)?,
                None => print!("{}", render_report(&summaries, layout, normalize)?),
            }
        }
        Command::Replay { log, world } => {
            let world_spec = WorldSpec::load(&world)?;
            let verdict = replay(&log, &world_spec)?;
            println!("{}", serde_json::to_string_pretty(&verdict)?);
            if !verdict.passed {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
