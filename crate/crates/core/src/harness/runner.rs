use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rayon::prelude::*;

use super::runlog::{read_log, EpisodeEnd, EventRecord, Footer, Header, Record};
use super::{HarnessError, RunConfig};
use crate::agents::{
    GreedyExploiter, LlmPolicy, Policy, PolicyKind, RandomWalk, ScriptedPolicy, SystematicExplorer,
};
use crate::episode::{run_episode_with, EpisodeError, History};
use crate::metrics::{summarize_run, RunLabels, RunSummary};
use crate::oracle::ExploitTracker;
use crate::worldgen::ObjectRef;

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub name: String,
    pub log_path: PathBuf,
    pub world_path: PathBuf,
    pub summary: RunSummary,
    /// Complete episodes found in the log when resuming.
    pub resumed_episodes: usize,
}

pub fn build_policy(config: &RunConfig) -> Result<Box<dyn Policy>, HarnessError> {
    let seed = config.agent.seed;
    Ok(match config.agent.kind {
        PolicyKind::RandomWalk => Box::new(RandomWalk::new(seed)),
        PolicyKind::SystematicExplorer => Box::new(SystematicExplorer::new(seed)),
        PolicyKind::GreedyExploiter => Box::new(GreedyExploiter::new(seed)),
        PolicyKind::Scripted => {
            let script = config
                .agent
                .script
                .as_ref()
                .ok_or_else(|| HarnessError::Config("scripted agent needs `script`".into()))?;
            let parsed = script
                .iter()
                .map(|episode| episode.iter().map(|a| a.parse::<ObjectRef>()).collect())
                .collect::<Result<Vec<Vec<ObjectRef>>, _>>()?;
            Box::new(ScriptedPolicy::new(parsed))
        }
        PolicyKind::Llm => {
            let llm = config
                .agent
                .llm
                .clone()
                .ok_or_else(|| HarnessError::Config("llm agent needs [agent.llm]".into()))?;
            let transport = llm.transport()?;
            Box::new(LlmPolicy::new(
                llm,
                transport,
                config.instruction.clone(),
                config.episodes,
                seed,
            ))
        }
    })
}

fn sink<E: std::fmt::Display>(e: E) -> EpisodeError {
    EpisodeError::Sink(e.to_string())
}

/// Runs one configuration, streaming the log to disk.
///
/// With `resume`, complete episodes of an existing log are kept and the run
/// continues after them. Policies draw from per-episode random streams, so a
/// resumed scripted run ends with the same log as an uninterrupted one.
pub fn run_experiment(config: &RunConfig, resume: bool) -> Result<RunOutcome, HarnessError> {
    config.validate()?;
    let world = config.world.resolve()?;
    std::fs::create_dir_all(&config.output_dir)?;
    let world_path = config.world_path();
    world.save(&world_path)?;
    let log_path = config.log_path();
    let hash = world.hash();
    let mut policy = build_policy(config)?;

    let mut history = History::new();
    let mut series = Vec::new();
    let mut invalid = Vec::new();
    let mut resumed_episodes = 0;
    let file = if resume && log_path.exists() {
        let parsed = read_log(&log_path)?;
        if parsed.header.world_hash != hash {
            return Err(HarnessError::HashMismatch {
                logged: parsed.header.world_hash,
                actual: hash,
            });
        }
        if parsed.header.config != *config {
            return Err(HarnessError::Resume(
                "the log was written with a different configuration".into(),
            ));
        }
        resumed_episodes = parsed.episodes.len();
        if let Some(footer) = parsed.footer {
            return Ok(RunOutcome {
                name: config.name.clone(),
                log_path,
                world_path,
                summary: footer.summary,
                resumed_episodes,
            });
        }
        history = parsed.history();
        series = parsed.exploit_series();
        invalid = parsed.invalid_per_episode();
        let file = OpenOptions::new().write(true).open(&log_path)?;
        file.set_len(parsed.complete_len)?;
        let mut file = OpenOptions::new().append(true).open(&log_path)?;
        file.flush()?;
        file
    } else {
        let mut file = File::create(&log_path)?;
        let header = Record::Header(Header {
            config: config.clone(),
            world_id: world.world_id.clone(),
            world_hash: hash,
            r_max: world.r_max,
            door_budget: world.door_budget,
            started_at: chrono::Utc::now().to_rfc3339(),
        });
        file.write_all(header.to_line().as_bytes())?;
        file
    };
    let mut writer = BufWriter::new(file);
    let mut tracker = ExploitTracker::from_history(&history, &world)?;

    while history.len() < config.episodes {
        let mut episode_invalid = 0;
        let trajectory = run_episode_with(&world, policy.as_mut(), &history, &mut |rec| {
            let exploit = tracker
                .record(rec.event, &rec.outcome.observation, &world)
                .map_err(sink)?;
            series.push(exploit);
            let diagnostics = rec.decision.diagnostics.clone();
            episode_invalid += diagnostics.as_ref().map_or(0, |d| d.invalid_count);
            let record = Record::Event(EventRecord {
                episode: rec.episode_index,
                step: rec.step,
                room: rec.event.observation.room,
                observation: rec.event.observation.visible.clone(),
                raw_reply: diagnostics
                    .as_ref()
                    .and_then(|d| d.raw_replies.last().cloned()),
                action: rec.event.action.clone(),
                reward: rec.event.reward,
                doors_used: rec.outcome.state.doors_used,
                balls_collected: rec.outcome.state.balls_collected,
                exploit_return_after: exploit,
                diagnostics,
            });
            writer.write_all(record.to_line().as_bytes()).map_err(sink)
        })?;
        let end = Record::EpisodeEnd(EpisodeEnd {
            episode: trajectory.episode_index,
            final_room: trajectory.final_observation.room,
            final_observation: trajectory.final_observation.visible.clone(),
            episode_return: trajectory.episode_return(),
            exploit_return: tracker.value(),
        });
        writer.write_all(end.to_line().as_bytes())?;
        writer.flush()?;
        history.append(trajectory)?;
        invalid.push(episode_invalid);
    }

    let labels = RunLabels {
        model: config.agent.label(),
        instruction: config.instruction.id.to_string(),
        run_seed: config.agent.seed,
    };
    let summary = summarize_run(&world, &history, &series, &invalid, &labels)?;
    for report in summary
        .per_episode
        .iter()
        .map(|e| &e.gaps)
        .chain([&summary.last, &summary.mean])
    {
        if report.identity_residual() > 1e-9 {
            return Err(HarnessError::Metrics(
                crate::metrics::MetricsError::Ordering {
                    r_max: report.r_max,
                    r_exploit: report.r_max - report.raw.explore,
                    r_agent: report.r_max - report.raw.total,
                },
            ));
        }
    }
    writer.write_all(
        Record::Footer(Footer {
            summary: summary.clone(),
        })
        .to_line()
        .as_bytes(),
    )?;
    writer.flush()?;
    Ok(RunOutcome {
        name: config.name.clone(),
        log_path,
        world_path,
        summary,
        resumed_episodes,
    })
}

/// Default concurrency: one thread per run up to the machine's threads,
/// further limited to one run per request-per-second allowed for LLM agents.
pub fn default_parallelism(configs: &[RunConfig]) -> usize {
    let mut n = configs.len().min(rayon::current_num_threads()).max(1);
    for c in configs {
        if let Some(llm) = &c.agent.llm {
            n = n.min((llm.rate_limit as usize / 60).max(1));
        }
    }
    n
}

/// Runs every configuration on a pool of `parallelism` threads (0 for the default).
pub fn run_all(
    configs: &[RunConfig],
    parallelism: usize,
    resume: bool,
) -> Vec<Result<RunOutcome, HarnessError>> {
    let threads = if parallelism == 0 {
        default_parallelism(configs)
    } else {
        parallelism
    };
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| {
            configs
                .par_iter()
                .map(|c| run_experiment(c, resume))
                .collect()
        }),
        Err(_) => configs.iter().map(|c| run_experiment(c, resume)).collect(),
    }
}
