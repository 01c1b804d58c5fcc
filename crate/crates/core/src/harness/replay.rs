//! Re-executing logged runs against their world.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::runlog::{read_log, EventRecord, ParsedLog};
use super::HarnessError;
use crate::episode::{reset, step, EpisodeState, History, Observation};
use crate::metrics::{summarize_run, RunLabels, RunSummary};
use crate::oracle::{
    build_graph, exploit_series, exploit_value, ExploitSolution, ExploitTracker, Granularity,
};
use crate::worldgen::WorldSpec;

/// First disagreement between a log and the engine.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub episode: usize,
    /// Step within the episode; `None` for episode-level and footer fields.
    pub step: Option<usize>,
    pub field: String,
    pub logged: String,
    pub replayed: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub passed: bool,
    pub episodes: usize,
    pub events: usize,
    pub divergence: Option<Divergence>,
}

struct Check {
    episode: usize,
    step: Option<usize>,
}

impl Check {
    fn eq<T: PartialEq + std::fmt::Debug>(
        &self,
        field: &str,
        logged: &T,
        replayed: &T,
    ) -> Result<(), Divergence> {
        if logged == replayed {
            Ok(())
        } else {
            Err(Divergence {
                episode: self.episode,
                step: self.step,
                field: field.to_string(),
                logged: format!("{logged:?}"),
                replayed: format!("{replayed:?}"),
            })
        }
    }
}

fn verify_events(
    episode: usize,
    events: &[EventRecord],
    world: &WorldSpec,
    tracker: &mut ExploitTracker,
) -> Result<(EpisodeState, Observation), Divergence> {
    let (mut state, mut observation) = reset(world);
    for (i, record) in events.iter().enumerate() {
        let check = Check {
            episode,
            step: Some(i),
        };
        check.eq("done", &false, &state.done)?;
        check.eq("room", &record.room, &observation.room)?;
        check.eq("observation", &record.observation, &observation.visible)?;
        let outcome = step(&state, world, &record.action).map_err(|e| Divergence {
            episode,
            step: Some(i),
            field: "action".into(),
            logged: record.action.to_string(),
            replayed: e.to_string(),
        })?;
        check.eq("reward", &record.reward, &outcome.reward)?;
        check.eq("doors_used", &record.doors_used, &outcome.state.doors_used)?;
        check.eq(
            "balls_collected",
            &record.balls_collected,
            &outcome.state.balls_collected,
        )?;
        let exploit = tracker
            .record(&record.event(), &outcome.observation, world)
            .map_err(|e| Divergence {
                episode,
                step: Some(i),
                field: "exploit_return_after".into(),
                logged: record.exploit_return_after.to_string(),
                replayed: e.to_string(),
            })?;
        check.eq(
            "exploit_return_after",
            &record.exploit_return_after,
            &exploit,
        )?;
        state = outcome.state;
        observation = outcome.observation;
    }
    Ok((state, observation))
}

/// Checks every logged interaction, episode end and the footer against `world`.
pub fn verify_log(parsed: &ParsedLog, world: &WorldSpec) -> Verdict {
    let events = parsed
        .episodes
        .iter()
        .map(|e| e.events.len())
        .sum::<usize>()
        + parsed.partial.len();
    let verdict = |divergence: Option<Divergence>| Verdict {
        passed: divergence.is_none(),
        episodes: parsed.episodes.len(),
        events,
        divergence,
    };
    match check_log(parsed, world) {
        Ok(()) => verdict(None),
        Err(d) => verdict(Some(d)),
    }
}

fn check_log(parsed: &ParsedLog, world: &WorldSpec) -> Result<(), Divergence> {
    let header = Check {
        episode: 0,
        step: None,
    };
    header.eq("world_hash", &parsed.header.world_hash, &world.hash())?;
    header.eq("r_max", &parsed.header.r_max, &world.r_max)?;
    header.eq(
        "door_budget",
        &parsed.header.door_budget,
        &world.door_budget,
    )?;

    let mut tracker = ExploitTracker::new(world);
    for logged in &parsed.episodes {
        let episode = logged.end.episode;
        let (state, observation) = verify_events(episode, &logged.events, world, &mut tracker)?;
        let check = Check {
            episode,
            step: None,
        };
        check.eq("done", &true, &state.done)?;
        check.eq("final_room", &logged.end.final_room, &observation.room)?;
        check.eq(
            "final_observation",
            &logged.end.final_observation,
            &observation.visible,
        )?;
        check.eq(
            "episode_return",
            &logged.end.episode_return,
            &state.episode_return,
        )?;
        check.eq(
            "exploit_return",
            &logged.end.exploit_return,
            &tracker.value(),
        )?;
    }
    if !parsed.partial.is_empty() {
        verify_events(
            parsed.episodes.len() + 1,
            &parsed.partial,
            world,
            &mut tracker,
        )?;
    }

    if let Some(footer) = &parsed.footer {
        let check = Check {
            episode: parsed.episodes.len(),
            step: None,
        };
        let logged = &footer.summary;
        let labels = RunLabels {
            model: logged.model.clone(),
            instruction: logged.instruction.clone(),
            run_seed: logged.run_seed,
        };
        let recomputed = summarize_run(
            world,
            &parsed.history(),
            &parsed.exploit_series(),
            &parsed.invalid_per_episode(),
            &labels,
        )
        .map_err(|e| Divergence {
            episode: check.episode,
            step: None,
            field: "summary".into(),
            logged: String::new(),
            replayed: e.to_string(),
        })?;
        // Compare through JSON so both sides carry identical float rounding.
        let recomputed: RunSummary =
            serde_json::from_str(&serde_json::to_string(&recomputed).expect("summary serializes"))
                .expect("summary parses");
        check.eq("summary", logged, &recomputed)?;
    }
    Ok(())
}

/// Loads a log and verifies it against `world`. Fails outright when the
/// log was written for a different world.
pub fn replay(log_path: impl AsRef<Path>, world: &WorldSpec) -> Result<Verdict, HarnessError> {
    let parsed = read_log(log_path)?;
    let hash = world.hash();
    if parsed.header.world_hash != hash {
        return Err(HarnessError::HashMismatch {
            logged: parsed.header.world_hash,
            actual: hash,
        });
    }
    Ok(verify_log(&parsed, world))
}

/// Oracle values for a world, optionally along a logged history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOutput {
    pub world_id: String,
    pub r_max: u32,
    pub per_episode: Vec<u32>,
    pub per_interaction: Vec<u32>,
    /// Best route given everything the history revealed.
    pub final_solution: ExploitSolution,
}

pub fn solve(world: &WorldSpec, log_path: Option<&Path>) -> Result<SolveOutput, HarnessError> {
    let history = match log_path {
        Some(path) => read_log(path)?.history(),
        None => History::new(),
    };
    let graph = build_graph(&history, world)?;
    Ok(SolveOutput {
        world_id: world.world_id.clone(),
        r_max: world.r_max,
        per_episode: exploit_series(&history, world, Granularity::PerEpisode)?,
        per_interaction: exploit_series(&history, world, Granularity::PerInteraction)?,
        final_solution: exploit_value(&graph, world),
    })
}
