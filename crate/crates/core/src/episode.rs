//! Episodic room-world engine.
//!
//! Door traversals consume the per-episode budget; ball pickups do not. An
//! episode ends when three balls are collected, when the agent tries to walk
//! through a door with no budget left, or when the budget is spent and the
//! current room holds no ball.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentError, Decision, DecisionContext, Policy};
use crate::worldgen::{ObjectKind, ObjectRef, RoomId, WorldSpec};

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("episode is already finished")]
    Done,
    #[error("{action} is not available in {room}")]
    IllegalAction { action: ObjectRef, room: RoomId },
    #[error("trajectory index {got} does not follow history of length {len}")]
    IndexMismatch { len: usize, got: usize },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("step sink failed: {0}")]
    Sink(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub room: RoomId,
    pub visible: Vec<ObjectRef>,
}

/// How the agent came to see its current observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arrival {
    /// Start of the episode.
    Reset,
    /// Walked through a door into a new room.
    Door,
    /// Picked up a ball and stayed in the room.
    Pickup,
    /// Tried a door with no budget left; the episode ended in place.
    Blocked,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpisodeState {
    pub world_id: String,
    pub current_room: RoomId,
    /// Door the agent last arrived through; selects the room view.
    pub entered_via: Option<String>,
    pub doors_used: u32,
    pub balls_collected: u32,
    pub collected: BTreeSet<String>,
    pub episode_return: u32,
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub observation: Observation,
    pub action: ObjectRef,
    pub reward: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    /// 1-based episode number.
    pub episode_index: usize,
    pub events: Vec<Event>,
    pub final_observation: Observation,
}

impl Trajectory {
    pub fn episode_return(&self) -> u32 {
        self.events.iter().map(|e| e.reward).sum()
    }

    /// Observation following event `i`.
    pub fn observation_after(&self, i: usize) -> &Observation {
        self.events
            .get(i + 1)
            .map(|e| &e.observation)
            .unwrap_or(&self.final_observation)
    }

    /// How the agent arrived at the observation following event `i`.
    pub fn arrival_after(&self, i: usize) -> Arrival {
        let event = &self.events[i];
        match event.action.kind {
            ObjectKind::Ball => Arrival::Pickup,
            ObjectKind::Door if self.observation_after(i).room == event.observation.room => {
                Arrival::Blocked
            }
            ObjectKind::Door => Arrival::Door,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct History {
    pub trajectories: Vec<Trajectory>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Appends the next trajectory; its index must be `len + 1`.
    pub fn append(&mut self, trajectory: Trajectory) -> Result<(), EpisodeError> {
        if trajectory.episode_index != self.len() + 1 {
            return Err(EpisodeError::IndexMismatch {
                len: self.len(),
                got: trajectory.episode_index,
            });
        }
        self.trajectories.push(trajectory);
        Ok(())
    }

    /// The first `n` trajectories.
    pub fn prefix(&self, n: usize) -> History {
        History {
            trajectories: self.trajectories[..n.min(self.len())].to_vec(),
        }
    }

    pub fn interactions(&self) -> usize {
        self.trajectories.iter().map(|t| t.events.len()).sum()
    }
}

/// Returns a new history with `trajectory` appended.
pub fn append_history(history: &History, trajectory: Trajectory) -> Result<History, EpisodeError> {
    let mut next = history.clone();
    next.append(trajectory)?;
    Ok(next)
}

pub fn reset(world: &WorldSpec) -> (EpisodeState, Observation) {
    let mut state = EpisodeState {
        world_id: world.world_id.clone(),
        current_room: world.start_room,
        entered_via: None,
        doors_used: 0,
        balls_collected: 0,
        collected: BTreeSet::new(),
        episode_return: 0,
        done: false,
    };
    state.done = budget_spent_in_empty_room(&state, world);
    let observation = observe(&state, world);
    (state, observation)
}

/// Objects present in the agent's room, in view order.
pub fn observe(state: &EpisodeState, world: &WorldSpec) -> Observation {
    let visible = world
        .view(state.current_room, state.entered_via.as_deref())
        .iter()
        .filter(|o| !(o.is_ball() && state.collected.contains(&o.color)))
        .cloned()
        .collect();
    Observation {
        room: state.current_room,
        visible,
    }
}

pub fn legal_actions(
    state: &EpisodeState,
    world: &WorldSpec,
) -> Result<Vec<ObjectRef>, EpisodeError> {
    if state.done {
        return Err(EpisodeError::Done);
    }
    Ok(observe(state, world).visible)
}

fn budget_spent_in_empty_room(state: &EpisodeState, world: &WorldSpec) -> bool {
    state.doors_used >= world.door_budget
        && !world
            .balls
            .iter()
            .any(|b| b.room == state.current_room && !state.collected.contains(&b.color))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub state: EpisodeState,
    pub observation: Observation,
    pub reward: u32,
    pub done: bool,
    pub arrival: Arrival,
}

/// Applies `action`. On error the caller's state is untouched.
pub fn step(
    state: &EpisodeState,
    world: &WorldSpec,
    action: &ObjectRef,
) -> Result<StepOutcome, EpisodeError> {
    if state.done {
        return Err(EpisodeError::Done);
    }
    let illegal = || EpisodeError::IllegalAction {
        action: action.clone(),
        room: state.current_room,
    };
    let mut next = state.clone();
    let (reward, arrival) = match action.kind {
        ObjectKind::Door => {
            let door = world.door(&action.color).ok_or_else(illegal)?;
            let target = door.other(state.current_room).ok_or_else(illegal)?;
            if state.doors_used >= world.door_budget {
                next.done = true;
                (0, Arrival::Blocked)
            } else {
                next.current_room = target;
                next.entered_via = Some(door.color.clone());
                next.doors_used += 1;
                (0, Arrival::Door)
            }
        }
        ObjectKind::Ball => {
            let ball = world.ball(&action.color).ok_or_else(illegal)?;
            if ball.room != state.current_room || state.collected.contains(&ball.color) {
                return Err(illegal());
            }
            next.collected.insert(ball.color.clone());
            next.balls_collected += 1;
            next.episode_return += ball.reward;
            (ball.reward, Arrival::Pickup)
        }
    };
    if next.balls_collected >= world.max_balls_per_episode
        || budget_spent_in_empty_room(&next, world)
    {
        next.done = true;
    }
    let observation = observe(&next, world);
    Ok(StepOutcome {
        done: next.done,
        state: next,
        observation,
        reward,
        arrival,
    })
}

/// Everything known about one interaction, passed to step observers.
#[derive(Clone, Debug)]
pub struct StepRecord<'a> {
    pub episode_index: usize,
    /// 0-based position within the episode.
    pub step: usize,
    pub event: &'a Event,
    pub decision: &'a Decision,
    pub outcome: &'a StepOutcome,
}

/// Runs one episode of `policy` against `world`.
pub fn run_episode(
    world: &WorldSpec,
    policy: &mut dyn Policy,
    history: &History,
) -> Result<Trajectory, EpisodeError> {
    run_episode_with(world, policy, history, &mut |_| Ok(()))
}

/// Like [`run_episode`], reporting every interaction to `on_step` as it happens.
pub fn run_episode_with(
    world: &WorldSpec,
    policy: &mut dyn Policy,
    history: &History,
    on_step: &mut dyn FnMut(&StepRecord<'_>) -> Result<(), EpisodeError>,
) -> Result<Trajectory, EpisodeError> {
    let episode_index = history.len() + 1;
    policy.begin_episode(world, history, episode_index);
    let (mut state, mut observation) = reset(world);
    let mut events: Vec<Event> = Vec::new();
    while !state.done {
        let legal = legal_actions(&state, world)?;
        let decision = policy.decide(&DecisionContext {
            world,
            history,
            episode_index,
            events: &events,
            state: &state,
            observation: &observation,
            legal: &legal,
        })?;
        if !legal.contains(&decision.action) {
            return Err(EpisodeError::IllegalAction {
                action: decision.action,
                room: state.current_room,
            });
        }
        let outcome = step(&state, world, &decision.action)?;
        events.push(Event {
            observation: observation.clone(),
            action: decision.action.clone(),
            reward: outcome.reward,
        });
        on_step(&StepRecord {
            episode_index,
            step: events.len() - 1,
            event: events.last().expect("just pushed"),
            decision: &decision,
            outcome: &outcome,
        })?;
        state = outcome.state;
        observation = outcome.observation;
    }
    Ok(Trajectory {
        episode_index,
        events,
        final_observation: observation,
    })
}

/// Re-executes recorded actions, returning the trajectory the engine produces.
pub fn replay_actions(
    world: &WorldSpec,
    episode_index: usize,
    actions: &[ObjectRef],
) -> Result<Trajectory, EpisodeError> {
    let (mut state, mut observation) = reset(world);
    let mut events = Vec::with_capacity(actions.len());
    for action in actions {
        let outcome = step(&state, world, action)?;
        events.push(Event {
            observation,
            action: action.clone(),
            reward: outcome.reward,
        });
        state = outcome.state;
        observation = outcome.observation;
    }
    Ok(Trajectory {
        episode_index,
        events,
        final_observation: observation,
    })
}
