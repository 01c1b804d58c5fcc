//! Policies that choose the next object to interact with.

mod exploiter;
mod explorer;
pub mod llm;

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{EpisodeState, Event, History, Observation};
use crate::oracle::OracleError;
use crate::worldgen::{ObjectRef, WorldSpec};

pub use exploiter::GreedyExploiter;
pub use explorer::SystematicExplorer;
pub use llm::{
    exploit_comparison, llm_exploiter_eval, ChatMessage, ChatRequest, ChatTransport,
    ComparisonPoint, HttpTransport, LlmConfig, LlmDiagnostics, LlmPolicy, MockTransport,
};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("no legal actions")]
    NoLegalActions,
    #[error("script exhausted at episode {episode}, step {step}")]
    ScriptExhausted { episode: usize, step: usize },
    #[error("planned action {0} is not legal")]
    PlanDiverged(ObjectRef),
    #[error("transport: {0}")]
    Transport(String),
    #[error("llm configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    RandomWalk,
    SystematicExplorer,
    GreedyExploiter,
    Llm,
    Scripted,
}

impl PolicyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::RandomWalk => "random_walk",
            PolicyKind::SystematicExplorer => "systematic_explorer",
            PolicyKind::GreedyExploiter => "greedy_exploiter",
            PolicyKind::Llm => "llm",
            PolicyKind::Scripted => "scripted",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything a policy may look at when choosing an action.
#[derive(Clone, Copy, Debug)]
pub struct DecisionContext<'a> {
    pub world: &'a WorldSpec,
    pub history: &'a History,
    /// 1-based index of the running episode.
    pub episode_index: usize,
    /// Interactions so far in this episode.
    pub events: &'a [Event],
    pub state: &'a EpisodeState,
    pub observation: &'a Observation,
    pub legal: &'a [ObjectRef],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action: ObjectRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<LlmDiagnostics>,
}

impl Decision {
    pub fn plain(action: ObjectRef) -> Self {
        Self {
            action,
            diagnostics: None,
        }
    }
}

pub trait Policy: Send {
    fn name(&self) -> &str;
    fn kind(&self) -> PolicyKind;
    /// Called once before each episode.
    fn begin_episode(&mut self, _world: &WorldSpec, _history: &History, _episode_index: usize) {}
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision, AgentError>;
}

/// Uniform choice over `legal`.
pub fn random_walk_policy<R: Rng + ?Sized>(
    legal: &[ObjectRef],
    rng: &mut R,
) -> Result<ObjectRef, AgentError> {
    legal.choose(rng).cloned().ok_or(AgentError::NoLegalActions)
}

/// Generator for episode `episode_index` of a run seeded with `seed`.
///
/// Each episode draws from its own stream so a run resumed at an episode
/// boundary continues with exactly the same choices.
pub fn episode_rng(seed: u64, episode_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode_index as u64);
    rng
}

pub struct RandomWalk {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomWalk {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: episode_rng(seed, 0),
        }
    }
}

impl Policy for RandomWalk {
    fn name(&self) -> &str {
        "random_walk"
    }

    fn kind(&self) -> PolicyKind {
        PolicyKind::RandomWalk
    }

    fn begin_episode(&mut self, _: &WorldSpec, _: &History, episode_index: usize) {
        self.rng = episode_rng(self.seed, episode_index);
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision, AgentError> {
        random_walk_policy(ctx.legal, &mut self.rng).map(Decision::plain)
    }
}

/// Replays fixed per-episode action lists.
pub struct ScriptedPolicy {
    scripts: Vec<Vec<ObjectRef>>,
}

impl ScriptedPolicy {
    pub fn new(scripts: Vec<Vec<ObjectRef>>) -> Self {
        Self { scripts }
    }
}

impl Policy for ScriptedPolicy {
    fn name(&self) -> &str {
        "scripted"
    }

    fn kind(&self) -> PolicyKind {
        PolicyKind::Scripted
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision, AgentError> {
        let step = ctx.events.len();
        self.scripts
            .get(ctx.episode_index - 1)
            .and_then(|s| s.get(step))
            .cloned()
            .map(Decision::plain)
            .ok_or(AgentError::ScriptExhausted {
                episode: ctx.episode_index,
                step,
            })
    }
}
