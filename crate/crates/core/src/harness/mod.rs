//! Experiment orchestration: configuration, run execution, logs, reports and replay.

mod config;
mod replay;
mod report;
mod runlog;
mod runner;

use thiserror::Error;

pub use config::{AgentSpec, ExperimentConfig, Matrix, RunConfig, WorldRef};
pub use replay::{replay, solve, verify_log, Divergence, SolveOutput, Verdict};
pub use report::{load_summaries, render_report, write_report, Layout};
pub use runlog::{
    history_from_log, read_log, EpisodeEnd, EventRecord, Footer, Header, LoggedEpisode, ParsedLog,
    Record,
};
pub use runner::{build_policy, default_parallelism, run_all, run_experiment, RunOutcome};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("log {path}: {msg}")]
    Log { path: String, msg: String },
    #[error("world hash mismatch: log has {logged}, world is {actual}")]
    HashMismatch { logged: String, actual: String },
    #[error("cannot resume: {0}")]
    Resume(String),
    #[error(transparent)]
    World(#[from] crate::worldgen::WorldError),
    #[error(transparent)]
    Episode(#[from] crate::episode::EpisodeError),
    #[error(transparent)]
    Agent(#[from] crate::agents::AgentError),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Text(#[from] crate::textio::TextError),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Glob(#[from] glob::PatternError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
