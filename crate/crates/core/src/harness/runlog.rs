//! JSONL run logs.
//!
//! A log is a header line, then for each episode its event lines followed by
//! an `episode_end` line, and finally a footer with the run summary. Every
//! line carries a `type` tag.

use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HarnessError, RunConfig};
use crate::agents::LlmDiagnostics;
use crate::episode::{Event, History, Observation, Trajectory};
use crate::metrics::RunSummary;
use crate::worldgen::{ObjectRef, RoomId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub config: RunConfig,
    pub world_id: String,
    pub world_hash: String,
    pub r_max: u32,
    pub door_budget: u32,
    pub started_at: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub episode: usize,
    /// 0-based step within the episode.
    pub step: usize,
    pub room: RoomId,
    pub observation: Vec<ObjectRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_reply: Option<String>,
    pub action: ObjectRef,
    pub reward: u32,
    /// Counters after the action.
    pub doors_used: u32,
    pub balls_collected: u32,
    pub exploit_return_after: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<LlmDiagnostics>,
}

impl EventRecord {
    pub fn event(&self) -> Event {
        Event {
            observation: Observation {
                room: self.room,
                visible: self.observation.clone(),
            },
            action: self.action.clone(),
            reward: self.reward,
        }
    }

    pub fn invalid_count(&self) -> u32 {
        self.diagnostics.as_ref().map_or(0, |d| d.invalid_count)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEnd {
    pub episode: usize,
    pub final_room: RoomId,
    pub final_observation: Vec<ObjectRef>,
    pub episode_return: u32,
    pub exploit_return: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Footer {
    pub summary: RunSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Header(Header),
    Event(EventRecord),
    EpisodeEnd(EpisodeEnd),
    Footer(Footer),
}

impl Record {
    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("records serialize");
        line.push('\n');
        line
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoggedEpisode {
    pub events: Vec<EventRecord>,
    pub end: EpisodeEnd,
}

impl LoggedEpisode {
    pub fn trajectory(&self) -> Trajectory {
        Trajectory {
            episode_index: self.end.episode,
            events: self.events.iter().map(EventRecord::event).collect(),
            final_observation: Observation {
                room: self.end.final_room,
                visible: self.end.final_observation.clone(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedLog {
    pub header: Header,
    pub episodes: Vec<LoggedEpisode>,
    /// Events of an episode that has no `episode_end` yet.
    pub partial: Vec<EventRecord>,
    pub footer: Option<Footer>,
    /// Byte length of the prefix holding the header and complete episodes.
    pub complete_len: u64,
    /// Whether the last line was cut off mid-write.
    pub truncated_tail: bool,
}

impl ParsedLog {
    pub fn history(&self) -> History {
        History {
            trajectories: self
                .episodes
                .iter()
                .map(LoggedEpisode::trajectory)
                .collect(),
        }
    }

    /// Exploitation return after every logged interaction of complete episodes.
    pub fn exploit_series(&self) -> Vec<u32> {
        self.episodes
            .iter()
            .flat_map(|e| e.events.iter().map(|r| r.exploit_return_after))
            .collect()
    }

    pub fn invalid_per_episode(&self) -> Vec<u32> {
        self.episodes
            .iter()
            .map(|e| e.events.iter().map(EventRecord::invalid_count).sum())
            .collect()
    }
}

/// Parses a run log. A malformed final line is tolerated (a crash mid-write)
/// and reported through `truncated_tail`.
pub fn read_log(path: impl AsRef<Path>) -> Result<ParsedLog, HarnessError> {
    let path = path.as_ref();
    let err = |msg: String| HarnessError::Log {
        path: path.display().to_string(),
        msg,
    };
    let mut reader = BufReader::new(std::fs::File::open(path)?);
    let mut header = None;
    let mut episodes = Vec::new();
    let mut partial: Vec<EventRecord> = Vec::new();
    let mut footer = None;
    let mut offset = 0u64;
    let mut complete_len = 0u64;
    let mut truncated_tail = false;
    let mut line = String::new();
    let mut number = 0;
    loop {
        line.clear();
        let read = reader.read_line(&mut line)?;
        if read == 0 {
            break;
        }
        number += 1;
        offset += read as u64;
        if truncated_tail {
            return Err(err(format!("malformed line {}", number - 1)));
        }
        let record: Record = match serde_json::from_str(line.trim_end()) {
            Ok(r) if line.ends_with('\n') => r,
            Ok(_) | Err(_) => {
                truncated_tail = true;
                continue;
            }
        };
        if footer.is_some() {
            return Err(err(format!("line {number} follows the footer")));
        }
        match record {
            Record::Header(h) if header.is_none() && number == 1 => {
                header = Some(h);
                complete_len = offset;
            }
            Record::Header(_) => return Err(err(format!("unexpected header at line {number}"))),
            _ if header.is_none() => return Err(err("missing header".into())),
            Record::Event(e) => {
                let expected = (episodes.len() + 1, partial.len());
                if (e.episode, e.step) != expected {
                    return Err(err(format!(
                        "line {number}: expected episode {} step {}, found episode {} step {}",
                        expected.0, expected.1, e.episode, e.step
                    )));
                }
                partial.push(e);
            }
            Record::EpisodeEnd(end) => {
                if end.episode != episodes.len() + 1 {
                    return Err(err(format!("line {number}: episode_end out of order")));
                }
                episodes.push(LoggedEpisode {
                    events: std::mem::take(&mut partial),
                    end,
                });
                complete_len = offset;
            }
            Record::Footer(f) => {
                if !partial.is_empty() {
                    return Err(err("footer inside an unfinished episode".into()));
                }
                footer = Some(f);
            }
        }
    }
    let header = header.ok_or_else(|| err("missing header".into()))?;
    Ok(ParsedLog {
        header,
        episodes,
        partial,
        footer,
        complete_len,
        truncated_tail,
    })
}

/// The history recorded in a log's complete episodes.
pub fn history_from_log(path: impl AsRef<Path>) -> Result<History, HarnessError> {
    Ok(read_log(path)?.history())
}
