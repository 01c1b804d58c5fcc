//! Text interface: prompt rendering and reply parsing.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{Arrival, Event, History, Observation};
use crate::worldgen::{ObjectKind, ObjectRef, WorldSpec};

const BUILTIN_INSTRUCTIONS: &str = include_str!("../data/instructions.json");

/// Appended to the prompt after a reply that names no legal object.
pub const INVALID_ACTION_NOTICE: &str =
    "Invalid action. Reply with one object enclosed with < and >.";

#[derive(Debug, Error)]
pub enum TextError {
    #[error("unknown instruction id {0:?}")]
    UnknownInstruction(String),
    #[error("instruction set lacks {0:?}")]
    MissingInstruction(InstructionId),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionId {
    TaskOriented,
    SoftLower,
    SoftUpper,
    Custom,
}

impl InstructionId {
    pub fn as_str(&self) -> &'static str {
        match self {
            InstructionId::TaskOriented => "task_oriented",
            InstructionId::SoftLower => "soft_lower",
            InstructionId::SoftUpper => "soft_upper",
            InstructionId::Custom => "custom",
        }
    }
}

impl fmt::Display for InstructionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InstructionId {
    type Err = TextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "task_oriented" => InstructionId::TaskOriented,
            "soft_lower" => InstructionId::SoftLower,
            "soft_upper" => InstructionId::SoftUpper,
            "custom" => InstructionId::Custom,
            _ => return Err(TextError::UnknownInstruction(s.to_string())),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub id: InstructionId,
    pub text: String,
}

impl Instruction {
    /// One of the bundled instructions. Panics on [`InstructionId::Custom`].
    pub fn builtin(id: InstructionId) -> Self {
        InstructionSet::builtin()
            .get(id)
            .expect("bundled instructions cover every non-custom id")
    }

    pub fn custom(text: impl Into<String>) -> Self {
        Self {
            id: InstructionId::Custom,
            text: text.into(),
        }
    }
}

/// Instruction texts keyed by id, as stored in `instructions.json`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstructionSet {
    texts: BTreeMap<InstructionId, String>,
}

impl InstructionSet {
    pub fn from_json(text: &str) -> Result<Self, TextError> {
        let raw: BTreeMap<String, String> = serde_json::from_str(text)?;
        let mut texts = BTreeMap::new();
        for (key, value) in raw {
            texts.insert(key.parse()?, value);
        }
        Ok(Self { texts })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TextError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_INSTRUCTIONS).expect("bundled instructions parse")
    }

    pub fn get(&self, id: InstructionId) -> Result<Instruction, TextError> {
        self.texts
            .get(&id)
            .map(|text| Instruction {
                id,
                text: text.clone(),
            })
            .ok_or(TextError::MissingInstruction(id))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub full_text: String,
    pub legal: Vec<ObjectRef>,
    pub attempt: u32,
}

impl PromptBundle {
    /// The prompt re-sent after an unparseable reply.
    pub fn retry(&self) -> PromptBundle {
        PromptBundle {
            full_text: format!("{}\n\n{INVALID_ACTION_NOTICE}", self.full_text),
            legal: self.legal.clone(),
            attempt: self.attempt + 1,
        }
    }
}

fn object_list(obs: &Observation) -> String {
    obs.visible
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

/// One observation line as it appears in transcripts.
pub fn render_observation(obs: &Observation, arrival: Arrival) -> String {
    match arrival {
        Arrival::Reset => format!("You see:\n{}", object_list(obs)),
        Arrival::Door => format!("You walk through the door. You see: {}", object_list(obs)),
        Arrival::Pickup | Arrival::Blocked => format!("You see: {}", object_list(obs)),
    }
}

fn arrival(event: &Event, next: &Observation) -> Arrival {
    match event.action.kind {
        ObjectKind::Ball => Arrival::Pickup,
        ObjectKind::Door if next.room == event.observation.room => Arrival::Blocked,
        ObjectKind::Door => Arrival::Door,
    }
}

/// Renders an episode given its events and the observation that followed the last one.
pub fn render_episode(events: &[Event], current: &Observation) -> String {
    let first = events.first().map(|e| &e.observation).unwrap_or(current);
    let mut lines = vec![render_observation(first, Arrival::Reset)];
    for (i, event) in events.iter().enumerate() {
        let next = events.get(i + 1).map(|e| &e.observation).unwrap_or(current);
        lines.push(format!("> {}", event.action));
        lines.push(format!("Reward: {}", event.reward));
        lines.push(render_observation(next, arrival(event, next)));
    }
    lines.join("\n")
}

/// The past-episodes block, empty for an empty history.
pub fn render_history(history: &History) -> String {
    history
        .trajectories
        .iter()
        .map(|t| {
            format!(
                "\nEpisode {}:\n{}",
                t.episode_index,
                render_episode(&t.events, &t.final_observation)
            )
        })
        .collect()
}

pub fn render_prompt(
    history: &History,
    events: &[Event],
    current: &Observation,
    instruction: &Instruction,
    world: &WorldSpec,
    total_episodes: usize,
) -> PromptBundle {
    let full_text = format!(
        "Your past episodes:{history}\n\n\
         You are controlling an agent in an unknown world.\n\
         Over a total of {total_episodes} episodes, you can interact with objects in the environment.\n\
         {instruction}\n\
         You have {budget} door interactions per episode but can pick up three balls, keys, or boxes.\n\n\
         Current episode:\n{episode}\n\n\
         Which object do you want to interact with next?\n\
         Reply with one object enclosed with < and >, e.g. <door>.\n\n\
         What is your next action?",
        history = render_history(history),
        instruction = instruction.text,
        budget = world.door_budget,
        episode = render_episode(events, current),
    );
    PromptBundle {
        full_text,
        legal: current.visible.clone(),
        attempt: 0,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("could not parse reply ({reason}): {raw:?}")]
pub struct ParseFailure {
    pub raw: String,
    pub reason: String,
}

fn normalize(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Extracts the action named by the first `<...>` span of `reply`.
pub fn parse_action(reply: &str, legal: &[ObjectRef]) -> Result<ObjectRef, ParseFailure> {
    let fail = |reason: &str| ParseFailure {
        raw: reply.to_string(),
        reason: reason.to_string(),
    };
    let open = reply.find('<').ok_or_else(|| fail("no <...> span"))?;
    let len = reply[open + 1..]
        .find('>')
        .ok_or_else(|| fail("unterminated <...> span"))?;
    let span = normalize(&reply[open + 1..open + 1 + len]);
    if span.is_empty() {
        return Err(fail("empty span"));
    }

    if let Some(hit) = legal.iter().find(|o| o.to_string() == span) {
        return Ok(hit.clone());
    }
    let unique = |matches: Vec<&ObjectRef>| match matches.as_slice() {
        [one] => Some((*one).clone()),
        _ => None,
    };
    let by_color: Vec<_> = legal.iter().filter(|o| o.color == span).collect();
    if let Some(hit) = unique(by_color) {
        return Ok(hit);
    }
    let by_kind: Vec<_> = legal.iter().filter(|o| o.kind.as_str() == span).collect();
    if let Some(hit) = unique(by_kind) {
        return Ok(hit);
    }
    Err(fail("no unique legal object matches"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::replay_actions;
    use crate::testing::{transcript_actions_two, transcript_episode_one, transcript_world};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn start_room_observation() {
        let world = transcript_world();
        let (_, obs) = crate::episode::reset(&world);
        assert_eq!(
            render_observation(&obs, Arrival::Reset),
            "You see:\ndodger_blue door, tangerine door"
        );
    }

    #[test]
    fn task_oriented_text_is_verbatim() {
        assert_eq!(
            Instruction::builtin(InstructionId::TaskOriented).text,
            "Based the current and past trials, explore the environment to collect \
             information that may help to become better at maximizing the reward."
        );
        let set = InstructionSet::builtin();
        assert!(set.get(InstructionId::SoftLower).is_ok());
        assert!(set.get(InstructionId::SoftUpper).is_ok());
        assert!(set.get(InstructionId::Custom).is_err());
    }

    #[test]
    fn prompt_for_fresh_episode() {
        let world = transcript_world();
        let (_, obs) = crate::episode::reset(&world);
        let instruction = Instruction::builtin(InstructionId::TaskOriented);
        let bundle = render_prompt(&History::new(), &[], &obs, &instruction, &world, 20);
        let expected = "Your past episodes:\n\n\
            You are controlling an agent in an unknown world.\n\
            Over a total of 20 episodes, you can interact with objects in the environment.\n\
            Based the current and past trials, explore the environment to collect information \
            that may help to become better at maximizing the reward.\n\
            You have 8 door interactions per episode but can pick up three balls, keys, or boxes.\n\n\
            Current episode:\nYou see:\ndodger_blue door, tangerine door\n\n\
            Which object do you want to interact with next?\n\
            Reply with one object enclosed with < and >, e.g. <door>.\n\n\
            What is your next action?";
        assert_eq!(bundle.full_text, expected);
        assert_eq!(bundle.legal, obs.visible);
        assert_eq!(bundle.attempt, 0);
        let again = render_prompt(&History::new(), &[], &obs, &instruction, &world, 20);
        assert_eq!(again, bundle);
    }

    #[test]
    fn history_block_matches_transcript() {
        let world = transcript_world();
        let history = History {
            trajectories: vec![transcript_episode_one(&world)],
        };
        let expected = "\nEpisode 1:\nYou see:\ndodger_blue door, tangerine door\n\
            > dodger_blue door\nReward: 0\n\
            You walk through the door. You see: apricot door, dodger_blue door, cerulean door, honeydew door\n\
            > cerulean door\nReward: 0\n\
            You walk through the door. You see: rosewood ball, teal door, cerulean door\n\
            > rosewood ball\nReward: 3\n\
            You see: teal door, cerulean door\n\
            > teal door\nReward: 0\n\
            You walk through the door. You see: turquoise ball, magenta door, teal door, khaki ball\n\
            > turquoise ball\nReward: 2\n\
            You see: magenta door, teal door, khaki ball\n\
            > khaki ball\nReward: 3\n\
            You see: magenta door, teal door";
        assert_eq!(render_history(&history), expected);

        let partial = replay_actions(&world, 2, &transcript_actions_two()).unwrap();
        assert_eq!(
            render_episode(&partial.events, &partial.final_observation),
            "You see:\ndodger_blue door, tangerine door\n\
             > tangerine door\nReward: 0\n\
             You walk through the door. You see: midnight_blue ball, tangerine door\n\
             > midnight_blue ball\nReward: 5\n\
             You see: tangerine door\n\
             > tangerine door\nReward: 0\n\
             You walk through the door. You see: tangerine door, dodger_blue door"
        );
    }

    #[test]
    fn retry_appends_notice() {
        let bundle = PromptBundle {
            full_text: "x".into(),
            legal: vec![],
            attempt: 0,
        };
        let next = bundle.retry();
        assert_eq!(next.full_text, format!("x\n\n{INVALID_ACTION_NOTICE}"));
        assert_eq!(next.attempt, 1);
    }

    fn room_objects() -> Vec<ObjectRef> {
        vec![
            ObjectRef::ball("rosewood"),
            ObjectRef::door("teal"),
            ObjectRef::door("cerulean"),
        ]
    }

    #[test]
    fn parse_examples() {
        let legal = room_objects();
        assert_eq!(parse_action("<rosewood ball>", &legal).unwrap(), legal[0]);
        assert_eq!(
            parse_action("I will take <teal door> now", &legal).unwrap(),
            legal[1]
        );
        assert_eq!(parse_action("<rosewood>", &legal).unwrap(), legal[0]);
        assert_eq!(parse_action("<ball>", &legal).unwrap(), legal[0]);
        assert_eq!(
            parse_action("  <  TEAL   Door > ", &legal).unwrap(),
            legal[1]
        );
        assert_eq!(
            parse_action("<teal door> or <cerulean door>", &legal).unwrap(),
            legal[1]
        );
        let err = parse_action("<door>", &legal).unwrap_err();
        assert_eq!(err.raw, "<door>");
        assert!(parse_action("teal door", &legal).is_err());
        assert!(parse_action("<magenta door>", &legal).is_err());
        assert!(parse_action("<>", &legal).is_err());
        assert!(parse_action("<teal door", &legal).is_err());
    }

    #[test]
    fn every_rendered_object_round_trips() {
        let world = transcript_world();
        for view in &world.views {
            for object in &view.objects {
                let reply = format!("<{object}>");
                assert_eq!(&parse_action(&reply, &view.objects).unwrap(), object);
            }
        }
    }

    /// Independent matcher: scores every legal object by match quality and
    /// accepts only a unique best at the highest applicable tier.
    fn reference_match(reply: &str, legal: &[ObjectRef]) -> Option<ObjectRef> {
        let start = reply.char_indices().find(|(_, c)| *c == '<')?.0;
        let rest = &reply[start + 1..];
        let end = rest.char_indices().find(|(_, c)| *c == '>')?.0;
        let words: Vec<String> = rest[..end]
            .split_whitespace()
            .map(|w| w.to_lowercase())
            .collect();
        if words.is_empty() {
            return None;
        }
        for tier in 0..3 {
            let hits: Vec<&ObjectRef> = legal
                .iter()
                .filter(|o| match tier {
                    0 => words.len() == 2 && words[0] == o.color && words[1] == o.kind.as_str(),
                    1 => words.len() == 1 && words[0] == o.color,
                    _ => words.len() == 1 && words[0] == o.kind.as_str(),
                })
                .collect();
            if tier == 0 && !hits.is_empty() {
                return Some(hits[0].clone());
            }
            if hits.len() == 1 {
                return Some(hits[0].clone());
            }
        }
        None
    }

    fn random_case(s: &str, rng: &mut ChaCha8Rng) -> String {
        s.chars()
            .map(|c| {
                if rng.gen_bool(0.3) {
                    c.to_ascii_uppercase()
                } else {
                    c
                }
            })
            .collect()
    }

    #[test]
    fn fuzz_against_reference_matcher() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let colors = ["rosewood", "teal", "cerulean", "khaki", "magenta", "red"];
        let fillers = ["", "Sure. ", "I pick ", "next: ", "<", ">", "hmm > "];
        for _ in 0..1000 {
            let mut legal: Vec<ObjectRef> = Vec::new();
            let count = rng.gen_range(1..=5);
            for color in colors.choose_multiple(&mut rng, count) {
                legal.push(if rng.gen_bool(0.5) {
                    ObjectRef::door(*color)
                } else {
                    ObjectRef::ball(*color)
                });
            }
            let color = colors.choose(&mut rng).unwrap();
            let kind = ["door", "ball", "key"].choose(&mut rng).unwrap();
            let body = match rng.gen_range(0..5) {
                0 => format!("{color} {kind}"),
                1 => color.to_string(),
                2 => kind.to_string(),
                3 => format!("  {color}\t {kind} "),
                _ => format!("{color}{kind}"),
            };
            let body = random_case(&body, &mut rng);
            let reply = match rng.gen_range(0..4) {
                0 => format!("<{body}>"),
                1 => format!(
                    "{}<{body}>{}",
                    fillers.choose(&mut rng).unwrap(),
                    fillers.choose(&mut rng).unwrap()
                ),
                2 => body.clone(),
                _ => format!("<{body}> <{} door>", colors.choose(&mut rng).unwrap()),
            };
            assert_eq!(
                parse_action(&reply, &legal).ok(),
                reference_match(&reply, &legal),
                "reply {reply:?} legal {legal:?}"
            );
        }
    }
}
