//! Hand-built fixtures shared by unit tests, integration tests and examples.
//!
//! [`transcript_world`] is a 5x5 treasure-rooms layout whose first rooms
//! reproduce a well-known two-episode interaction: the agent leaves the
//! start room through `dodger_blue`, collects `rosewood`, `turquoise` and
//! `khaki`, and in the next episode finds `midnight_blue` behind `tangerine`.

use crate::episode::{replay_actions, Trajectory};
use crate::worldgen::{
    Ball, Door, GridDims, ObjectRef, Palette, RoomId, RoomView, WorldKind, WorldSpec,
};

const START: RoomId = RoomId::new(0, 1);
const HUB: RoomId = RoomId::new(1, 1);
const SIDE: RoomId = RoomId::new(0, 2);
const ROSE: RoomId = RoomId::new(1, 2);
const PAIR: RoomId = RoomId::new(2, 2);

fn r(row: u32, col: u32) -> RoomId {
    RoomId::new(row, col)
}

fn parse_all(items: &[&str]) -> Vec<ObjectRef> {
    items
        .iter()
        .map(|s| s.parse().expect("fixture object"))
        .collect()
}

/// The fixture world. Door budget is 8 and the start room is `r0_1`.
pub fn transcript_world() -> WorldSpec {
    let dims = GridDims::new(5, 5);
    let named = [
        ("dodger_blue", START, HUB),
        ("tangerine", START, SIDE),
        ("apricot", r(1, 0), HUB),
        ("cerulean", HUB, ROSE),
        ("honeydew", HUB, r(2, 1)),
        ("teal", ROSE, PAIR),
        ("magenta", PAIR, r(2, 3)),
    ];
    let dropped = [
        (r(0, 0), START),
        (SIDE, r(0, 3)),
        (SIDE, ROSE),
        (ROSE, r(1, 3)),
        (r(2, 1), PAIR),
        (PAIR, r(3, 2)),
        (r(0, 3), r(1, 3)),
    ];
    let taken: Vec<&str> = named
        .iter()
        .map(|(c, _, _)| *c)
        .chain([
            "rosewood",
            "turquoise",
            "khaki",
            "midnight_blue",
            "gold",
            "lavender",
        ])
        .collect();
    let palette = Palette::builtin();
    let mut spare = palette
        .names()
        .iter()
        .filter(|n| !taken.contains(&n.as_str()));

    let mut doors = Vec::new();
    for (a, b) in dims.lattice_edges() {
        if dropped.contains(&(a, b)) {
            continue;
        }
        let color = named
            .iter()
            .find(|(_, x, y)| (*x, *y) == (a, b) || (*y, *x) == (a, b))
            .map(|(c, _, _)| c.to_string())
            .unwrap_or_else(|| spare.next().expect("palette is large enough").clone());
        doors.push(Door {
            color,
            endpoints: (a, b),
        });
    }
    let ball = |color: &str, room, reward| Ball {
        color: color.into(),
        room,
        reward,
    };
    let balls = vec![
        ball("rosewood", ROSE, 3),
        ball("turquoise", PAIR, 2),
        ball("khaki", PAIR, 3),
        ball("midnight_blue", SIDE, 5),
        ball("lavender", r(3, 0), 7),
        ball("gold", r(4, 4), 9),
    ];
    let view = |room, via: Option<&str>, items: &[&str]| RoomView {
        room,
        via: via.map(str::to_string),
        objects: parse_all(items),
    };
    let views = vec![
        view(START, None, &["dodger_blue door", "tangerine door"]),
        view(
            START,
            Some("tangerine"),
            &["tangerine door", "dodger_blue door"],
        ),
        view(
            HUB,
            None,
            &[
                "apricot door",
                "dodger_blue door",
                "cerulean door",
                "honeydew door",
            ],
        ),
        view(ROSE, None, &["rosewood ball", "teal door", "cerulean door"]),
        view(
            PAIR,
            None,
            &["turquoise ball", "magenta door", "teal door", "khaki ball"],
        ),
        view(SIDE, None, &["midnight_blue ball", "tangerine door"]),
    ];
    let world = WorldSpec::from_layout(
        "transcript-5x5",
        WorldKind::TreasureRooms,
        dims,
        doors,
        balls,
        START,
        0,
        views,
    )
    .expect("fixture layout is valid");
    world.validate().expect("fixture passes validation");
    world
}

/// Actions of the first fixture episode.
pub fn transcript_actions_one() -> Vec<ObjectRef> {
    parse_all(&[
        "dodger_blue door",
        "cerulean door",
        "rosewood ball",
        "teal door",
        "turquoise ball",
        "khaki ball",
    ])
}

/// Actions of the second fixture episode, up to the point where the agent is asked again.
pub fn transcript_actions_two() -> Vec<ObjectRef> {
    parse_all(&["tangerine door", "midnight_blue ball", "tangerine door"])
}

pub fn transcript_episode_one(world: &WorldSpec) -> Trajectory {
    replay_actions(world, 1, &transcript_actions_one()).expect("fixture actions are legal")
}
