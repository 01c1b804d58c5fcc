//! World model and procedural generation.
//!
//! A world is a grid of rooms joined by uniquely colored doors, with reward
//! balls scattered across some of the rooms. Two generators are provided:
//! [`generate_treasure_rooms`] (full lattice with random door drops) and
//! [`generate_maze`] (randomized Kruskal spanning tree).

mod maze;
mod palette;
mod treasure;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use maze::{generate_maze, generate_maze_with, MazeParams, MAZE_DOOR_BUDGET};
pub use palette::Palette;
pub use treasure::{generate_treasure_rooms, generate_treasure_rooms_with, TreasureParams};

/// Maximum number of balls that can be collected in one episode.
pub const MAX_BALLS_PER_EPISODE: u32 = 3;

/// Stream used when shuffling the palette, kept apart from layout streams.
const NAMING_STREAM: u64 = 0x6e61_6d65;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("grid dimensions {0} are below the minimum for this world kind")]
    DimsTooSmall(GridDims),
    #[error("maze dimensions must be odd, got {0}")]
    EvenDims(GridDims),
    #[error("p_drop must lie in [0, 0.5), got {0}")]
    DropProbability(f64),
    #[error("p_ball must lie in (0, 1], got {0}")]
    BallProbability(f64),
    #[error("maze with {rooms} rooms cannot hold {balls} balls outside the start room")]
    TooManyBalls { rooms: usize, balls: usize },
    #[error("palette exhausted: need {needed} names, have {available}")]
    PaletteExhausted { needed: usize, available: usize },
    #[error("invalid palette: {0}")]
    InvalidPalette(String),
    #[error("room graph is disconnected")]
    Disconnected,
    #[error("no valid layout found after {0} attempts")]
    GenerationExhausted(u64),
    #[error("invalid world: {0}")]
    Invalid(String),
    #[error("malformed {what}: {value:?}")]
    Parse { what: &'static str, value: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Grid coordinate of a room. Serialized as `r<row>_<col>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RoomId {
    pub row: u32,
    pub col: u32,
}

impl RoomId {
    pub const fn new(row: u32, col: u32) -> Self {
        Self { row, col }
    }

    pub fn is_adjacent(&self, other: &RoomId) -> bool {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col) == 1
    }
}

impl fmt::Display for RoomId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}_{}", self.row, self.col)
    }
}

impl FromStr for RoomId {
    type Err = WorldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || WorldError::Parse {
            what: "room id",
            value: s.to_string(),
        };
        let rest = s.strip_prefix('r').ok_or_else(err)?;
        let (row, col) = rest.split_once('_').ok_or_else(err)?;
        Ok(Self {
            row: row.parse().map_err(|_| err())?,
            col: col.parse().map_err(|_| err())?,
        })
    }
}

impl Serialize for RoomId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RoomId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldKind {
    #[serde(alias = "treasure")]
    TreasureRooms,
    Maze,
}

impl FromStr for WorldKind {
    type Err = WorldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "treasure" | "treasure_rooms" => Ok(WorldKind::TreasureRooms),
            "maze" => Ok(WorldKind::Maze),
            _ => Err(WorldError::Parse {
                what: "world kind",
                value: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for WorldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WorldKind::TreasureRooms => "treasure_rooms",
            WorldKind::Maze => "maze",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridDims {
    pub rows: u32,
    pub cols: u32,
}

impl GridDims {
    pub const fn new(rows: u32, cols: u32) -> Self {
        Self { rows, cols }
    }

    pub fn room_count(&self) -> usize {
        (self.rows * self.cols) as usize
    }

    /// Rooms in row-major order.
    pub fn rooms(&self) -> Vec<RoomId> {
        (0..self.rows)
            .flat_map(|row| (0..self.cols).map(move |col| RoomId::new(row, col)))
            .collect()
    }

    pub fn index(&self, room: RoomId) -> Option<usize> {
        (room.row < self.rows && room.col < self.cols)
            .then(|| (room.row * self.cols + room.col) as usize)
    }

    /// All orthogonally adjacent room pairs, row-major, right neighbor before down neighbor.
    pub fn lattice_edges(&self) -> Vec<(RoomId, RoomId)> {
        let mut edges = Vec::new();
        for row in 0..self.rows {
            for col in 0..self.cols {
                let here = RoomId::new(row, col);
                if col + 1 < self.cols {
                    edges.push((here, RoomId::new(row, col + 1)));
                }
                if row + 1 < self.rows {
                    edges.push((here, RoomId::new(row + 1, col)));
                }
            }
        }
        edges
    }
}

impl fmt::Display for GridDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

impl FromStr for GridDims {
    type Err = WorldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || WorldError::Parse {
            what: "grid dims",
            value: s.to_string(),
        };
        let (rows, cols) = s.split_once(['x', 'X']).ok_or_else(err)?;
        Ok(Self {
            rows: rows.trim().parse().map_err(|_| err())?,
            cols: cols.trim().parse().map_err(|_| err())?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObjectKind {
    Door,
    Ball,
}

impl ObjectKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectKind::Door => "door",
            ObjectKind::Ball => "ball",
        }
    }
}

/// A reference to a world object by color and kind, rendered as `"<color> <kind>"`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjectRef {
    pub kind: ObjectKind,
    pub color: String,
}

impl ObjectRef {
    pub fn door(color: impl Into<String>) -> Self {
        Self {
            kind: ObjectKind::Door,
            color: color.into(),
        }
    }

    pub fn ball(color: impl Into<String>) -> Self {
        Self {
            kind: ObjectKind::Ball,
            color: color.into(),
        }
    }

    pub fn is_door(&self) -> bool {
        self.kind == ObjectKind::Door
    }

    pub fn is_ball(&self) -> bool {
        self.kind == ObjectKind::Ball
    }
}

impl fmt::Display for ObjectRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.color, self.kind.as_str())
    }
}

impl FromStr for ObjectRef {
    type Err = WorldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || WorldError::Parse {
            what: "object reference",
            value: s.to_string(),
        };
        let (color, kind) = s.trim().rsplit_once(' ').ok_or_else(err)?;
        let kind = match kind {
            "door" => ObjectKind::Door,
            "ball" => ObjectKind::Ball,
            _ => return Err(err()),
        };
        if color.is_empty() {
            return Err(err());
        }
        Ok(Self {
            kind,
            color: color.to_string(),
        })
    }
}

impl Serialize for ObjectRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ObjectRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A door between two orthogonally adjacent rooms. Serialized as `[color, room_a, room_b]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Door {
    pub color: String,
    pub endpoints: (RoomId, RoomId),
}

impl Door {
    pub fn connects(&self, room: RoomId) -> bool {
        self.endpoints.0 == room || self.endpoints.1 == room
    }

    /// The endpoint opposite `room`, if the door touches it.
    pub fn other(&self, room: RoomId) -> Option<RoomId> {
        if self.endpoints.0 == room {
            Some(self.endpoints.1)
        } else if self.endpoints.1 == room {
            Some(self.endpoints.0)
        } else {
            None
        }
    }
}

impl Serialize for Door {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        (&self.color, self.endpoints.0, self.endpoints.1).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Door {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let (color, a, b) = <(String, RoomId, RoomId)>::deserialize(deserializer)?;
        Ok(Self {
            color,
            endpoints: (a, b),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ball {
    pub color: String,
    pub room: RoomId,
    pub reward: u32,
}

/// The order in which a room lists its objects.
///
/// `via = None` is the room's default order. An entry with `via = Some(door)`
/// applies while the agent stands where it arrived through that door.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomView {
    pub room: RoomId,
    #[serde(default)]
    pub via: Option<String>,
    pub objects: Vec<ObjectRef>,
}

/// Immutable ground truth of one environment instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub world_id: String,
    pub kind: WorldKind,
    pub grid_dims: GridDims,
    pub rooms: Vec<RoomId>,
    pub doors: Vec<Door>,
    pub balls: Vec<Ball>,
    pub start_room: RoomId,
    pub door_budget: u32,
    pub max_balls_per_episode: u32,
    pub r_max: u32,
    pub discount: f64,
    pub seed: u64,
    #[serde(default)]
    pub views: Vec<RoomView>,
}

impl WorldSpec {
    /// Assemble a world from its layout, filling in budget and `r_max`, and
    /// deriving a default view for every room that lacks one.
    #[allow(clippy::too_many_arguments)]
    pub fn from_layout(
        world_id: impl Into<String>,
        kind: WorldKind,
        grid_dims: GridDims,
        doors: Vec<Door>,
        balls: Vec<Ball>,
        start_room: RoomId,
        seed: u64,
        mut views: Vec<RoomView>,
    ) -> Result<Self, WorldError> {
        let rooms = grid_dims.rooms();
        for room in &rooms {
            if !views.iter().any(|v| v.room == *room && v.via.is_none()) {
                views.push(RoomView {
                    room: *room,
                    via: None,
                    objects: default_room_objects(*room, &doors, &balls),
                });
            }
        }
        views.sort_by(|a, b| (a.room, &a.via).cmp(&(b.room, &b.via)));
        let mut world = Self {
            world_id: world_id.into(),
            kind,
            grid_dims,
            rooms,
            doors,
            balls,
            start_room,
            door_budget: 0,
            max_balls_per_episode: MAX_BALLS_PER_EPISODE,
            r_max: 0,
            discount: 1.0,
            seed,
            views,
        };
        world.door_budget = calibrate_budget(&world)?;
        world.r_max = crate::oracle::compute_r_max(&world);
        Ok(world)
    }

    pub fn door(&self, color: &str) -> Option<&Door> {
        self.doors.iter().find(|d| d.color == color)
    }

    pub fn ball(&self, color: &str) -> Option<&Ball> {
        self.balls.iter().find(|b| b.color == color)
    }

    pub fn has_room(&self, room: RoomId) -> bool {
        self.grid_dims.index(room).is_some()
    }

    /// Whether `object` exists in `room`.
    pub fn located_in(&self, object: &ObjectRef, room: RoomId) -> bool {
        match object.kind {
            ObjectKind::Door => self.door(&object.color).is_some_and(|d| d.connects(room)),
            ObjectKind::Ball => self.ball(&object.color).is_some_and(|b| b.room == room),
        }
    }

    /// Objects of `room` in display order for an agent that arrived via `via`.
    pub fn view(&self, room: RoomId, via: Option<&str>) -> &[ObjectRef] {
        let lookup = |via: Option<&str>| {
            self.views
                .iter()
                .find(|v| v.room == room && v.via.as_deref() == via)
                .map(|v| v.objects.as_slice())
        };
        via.and_then(|d| lookup(Some(d)))
            .or_else(|| lookup(None))
            .unwrap_or(&[])
    }

    /// Room adjacency through doors: for each room index, `(neighbor index, door index)`.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.rooms.len()];
        for (door_idx, door) in self.doors.iter().enumerate() {
            let (Some(a), Some(b)) = (
                self.grid_dims.index(door.endpoints.0),
                self.grid_dims.index(door.endpoints.1),
            ) else {
                continue;
            };
            adj[a].push((b, door_idx));
            adj[b].push((a, door_idx));
        }
        adj
    }

    /// Door distances from the start room; `None` for unreachable rooms.
    pub fn distances_from_start(&self) -> Vec<Option<u32>> {
        bfs_distances(
            &self.adjacency(),
            self.grid_dims.index(self.start_room).unwrap_or(0),
        )
    }

    pub fn is_connected(&self) -> bool {
        self.distances_from_start().iter().all(Option::is_some)
    }

    /// Checks the structural invariants. Used after loading untrusted JSON.
    pub fn validate(&self) -> Result<(), WorldError> {
        let invalid = |msg: String| Err(WorldError::Invalid(msg));
        if self.rooms != self.grid_dims.rooms() {
            return invalid("rooms must list the grid in row-major order".into());
        }
        if !self.has_room(self.start_room) {
            return invalid(format!("start room {} outside grid", self.start_room));
        }
        let mut names = std::collections::HashSet::new();
        let mut pairs = std::collections::HashSet::new();
        for door in &self.doors {
            let (a, b) = door.endpoints;
            if !self.has_room(a) || !self.has_room(b) || !a.is_adjacent(&b) {
                return invalid(format!("door {} joins non-adjacent rooms", door.color));
            }
            if !pairs.insert((a.min(b), a.max(b))) {
                return invalid(format!("duplicate door between {a} and {b}"));
            }
            if !names.insert(door.color.as_str()) {
                return invalid(format!("duplicate color {}", door.color));
            }
        }
        for ball in &self.balls {
            if !self.has_room(ball.room) {
                return invalid(format!("ball {} outside grid", ball.color));
            }
            if !(1..=10).contains(&ball.reward) {
                return invalid(format!(
                    "ball {} reward {} outside 1..=10",
                    ball.color, ball.reward
                ));
            }
            if !names.insert(ball.color.as_str()) {
                return invalid(format!("duplicate color {}", ball.color));
            }
        }
        for view in &self.views {
            let expected = self.doors.iter().filter(|d| d.connects(view.room)).count()
                + self.balls.iter().filter(|b| b.room == view.room).count();
            let mut seen = std::collections::HashSet::new();
            if view.objects.len() != expected
                || !view
                    .objects
                    .iter()
                    .all(|o| self.located_in(o, view.room) && seen.insert(o))
            {
                return invalid(format!("view of {} does not list its objects", view.room));
            }
        }
        if !self.is_connected() {
            return Err(WorldError::Disconnected);
        }
        Ok(())
    }

    /// Canonical pretty JSON, stable for equal worlds.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("world serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let world: WorldSpec = serde_json::from_str(text)?;
        world.validate()?;
        Ok(world)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, WorldError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), WorldError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

fn default_room_objects(room: RoomId, doors: &[Door], balls: &[Ball]) -> Vec<ObjectRef> {
    doors
        .iter()
        .filter(|d| d.connects(room))
        .map(|d| ObjectRef::door(&d.color))
        .chain(
            balls
                .iter()
                .filter(|b| b.room == room)
                .map(|b| ObjectRef::ball(&b.color)),
        )
        .collect()
}

/// Per-room object orders shuffled once at generation time.
pub(crate) fn shuffled_views(
    dims: GridDims,
    doors: &[Door],
    balls: &[Ball],
    rng: &mut ChaCha8Rng,
) -> Vec<RoomView> {
    dims.rooms()
        .into_iter()
        .map(|room| {
            let mut objects = default_room_objects(room, doors, balls);
            objects.shuffle(rng);
            RoomView {
                room,
                via: None,
                objects,
            }
        })
        .collect()
}

pub(crate) fn bfs_distances(adj: &[Vec<(usize, usize)>], source: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; adj.len()];
    if source >= adj.len() {
        return dist;
    }
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u].unwrap_or(0);
        for &(v, _) in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Per-episode door budget: the start room's eccentricity for treasure rooms,
/// a fixed [`MAZE_DOOR_BUDGET`] for mazes.
pub fn calibrate_budget(world: &WorldSpec) -> Result<u32, WorldError> {
    let dist = world.distances_from_start();
    if dist.iter().any(Option::is_none) {
        return Err(WorldError::Disconnected);
    }
    Ok(match world.kind {
        WorldKind::Maze => MAZE_DOOR_BUDGET,
        WorldKind::TreasureRooms => dist.into_iter().flatten().max().unwrap_or(0),
    })
}

/// Gives every door and ball a distinct palette name. Doors are named first,
/// then balls, from a palette shuffled deterministically by `seed`.
pub fn assign_names(
    world: &WorldSpec,
    palette: &Palette,
    seed: u64,
) -> Result<WorldSpec, WorldError> {
    let needed = world.doors.len() + world.balls.len();
    if palette.len() < needed {
        return Err(WorldError::PaletteExhausted {
            needed,
            available: palette.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(NAMING_STREAM);
    let mut names: Vec<&str> = palette.names().iter().map(String::as_str).collect();
    names.shuffle(&mut rng);

    let mut renamed = BTreeMap::new();
    let mut out = world.clone();
    for (door, name) in out.doors.iter_mut().zip(&names) {
        renamed.insert((ObjectKind::Door, door.color.clone()), name.to_string());
        door.color = name.to_string();
    }
    for (ball, name) in out.balls.iter_mut().zip(&names[world.doors.len()..]) {
        renamed.insert((ObjectKind::Ball, ball.color.clone()), name.to_string());
        ball.color = name.to_string();
    }
    for view in &mut out.views {
        if let Some(via) = &mut view.via {
            *via = renamed[&(ObjectKind::Door, via.clone())].clone();
        }
        for object in &mut view.objects {
            object.color = renamed[&(object.kind, object.color.clone())].clone();
        }
    }
    Ok(out)
}

/// Placeholder colors used between layout generation and naming.
pub(crate) fn placeholder_doors(edges: &[(RoomId, RoomId)]) -> Vec<Door> {
    edges
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| Door {
            color: format!("door_{i}"),
            endpoints: (a, b),
        })
        .collect()
}
