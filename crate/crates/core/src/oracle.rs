//! Optimal exploitation over an agent's accumulated knowledge.
//!
//! The knowledge graph holds the rooms the agent has seen, the doors it has
//! actually walked through and every ball it has observed. The best single
//! episode restricted to that knowledge is a small orienteering problem:
//! pick an ordered sequence of at most three balls whose shortest-path tour
//! from the start fits in the door budget, maximizing total reward. Instances
//! are tiny, so the solver enumerates ordered sequences depth-first.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{Arrival, Event, History, Observation, Trajectory};
use crate::worldgen::{ObjectKind, ObjectRef, RoomId, WorldSpec};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("history mentions room {0} outside the world")]
    UnknownRoom(RoomId),
    #[error("history mentions {0}, which is not in room {1}")]
    ObjectNotInRoom(ObjectRef, RoomId),
    #[error("door {door} cannot lead from {from} to {to}")]
    BadTraversal {
        door: String,
        from: RoomId,
        to: RoomId,
    },
    #[error("episode {0} does not start in the start room")]
    BadStart(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeGraph {
    pub start: RoomId,
    pub visited_rooms: BTreeSet<RoomId>,
    /// Colors of doors the agent walked through.
    pub traversed_doors: BTreeSet<String>,
    /// Colors of doors listed in any observation.
    pub observed_doors: BTreeSet<String>,
    /// Colors of balls listed in any observation.
    pub observed_balls: BTreeSet<String>,
}

impl KnowledgeGraph {
    /// What an agent knows before its first interaction.
    pub fn empty(world: &WorldSpec) -> Self {
        Self {
            start: world.start_room,
            visited_rooms: BTreeSet::from([world.start_room]),
            traversed_doors: BTreeSet::new(),
            observed_doors: BTreeSet::new(),
            observed_balls: BTreeSet::new(),
        }
    }

    /// The fully revealed world.
    pub fn full(world: &WorldSpec) -> Self {
        Self {
            start: world.start_room,
            visited_rooms: world.rooms.iter().copied().collect(),
            traversed_doors: world.doors.iter().map(|d| d.color.clone()).collect(),
            observed_doors: world.doors.iter().map(|d| d.color.clone()).collect(),
            observed_balls: world.balls.iter().map(|b| b.color.clone()).collect(),
        }
    }

    /// Records an observation. Returns whether anything new was learned.
    pub fn observe(&mut self, obs: &Observation, world: &WorldSpec) -> Result<bool, OracleError> {
        if !world.has_room(obs.room) {
            return Err(OracleError::UnknownRoom(obs.room));
        }
        let mut changed = self.visited_rooms.insert(obs.room);
        for object in &obs.visible {
            if !world.located_in(object, obs.room) {
                return Err(OracleError::ObjectNotInRoom(object.clone(), obs.room));
            }
            let set = match object.kind {
                ObjectKind::Door => &mut self.observed_doors,
                ObjectKind::Ball => &mut self.observed_balls,
            };
            if !set.contains(&object.color) {
                set.insert(object.color.clone());
                changed = true;
            }
        }
        Ok(changed)
    }

    /// Records one interaction: the action taken from `event.observation`
    /// and the observation that followed it.
    pub fn record(
        &mut self,
        event: &Event,
        next: &Observation,
        world: &WorldSpec,
    ) -> Result<bool, OracleError> {
        let mut changed = self.observe(&event.observation, world)?;
        let from = event.observation.room;
        if !world.located_in(&event.action, from) {
            return Err(OracleError::ObjectNotInRoom(event.action.clone(), from));
        }
        if event.action.is_door() && next.room != from {
            let door = world
                .door(&event.action.color)
                .expect("located door exists");
            if door.other(from) != Some(next.room) {
                return Err(OracleError::BadTraversal {
                    door: door.color.clone(),
                    from,
                    to: next.room,
                });
            }
            changed |= self.traversed_doors.insert(door.color.clone());
        }
        changed |= self.observe(next, world)?;
        Ok(changed)
    }

    pub fn record_trajectory(
        &mut self,
        trajectory: &Trajectory,
        world: &WorldSpec,
    ) -> Result<(), OracleError> {
        let first = trajectory
            .events
            .first()
            .map(|e| &e.observation)
            .unwrap_or(&trajectory.final_observation);
        if first.room != world.start_room {
            return Err(OracleError::BadStart(trajectory.episode_index));
        }
        self.observe(first, world)?;
        for (i, event) in trajectory.events.iter().enumerate() {
            self.record(event, trajectory.observation_after(i), world)?;
        }
        Ok(())
    }

    /// Knowledge mid-episode: history, the current partial episode and the
    /// observation in front of the agent.
    pub fn from_parts(
        history: &History,
        events: &[Event],
        current: &Observation,
        world: &WorldSpec,
    ) -> Result<Self, OracleError> {
        let mut graph = build_graph(history, world)?;
        for (i, event) in events.iter().enumerate() {
            let next = events.get(i + 1).map(|e| &e.observation).unwrap_or(current);
            graph.record(event, next, world)?;
        }
        graph.observe(current, world)?;
        Ok(graph)
    }

    /// Adjacency over traversed doors: room -> [(neighbor, door color)], sorted by color.
    pub fn known_adjacency(&self, world: &WorldSpec) -> BTreeMap<RoomId, Vec<(RoomId, String)>> {
        let mut adj: BTreeMap<RoomId, Vec<(RoomId, String)>> = BTreeMap::new();
        for color in &self.traversed_doors {
            if let Some(door) = world.door(color) {
                let (a, b) = door.endpoints;
                adj.entry(a).or_default().push((b, color.clone()));
                adj.entry(b).or_default().push((a, color.clone()));
            }
        }
        for edges in adj.values_mut() {
            edges.sort_by(|x, y| x.1.cmp(&y.1));
        }
        adj
    }

    /// Door distances and first-hop parents from `source` over traversed doors.
    pub fn bfs(&self, world: &WorldSpec, source: RoomId) -> BfsTree {
        let adj = self.known_adjacency(world);
        let mut seen = BTreeMap::from([(source, (0u32, None))]);
        let mut queue = VecDeque::from([source]);
        while let Some(room) = queue.pop_front() {
            let d = seen[&room].0;
            for (next, color) in adj.get(&room).into_iter().flatten() {
                if !seen.contains_key(next) {
                    seen.insert(*next, (d + 1, Some((room, color.clone()))));
                    queue.push_back(*next);
                }
            }
        }
        seen
    }

    /// Known balls, sorted by color.
    pub fn known_balls<'w>(&self, world: &'w WorldSpec) -> Vec<&'w crate::worldgen::Ball> {
        let mut balls: Vec<_> = world
            .balls
            .iter()
            .filter(|b| self.observed_balls.contains(&b.color))
            .collect();
        balls.sort_by(|a, b| a.color.cmp(&b.color));
        balls
    }
}

/// Extracts the knowledge graph of a whole history.
pub fn build_graph(history: &History, world: &WorldSpec) -> Result<KnowledgeGraph, OracleError> {
    let mut graph = KnowledgeGraph::empty(world);
    for trajectory in &history.trajectories {
        graph.record_trajectory(trajectory, world)?;
    }
    Ok(graph)
}

/// Budgeted orienteering instance. Node 0 is the start; node `i + 1` is ball `i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrienteeringInstance {
    pub labels: Vec<String>,
    pub prizes: Vec<u32>,
    /// Square matrix over `1 + labels.len()` nodes; `None` means unreachable.
    pub cost: Vec<Vec<Option<u32>>>,
    pub budget: u32,
    pub max_balls: usize,
}

impl OrienteeringInstance {
    pub fn ball_count(&self) -> usize {
        self.labels.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploitSolution {
    pub value: u32,
    /// Ball colors in pickup order.
    pub path: Vec<String>,
    pub cost_used: u32,
}

/// Distance and parent step of every reachable room.
pub type BfsTree = BTreeMap<RoomId, (u32, Option<(RoomId, String)>)>;

/// Shortest door costs over traversed doors between the start and every known ball.
pub fn shortest_costs(graph: &KnowledgeGraph, world: &WorldSpec) -> Vec<Vec<Option<u32>>> {
    let mut rooms = vec![graph.start];
    rooms.extend(graph.known_balls(world).iter().map(|b| b.room));
    let mut from_room: BTreeMap<RoomId, BfsTree> = BTreeMap::new();
    for room in &rooms {
        from_room
            .entry(*room)
            .or_insert_with(|| graph.bfs(world, *room));
    }
    rooms
        .iter()
        .map(|a| {
            rooms
                .iter()
                .map(|b| from_room[a].get(b).map(|(d, _)| *d))
                .collect()
        })
        .collect()
}

pub fn build_instance(graph: &KnowledgeGraph, world: &WorldSpec) -> OrienteeringInstance {
    let balls = graph.known_balls(world);
    OrienteeringInstance {
        labels: balls.iter().map(|b| b.color.clone()).collect(),
        prizes: balls.iter().map(|b| b.reward).collect(),
        cost: shortest_costs(graph, world),
        budget: world.door_budget,
        max_balls: world.max_balls_per_episode as usize,
    }
}

/// Exact solution by depth-first enumeration of ordered ball sequences.
///
/// Balls are expanded in label order, so the first optimum found is the
/// lexicographically smallest label sequence among all optima.
pub fn solve_orienteering(instance: &OrienteeringInstance) -> ExploitSolution {
    let n = instance.ball_count();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| instance.labels[a].cmp(&instance.labels[b]));

    struct Search<'a> {
        inst: &'a OrienteeringInstance,
        order: Vec<usize>,
        used: Vec<bool>,
        path: Vec<usize>,
        best: (u32, Vec<usize>, u32),
    }

    impl Search<'_> {
        fn visit(&mut self, node: usize, cost: u32, value: u32) {
            if value > self.best.0 {
                self.best = (value, self.path.clone(), cost);
            }
            if self.path.len() == self.inst.max_balls {
                return;
            }
            for k in 0..self.order.len() {
                let ball = self.order[k];
                if self.used[ball] {
                    continue;
                }
                let Some(step) = self.inst.cost[node][ball + 1] else {
                    continue;
                };
                let total = cost + step;
                if total > self.inst.budget {
                    continue;
                }
                self.used[ball] = true;
                self.path.push(ball);
                self.visit(ball + 1, total, value + self.inst.prizes[ball]);
                self.path.pop();
                self.used[ball] = false;
            }
        }
    }

    let mut search = Search {
        inst: instance,
        order,
        used: vec![false; n],
        path: Vec::new(),
        best: (0, Vec::new(), 0),
    };
    search.visit(0, 0, 0);
    let (value, path, cost_used) = search.best;
    ExploitSolution {
        value,
        path: path
            .into_iter()
            .map(|i| instance.labels[i].clone())
            .collect(),
        cost_used,
    }
}

/// Optimal exploitation return of a knowledge graph.
pub fn exploit_value(graph: &KnowledgeGraph, world: &WorldSpec) -> ExploitSolution {
    solve_orienteering(&build_instance(graph, world))
}

/// The optimal exploitation solution together with the concrete action
/// sequence that realizes it using only traversed doors.
pub fn exploit_plan(
    graph: &KnowledgeGraph,
    world: &WorldSpec,
) -> (ExploitSolution, Vec<ObjectRef>) {
    let solution = exploit_value(graph, world);
    let mut actions = Vec::new();
    let mut here = graph.start;
    for color in &solution.path {
        let target = world.ball(color).expect("known ball exists").room;
        let tree = graph.bfs(world, target);
        // Walk from `here` toward `target` following parents of a BFS rooted at target.
        while here != target {
            let (_, parent) = &tree[&here];
            let (next, door) = parent.clone().expect("reachable room has a parent");
            actions.push(ObjectRef::door(door));
            here = next;
        }
        actions.push(ObjectRef::ball(color.clone()));
    }
    (solution, actions)
}

/// Maximum single-episode return under full knowledge.
pub fn compute_r_max(world: &WorldSpec) -> u32 {
    exploit_value(&KnowledgeGraph::full(world), world).value
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    PerEpisode,
    PerInteraction,
}

/// Exploitation return after each episode or after each interaction.
///
/// Per-interaction entries line up with the history's events in order; the
/// knowledge after an interaction includes the observation it produced.
pub fn exploit_series(
    history: &History,
    world: &WorldSpec,
    granularity: Granularity,
) -> Result<Vec<u32>, OracleError> {
    let mut graph = KnowledgeGraph::empty(world);
    let mut value = 0;
    let mut series = Vec::new();
    for trajectory in &history.trajectories {
        let first = trajectory
            .events
            .first()
            .map(|e| &e.observation)
            .unwrap_or(&trajectory.final_observation);
        if first.room != world.start_room {
            return Err(OracleError::BadStart(trajectory.episode_index));
        }
        let mut changed = graph.observe(first, world)?;
        for (i, event) in trajectory.events.iter().enumerate() {
            changed |= graph.record(event, trajectory.observation_after(i), world)?;
            if granularity == Granularity::PerInteraction {
                if changed {
                    value = exploit_value(&graph, world).value;
                    changed = false;
                }
                series.push(value);
            }
        }
        if granularity == Granularity::PerEpisode {
            if changed {
                value = exploit_value(&graph, world).value;
            }
            series.push(value);
        }
    }
    Ok(series)
}

/// Incremental tracker used while a run is in progress.
#[derive(Clone, Debug)]
pub struct ExploitTracker {
    graph: KnowledgeGraph,
    value: u32,
}

impl ExploitTracker {
    pub fn new(world: &WorldSpec) -> Self {
        Self {
            graph: KnowledgeGraph::empty(world),
            value: 0,
        }
    }

    pub fn from_history(history: &History, world: &WorldSpec) -> Result<Self, OracleError> {
        let graph = build_graph(history, world)?;
        let value = exploit_value(&graph, world).value;
        Ok(Self { graph, value })
    }

    /// Records one interaction and returns the updated exploitation value.
    pub fn record(
        &mut self,
        event: &Event,
        next: &Observation,
        world: &WorldSpec,
    ) -> Result<u32, OracleError> {
        if self.graph.record(event, next, world)? {
            self.value = exploit_value(&self.graph, world).value;
        }
        Ok(self.value)
    }

    pub fn value(&self) -> u32 {
        self.value
    }

    pub fn graph(&self) -> &KnowledgeGraph {
        &self.graph
    }
}

/// Whether an event moved the agent through a door.
pub fn is_traversal(trajectory: &Trajectory, i: usize) -> bool {
    trajectory.arrival_after(i) == Arrival::Door
}
