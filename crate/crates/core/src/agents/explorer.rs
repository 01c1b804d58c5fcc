use rand_chacha::ChaCha8Rng;

use super::{
    episode_rng, random_walk_policy, AgentError, Decision, DecisionContext, Policy, PolicyKind,
};
use crate::episode::History;
use crate::oracle::{build_graph, KnowledgeGraph, OracleError};
use crate::worldgen::{ObjectRef, RoomId, WorldSpec};

/// Scripted cross-episode explorer.
///
/// Heads for the closest untraversed door it knows of, moving only through
/// doors it has already used, and picks up balls on the way as long as that
/// does not end the episode early. When no such door fits in the remaining
/// budget it collects what it can or acts randomly.
pub struct SystematicExplorer {
    seed: u64,
    rng: ChaCha8Rng,
    graph: Result<KnowledgeGraph, OracleError>,
    recorded: usize,
}

impl SystematicExplorer {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: episode_rng(seed, 0),
            graph: Err(OracleError::BadStart(0)),
            recorded: 0,
        }
    }

    /// Next door toward the nearest frontier, if one is affordable.
    fn frontier_step(
        graph: &KnowledgeGraph,
        world: &WorldSpec,
        here: RoomId,
        remaining: u32,
    ) -> Option<ObjectRef> {
        let reach = graph.bfs(world, here);
        let mut best: Option<(u32, RoomId, &str)> = None;
        for (room, (dist, _)) in &reach {
            if dist + 1 > remaining {
                continue;
            }
            for door in world.doors.iter().filter(|d| d.connects(*room)) {
                let fresh = graph.observed_doors.contains(&door.color)
                    && !graph.traversed_doors.contains(&door.color);
                let key = (*dist, *room, door.color.as_str());
                if fresh && best.is_none_or(|b| key < b) {
                    best = Some(key);
                }
            }
        }
        let (dist, target, door) = best?;
        if dist == 0 {
            return Some(ObjectRef::door(door));
        }
        let toward = graph.bfs(world, target);
        let (_, parent) = toward.get(&here)?;
        parent
            .as_ref()
            .map(|(_, color)| ObjectRef::door(color.clone()))
    }
}

impl Policy for SystematicExplorer {
    fn name(&self) -> &str {
        "systematic_explorer"
    }

    fn kind(&self) -> PolicyKind {
        PolicyKind::SystematicExplorer
    }

    fn begin_episode(&mut self, world: &WorldSpec, history: &History, episode_index: usize) {
        self.rng = episode_rng(self.seed, episode_index);
        self.graph = build_graph(history, world);
        self.recorded = 0;
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision, AgentError> {
        let world = ctx.world;
        let graph = self.graph.as_mut().map_err(|e| e.clone())?;
        graph.observe(ctx.observation, world)?;
        for i in self.recorded..ctx.events.len() {
            let next = ctx
                .events
                .get(i + 1)
                .map(|e| &e.observation)
                .unwrap_or(ctx.observation);
            graph.record(&ctx.events[i], next, world)?;
        }
        self.recorded = ctx.events.len();

        let remaining = world.door_budget.saturating_sub(ctx.state.doors_used);
        let frontier = Self::frontier_step(graph, world, ctx.state.current_room, remaining)
            .filter(|door| ctx.legal.contains(door));
        // The last ball ends the episode, so it waits until nothing is left to explore.
        let last_ball = ctx.state.balls_collected + 1 >= world.max_balls_per_episode;
        if !last_ball || frontier.is_none() {
            if let Some(ball) = ctx.legal.iter().find(|o| o.is_ball()) {
                return Ok(Decision::plain(ball.clone()));
            }
        }
        if let Some(door) = frontier {
            return Ok(Decision::plain(door));
        }
        random_walk_policy(ctx.legal, &mut self.rng).map(Decision::plain)
    }
}
