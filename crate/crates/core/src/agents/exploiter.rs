use rand_chacha::ChaCha8Rng;

use super::{
    episode_rng, random_walk_policy, AgentError, Decision, DecisionContext, Policy, PolicyKind,
};
use crate::episode::History;
use crate::oracle::{build_graph, exploit_plan, OracleError};
use crate::worldgen::{ObjectRef, WorldSpec};

/// Scripted exploiter that executes the oracle's plan for what it already knows.
///
/// Knowledge is frozen at the start of each episode. Once the plan is done,
/// or when nothing is known, it walks through random doors and never picks
/// up a ball, so its return is exactly the plan's value.
pub struct GreedyExploiter {
    seed: u64,
    rng: ChaCha8Rng,
    plan: Result<(u32, Vec<ObjectRef>), OracleError>,
}

impl GreedyExploiter {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: episode_rng(seed, 0),
            plan: Ok((0, Vec::new())),
        }
    }

    /// Value of the plan adopted for the current episode.
    pub fn planned_value(&self) -> Option<u32> {
        self.plan.as_ref().ok().map(|(v, _)| *v)
    }
}

impl Policy for GreedyExploiter {
    fn name(&self) -> &str {
        "greedy_exploiter"
    }

    fn kind(&self) -> PolicyKind {
        PolicyKind::GreedyExploiter
    }

    fn begin_episode(&mut self, world: &WorldSpec, history: &History, episode_index: usize) {
        self.rng = episode_rng(self.seed, episode_index);
        self.plan = build_graph(history, world).map(|graph| {
            let (solution, actions) = exploit_plan(&graph, world);
            (solution.value, actions)
        });
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision, AgentError> {
        let (_, plan) = self.plan.as_ref().map_err(|e| e.clone())?;
        if let Some(action) = plan.get(ctx.events.len()) {
            if !ctx.legal.contains(action) {
                return Err(AgentError::PlanDiverged(action.clone()));
            }
            return Ok(Decision::plain(action.clone()));
        }
        let doors: Vec<ObjectRef> = ctx.legal.iter().filter(|o| o.is_door()).cloned().collect();
        random_walk_policy(&doors, &mut self.rng).map(Decision::plain)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::{replay_actions, run_episode};
    use crate::oracle::exploit_value;
    use crate::testing::transcript_world;
    use crate::worldgen::{generate_treasure_rooms, GridDims};

    #[test]
    fn single_known_ball_two_doors_away() {
        let world = transcript_world();
        // One episode that sees rosewood (3) two doors away and nothing else valuable.
        let seen = replay_actions(
            &world,
            1,
            &[
                "dodger_blue door".parse().unwrap(),
                "cerulean door".parse().unwrap(),
            ],
        )
        .unwrap();
        let history = History {
            trajectories: vec![seen],
        };
        let mut policy = GreedyExploiter::new(0);
        let t = run_episode(&world, &mut policy, &history).unwrap();
        assert_eq!(t.episode_return(), 3);
        assert_eq!(t.events[0].action, ObjectRef::door("dodger_blue"));
        assert_eq!(t.events[1].action, ObjectRef::door("cerulean"));
        assert_eq!(t.events[2].action, ObjectRef::ball("rosewood"));
    }

    #[test]
    fn empty_knowledge_takes_doors_only() {
        let world = generate_treasure_rooms(4, GridDims::new(4, 4), 0.01).unwrap();
        let t = run_episode(&world, &mut GreedyExploiter::new(1), &History::new()).unwrap();
        assert!(t.events.iter().all(|e| e.action.is_door()));
        assert_eq!(t.episode_return(), 0);
    }

    #[test]
    fn return_equals_oracle_value_over_a_run() {
        let world = generate_treasure_rooms(12, GridDims::new(5, 5), 0.01).unwrap();
        let mut explorer = super::super::RandomWalk::new(3);
        let mut history = History::new();
        for _ in 0..5 {
            let t = run_episode(&world, &mut explorer, &history).unwrap();
            history.append(t).unwrap();
        }
        let mut policy = GreedyExploiter::new(9);
        let t = run_episode(&world, &mut policy, &history).unwrap();
        let value = exploit_value(&build_graph(&history, &world).unwrap(), &world).value;
        assert_eq!(t.episode_return(), value);
        assert_eq!(policy.planned_value(), Some(value));
    }
}
