use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    assign_names, placeholder_doors, shuffled_views, Ball, GridDims, Palette, RoomId, WorldError,
    WorldKind, WorldSpec,
};

/// Door traversals allowed per maze episode.
pub const MAZE_DOOR_BUDGET: u32 = 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MazeParams {
    pub n_balls: usize,
}

impl Default for MazeParams {
    fn default() -> Self {
        Self { n_balls: 8 }
    }
}

pub fn generate_maze(seed: u64, dims: GridDims) -> Result<WorldSpec, WorldError> {
    generate_maze_with(seed, dims, &MazeParams::default(), &Palette::builtin())
}

/// Randomized Kruskal over the grid lattice, start in the center room.
pub fn generate_maze_with(
    seed: u64,
    dims: GridDims,
    params: &MazeParams,
    palette: &Palette,
) -> Result<WorldSpec, WorldError> {
    if dims.rows < 3 || dims.cols < 3 {
        return Err(WorldError::DimsTooSmall(dims));
    }
    if dims.rows.is_multiple_of(2) || dims.cols.is_multiple_of(2) {
        return Err(WorldError::EvenDims(dims));
    }
    let n_rooms = dims.room_count();
    if params.n_balls > n_rooms - 1 {
        return Err(WorldError::TooManyBalls {
            rooms: n_rooms,
            balls: params.n_balls,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = RoomId::new(dims.rows / 2, dims.cols / 2);

    let mut candidates = dims.lattice_edges();
    candidates.shuffle(&mut rng);
    let mut sets = DisjointSets::new(n_rooms);
    let index_of = |room: RoomId| dims.index(room).expect("lattice room");
    let tree: Vec<_> = candidates
        .into_iter()
        .filter(|&(a, b)| sets.union(index_of(a), index_of(b)))
        .collect();
    let doors = placeholder_doors(&tree);

    let others: Vec<RoomId> = dims.rooms().into_iter().filter(|r| *r != start).collect();
    let mut chosen = index::sample(&mut rng, others.len(), params.n_balls).into_vec();
    chosen.sort_unstable();
    let balls: Vec<Ball> = chosen
        .into_iter()
        .enumerate()
        .map(|(i, room_idx)| Ball {
            color: format!("ball_{i}"),
            room: others[room_idx],
            reward: rng.gen_range(1..=10),
        })
        .collect();

    let views = shuffled_views(dims, &doors, &balls, &mut rng);
    let world = WorldSpec::from_layout(
        format!("maze-{dims}-s{seed}"),
        WorldKind::Maze,
        dims,
        doors,
        balls,
        start,
        seed,
        views,
    )?;
    assign_names(&world, palette, seed)
}

/// Union-find with path halving.
pub(crate) struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if `a` and `b` were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_and_even_dims_rejected() {
        assert!(matches!(
            generate_maze(1, GridDims::new(1, 1)),
            Err(WorldError::DimsTooSmall(_))
        ));
        assert!(matches!(
            generate_maze(1, GridDims::new(4, 5)),
            Err(WorldError::EvenDims(_))
        ));
    }

    #[test]
    fn seven_by_seven_is_a_spanning_tree() {
        let world = generate_maze(3, GridDims::new(7, 7)).unwrap();
        assert_eq!(world.rooms.len(), 49);
        assert_eq!(world.doors.len(), 48);
        assert_eq!(world.start_room, RoomId::new(3, 3));
        assert_eq!(world.door_budget, MAZE_DOOR_BUDGET);
        assert_eq!(world.balls.len(), 8);
        assert!(world.balls.iter().all(|b| b.room != world.start_room));
        let mut sets = DisjointSets::new(49);
        for door in &world.doors {
            let a = world.grid_dims.index(door.endpoints.0).unwrap();
            let b = world.grid_dims.index(door.endpoints.1).unwrap();
            assert!(sets.union(a, b), "cycle through {}", door.color);
        }
    }

    #[test]
    fn too_many_balls() {
        let params = MazeParams { n_balls: 9 };
        assert!(matches!(
            generate_maze_with(0, GridDims::new(3, 3), &params, &Palette::builtin()),
            Err(WorldError::TooManyBalls { .. })
        ));
        let params = MazeParams { n_balls: 8 };
        assert!(generate_maze_with(0, GridDims::new(3, 3), &params, &Palette::builtin()).is_ok());
    }
}
