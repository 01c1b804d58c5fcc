use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    assign_names, placeholder_doors, shuffled_views, Ball, GridDims, Palette, RoomId, WorldError,
    WorldKind, WorldSpec,
};

/// Sub-seed attempts before giving up on a layout.
const MAX_ATTEMPTS: u64 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreasureParams {
    /// Probability that each candidate door is removed.
    pub p_drop: f64,
    /// Probability that a room holds a ball.
    pub p_ball: f64,
}

impl Default for TreasureParams {
    fn default() -> Self {
        Self {
            p_drop: 0.01,
            p_ball: 0.4,
        }
    }
}

/// Dark Treasure Rooms with the bundled palette and default ball density.
pub fn generate_treasure_rooms(
    seed: u64,
    dims: GridDims,
    p_drop: f64,
) -> Result<WorldSpec, WorldError> {
    let params = TreasureParams {
        p_drop,
        ..TreasureParams::default()
    };
    generate_treasure_rooms_with(seed, dims, &params, &Palette::builtin())
}

/// Full lattice of rooms, each door independently dropped with `p_drop`.
/// Disconnected or ball-less draws are rejected and redrawn on the next sub-seed.
pub fn generate_treasure_rooms_with(
    seed: u64,
    dims: GridDims,
    params: &TreasureParams,
    palette: &Palette,
) -> Result<WorldSpec, WorldError> {
    if dims.rows < 2 || dims.cols < 2 {
        return Err(WorldError::DimsTooSmall(dims));
    }
    if !(0.0..0.5).contains(&params.p_drop) {
        return Err(WorldError::DropProbability(params.p_drop));
    }
    if !(params.p_ball > 0.0 && params.p_ball <= 1.0) {
        return Err(WorldError::BallProbability(params.p_ball));
    }
    let start = RoomId::new(0, 0);
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt);

        let edges: Vec<_> = dims
            .lattice_edges()
            .into_iter()
            .filter(|_| rng.gen::<f64>() >= params.p_drop)
            .collect();
        let doors = placeholder_doors(&edges);

        let mut balls = Vec::new();
        for room in dims.rooms() {
            if rng.gen_bool(params.p_ball) {
                balls.push(Ball {
                    color: format!("ball_{}", balls.len()),
                    room,
                    reward: rng.gen_range(1..=10),
                });
            }
        }
        if balls.is_empty() {
            continue;
        }
        let views = shuffled_views(dims, &doors, &balls, &mut rng);
        let world = match WorldSpec::from_layout(
            format!("treasure_rooms-{dims}-s{seed}"),
            WorldKind::TreasureRooms,
            dims,
            doors,
            balls,
            start,
            seed,
            views,
        ) {
            Ok(world) => world,
            Err(WorldError::Disconnected) => continue,
            Err(e) => return Err(e),
        };
        return assign_names(&world, palette, seed);
    }
    Err(WorldError::GenerationExhausted(MAX_ATTEMPTS))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_dims_rejected() {
        assert!(matches!(
            generate_treasure_rooms(1, GridDims::new(1, 5), 0.0),
            Err(WorldError::DimsTooSmall(_))
        ));
        assert!(matches!(
            generate_treasure_rooms(1, GridDims::new(3, 3), 0.5),
            Err(WorldError::DropProbability(_))
        ));
        assert!(matches!(
            generate_treasure_rooms(1, GridDims::new(3, 3), -0.1),
            Err(WorldError::DropProbability(_))
        ));
    }

    #[test]
    fn two_by_two_without_drops() {
        for seed in 0..20 {
            let world = generate_treasure_rooms(seed, GridDims::new(2, 2), 0.0).unwrap();
            assert_eq!(world.rooms.len(), 4);
            assert_eq!(world.doors.len(), 4);
            assert_eq!(world.door_budget, 2);
            assert_eq!(world.start_room, RoomId::new(0, 0));
        }
    }

    #[test]
    fn five_by_five_seed_seven_has_budget_eight() {
        let world = generate_treasure_rooms(7, GridDims::new(5, 5), 0.01).unwrap();
        assert_eq!(world.door_budget, 8);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_treasure_rooms(42, GridDims::new(4, 4), 0.01).unwrap();
        let b = generate_treasure_rooms(42, GridDims::new(4, 4), 0.01).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let c = generate_treasure_rooms(43, GridDims::new(4, 4), 0.01).unwrap();
        assert_ne!(a.to_json(), c.to_json());
    }

    #[test]
    fn heavy_drops_still_connected() {
        for seed in 0..50 {
            let world = generate_treasure_rooms(seed, GridDims::new(5, 5), 0.3).unwrap();
            world.validate().unwrap();
            assert!(world.is_connected());
        }
    }

    #[test]
    fn seven_by_seven_names_are_unique() {
        let world = generate_treasure_rooms(5, GridDims::new(7, 7), 0.0).unwrap();
        assert_eq!(world.doors.len(), 84);
        let mut names: Vec<_> = world.doors.iter().map(|d| &d.color).collect();
        names.extend(world.balls.iter().map(|b| &b.color));
        let total = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), total);
    }
}
