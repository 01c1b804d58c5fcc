//! Gap decomposition, run statistics and cross-run aggregation.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::History;
use crate::oracle::{build_graph, KnowledgeGraph, OracleError};
use crate::worldgen::{ObjectRef, RoomId, WorldSpec};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("returns out of order: r_max {r_max}, r_exploit {r_exploit}, r_agent {r_agent}")]
    Ordering {
        r_max: f64,
        r_exploit: f64,
        r_agent: f64,
    },
    #[error("history is empty")]
    EmptyHistory,
    #[error("series is empty")]
    EmptySeries,
    #[error("no runs to aggregate")]
    EmptyGroup,
    #[error("group {0} mixes worlds with different r_max; normalize to compare them")]
    MixedRmax(String),
    #[error("{0} has {1} entries, expected {2}")]
    Length(&'static str, usize, usize),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapScope {
    LastEpisode,
    MeanOverEpisodes,
    Episode,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Gaps {
    pub total: f64,
    pub exploit: f64,
    pub explore: f64,
}

impl Gaps {
    /// Exploit and explore shares of the total gap; zero when there is no gap.
    pub fn fractions(&self) -> (f64, f64) {
        if self.total > 0.0 {
            (self.exploit / self.total, self.explore / self.total)
        } else {
            (0.0, 0.0)
        }
    }

    fn scaled(&self, by: f64) -> Gaps {
        Gaps {
            total: self.total * by,
            exploit: self.exploit * by,
            explore: self.explore * by,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub scope: GapScope,
    pub r_max: f64,
    pub raw: Gaps,
    /// Raw gaps divided by `r_max` (zero for a world without reachable reward).
    pub normalized: Gaps,
}

impl GapReport {
    pub fn identity_residual(&self) -> f64 {
        (self.raw.total - self.raw.explore - self.raw.exploit).abs()
    }
}

/// Splits the gap between `r_max` and the agent's return into exploration and exploitation parts.
pub fn decompose(r_max: f64, r_exploit: f64, r_agent: f64) -> Result<GapReport, MetricsError> {
    if !(r_max >= r_exploit && r_exploit >= r_agent && r_agent >= 0.0) {
        return Err(MetricsError::Ordering {
            r_max,
            r_exploit,
            r_agent,
        });
    }
    let raw = Gaps {
        total: r_max - r_agent,
        exploit: r_exploit - r_agent,
        explore: r_max - r_exploit,
    };
    let normalized = if r_max > 0.0 {
        raw.scaled(1.0 / r_max)
    } else {
        Gaps::default()
    };
    Ok(GapReport {
        scope: GapScope::Episode,
        r_max,
        raw,
        normalized,
    })
}

fn mean_gaps(items: &[Gaps]) -> Gaps {
    let n = items.len().max(1) as f64;
    Gaps {
        total: items.iter().map(|g| g.total).sum::<f64>() / n,
        exploit: items.iter().map(|g| g.exploit).sum::<f64>() / n,
        explore: items.iter().map(|g| g.explore).sum::<f64>() / n,
    }
}

/// Arithmetic mean of per-episode reports.
pub fn mean_report(reports: &[GapReport]) -> Result<GapReport, MetricsError> {
    let first = reports.first().ok_or(MetricsError::EmptyHistory)?;
    let raw: Vec<Gaps> = reports.iter().map(|r| r.raw).collect();
    let normalized: Vec<Gaps> = reports.iter().map(|r| r.normalized).collect();
    Ok(GapReport {
        scope: GapScope::MeanOverEpisodes,
        r_max: first.r_max,
        raw: mean_gaps(&raw),
        normalized: mean_gaps(&normalized),
    })
}

/// Percentage of rooms seen across the whole history. The start room always counts.
pub fn coverage(history: &History, world: &WorldSpec) -> f64 {
    let graph = build_graph(history, world).unwrap_or_else(|_| KnowledgeGraph::empty(world));
    coverage_of(&graph, world)
}

pub fn coverage_of(graph: &KnowledgeGraph, world: &WorldSpec) -> f64 {
    100.0 * graph.visited_rooms.len() as f64 / world.rooms.len() as f64
}

/// Fraction of repeated (state, action) pairs, where a state is the room
/// together with the set of objects present in it.
pub fn redundancy(history: &History) -> Result<f64, MetricsError> {
    let total = history.interactions();
    if total == 0 {
        return Err(MetricsError::EmptyHistory);
    }
    let mut unique: HashSet<(RoomId, Vec<&ObjectRef>, &ObjectRef)> = HashSet::new();
    for event in history.trajectories.iter().flat_map(|t| &t.events) {
        let mut present: Vec<&ObjectRef> = event.observation.visible.iter().collect();
        present.sort();
        unique.insert((event.observation.room, present, &event.action));
    }
    Ok(1.0 - unique.len() as f64 / total as f64)
}

/// First 1-based interaction at which the series reaches 90% of its maximum.
pub fn sample_efficiency(series: &[u32]) -> Result<usize, MetricsError> {
    let max = *series.iter().max().ok_or(MetricsError::EmptySeries)?;
    let hit = series
        .iter()
        .position(|&v| 10 * u64::from(v) >= 9 * u64::from(max))
        .expect("the maximum itself qualifies");
    Ok(hit + 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    pub agent_return: u32,
    pub exploit_return: u32,
    pub coverage_pct: f64,
    pub interactions: usize,
    pub invalid_actions: u32,
    pub gaps: GapReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub model: String,
    pub instruction: String,
    pub env_kind: String,
    pub dims: String,
    pub world_id: String,
    pub seed: u64,
    pub run_seed: u64,
    pub r_max: u32,
    pub exploit_return_final: u32,
    pub agent_return_mean: f64,
    pub agent_return_final: u32,
    pub coverage_pct: f64,
    pub redundancy: f64,
    pub sample_efficiency: usize,
    pub invalid_actions: u32,
    pub episodes: usize,
    pub interactions: usize,
    pub last: GapReport,
    pub mean: GapReport,
    pub per_episode: Vec<EpisodeStats>,
}

/// Identification of a run, copied into its summary.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLabels {
    pub model: String,
    pub instruction: String,
    pub run_seed: u64,
}

/// Summarizes a finished run.
///
/// `per_interaction` holds the exploitation return after every interaction
/// and `invalid_per_episode` the count of unparseable replies per episode.
pub fn summarize_run(
    world: &WorldSpec,
    history: &History,
    per_interaction: &[u32],
    invalid_per_episode: &[u32],
    labels: &RunLabels,
) -> Result<RunSummary, MetricsError> {
    if history.is_empty() {
        return Err(MetricsError::EmptyHistory);
    }
    if per_interaction.len() != history.interactions() {
        return Err(MetricsError::Length(
            "exploit series",
            per_interaction.len(),
            history.interactions(),
        ));
    }
    if invalid_per_episode.len() != history.len() {
        return Err(MetricsError::Length(
            "invalid counts",
            invalid_per_episode.len(),
            history.len(),
        ));
    }
    let r_max = f64::from(world.r_max);
    let mut graph = KnowledgeGraph::empty(world);
    let mut per_episode = Vec::with_capacity(history.len());
    let mut offset = 0;
    let mut exploit = 0;
    for (trajectory, &invalid) in history.trajectories.iter().zip(invalid_per_episode) {
        graph.record_trajectory(trajectory, world)?;
        let n = trajectory.events.len();
        if n > 0 {
            exploit = per_interaction[offset + n - 1];
        }
        offset += n;
        let agent = trajectory.episode_return();
        let gaps = decompose(r_max, f64::from(exploit), f64::from(agent))?;
        per_episode.push(EpisodeStats {
            episode: trajectory.episode_index,
            agent_return: agent,
            exploit_return: exploit,
            coverage_pct: coverage_of(&graph, world),
            interactions: n,
            invalid_actions: invalid,
            gaps,
        });
    }
    let reports: Vec<GapReport> = per_episode.iter().map(|e| e.gaps).collect();
    let mut last = *reports.last().expect("nonempty history");
    last.scope = GapScope::LastEpisode;
    let final_stats = per_episode.last().expect("nonempty history");
    Ok(RunSummary {
        model: labels.model.clone(),
        instruction: labels.instruction.clone(),
        env_kind: world.kind.to_string(),
        dims: world.grid_dims.to_string(),
        world_id: world.world_id.clone(),
        seed: world.seed,
        run_seed: labels.run_seed,
        r_max: world.r_max,
        exploit_return_final: final_stats.exploit_return,
        agent_return_mean: per_episode
            .iter()
            .map(|e| f64::from(e.agent_return))
            .sum::<f64>()
            / per_episode.len() as f64,
        agent_return_final: final_stats.agent_return,
        coverage_pct: final_stats.coverage_pct,
        redundancy: redundancy(history).unwrap_or(0.0),
        sample_efficiency: if per_interaction.is_empty() {
            0
        } else {
            sample_efficiency(per_interaction)?
        },
        invalid_actions: invalid_per_episode.iter().sum(),
        episodes: history.len(),
        interactions: history.interactions(),
        last,
        mean: mean_report(&reports)?,
        per_episode,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    /// Sample standard deviation over the square root of n; zero for a single run.
    pub se: f64,
}

pub fn mean_se(values: &[f64]) -> MeanSe {
    let n = values.len();
    if n == 0 {
        return MeanSe::default();
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return MeanSe { mean, se: 0.0 };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    MeanSe {
        mean,
        se: (var / n as f64).sqrt(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub model: String,
    pub instruction: String,
    pub env_kind: String,
}

impl std::fmt::Display for GroupKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.model, self.instruction, self.env_kind)
    }
}

impl GroupKey {
    pub fn of(summary: &RunSummary) -> Self {
        Self {
            model: summary.model.clone(),
            instruction: summary.instruction.clone(),
            env_kind: summary.env_kind.clone(),
        }
    }
}

/// Aggregated fields, in reporting order.
pub const AGGREGATE_FIELDS: [&str; 15] = [
    "r_max",
    "exploit_return_final",
    "agent_return_mean",
    "agent_return_final",
    "last_total_gap",
    "last_exploit_gap",
    "last_explore_gap",
    "mean_total_gap",
    "mean_exploit_gap",
    "mean_explore_gap",
    "coverage_pct",
    "redundancy",
    "sample_efficiency",
    "invalid_actions",
    "interactions",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub key: GroupKey,
    pub n: usize,
    pub normalized: bool,
    /// Aligned with [`AGGREGATE_FIELDS`].
    pub stats: Vec<MeanSe>,
    /// Exploit and explore shares of the averaged last-episode gaps.
    pub last_fractions: (f64, f64),
    /// Exploit and explore shares of the averaged mean-over-episodes gaps.
    pub mean_fractions: (f64, f64),
}

impl GroupStats {
    pub fn get(&self, field: &str) -> Option<MeanSe> {
        AGGREGATE_FIELDS
            .iter()
            .position(|f| *f == field)
            .map(|i| self.stats[i])
    }
}

fn field_values(summary: &RunSummary, normalized: bool) -> [f64; 15] {
    let pick = |r: &GapReport| if normalized { r.normalized } else { r.raw };
    let last = pick(&summary.last);
    let mean = pick(&summary.mean);
    [
        f64::from(summary.r_max),
        f64::from(summary.exploit_return_final),
        summary.agent_return_mean,
        f64::from(summary.agent_return_final),
        last.total,
        last.exploit,
        last.explore,
        mean.total,
        mean.exploit,
        mean.explore,
        summary.coverage_pct,
        summary.redundancy,
        summary.sample_efficiency as f64,
        f64::from(summary.invalid_actions),
        summary.interactions as f64,
    ]
}

fn by_group(summaries: &[RunSummary]) -> BTreeMap<GroupKey, Vec<&RunSummary>> {
    let mut groups: BTreeMap<GroupKey, Vec<&RunSummary>> = BTreeMap::new();
    for s in summaries {
        groups.entry(GroupKey::of(s)).or_default().push(s);
    }
    groups
}

fn check_comparable(
    key: &GroupKey,
    runs: &[&RunSummary],
    normalized: bool,
) -> Result<(), MetricsError> {
    if !normalized && runs.iter().any(|r| r.r_max != runs[0].r_max) {
        return Err(MetricsError::MixedRmax(key.to_string()));
    }
    Ok(())
}

/// Means and standard errors per (model, instruction, environment kind).
///
/// Raw gaps are only comparable between worlds with equal `r_max`; pass
/// `normalized = true` to average normalized gaps instead.
pub fn aggregate(
    summaries: &[RunSummary],
    normalized: bool,
) -> Result<Vec<GroupStats>, MetricsError> {
    if summaries.is_empty() {
        return Err(MetricsError::EmptyGroup);
    }
    let mut out = Vec::new();
    for (key, runs) in by_group(summaries) {
        check_comparable(&key, &runs, normalized)?;
        let rows: Vec<[f64; 15]> = runs.iter().map(|r| field_values(r, normalized)).collect();
        let stats: Vec<MeanSe> = (0..AGGREGATE_FIELDS.len())
            .map(|i| mean_se(&rows.iter().map(|row| row[i]).collect::<Vec<_>>()))
            .collect();
        let gaps = |t: usize| Gaps {
            total: stats[t].mean,
            exploit: stats[t + 1].mean,
            explore: stats[t + 2].mean,
        };
        out.push(GroupStats {
            n: runs.len(),
            normalized,
            last_fractions: gaps(4).fractions(),
            mean_fractions: gaps(7).fractions(),
            stats,
            key,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub key: GroupKey,
    pub episode: usize,
    pub n: usize,
    pub agent_return: MeanSe,
    pub explore_gap: MeanSe,
    pub coverage_pct: MeanSe,
}

/// Per-episode means with standard errors, for plotting learning curves.
pub fn curves(summaries: &[RunSummary], normalized: bool) -> Result<Vec<CurvePoint>, MetricsError> {
    if summaries.is_empty() {
        return Err(MetricsError::EmptyGroup);
    }
    let mut out = Vec::new();
    for (key, runs) in by_group(summaries) {
        check_comparable(&key, &runs, normalized)?;
        let longest = runs.iter().map(|r| r.per_episode.len()).max().unwrap_or(0);
        for i in 0..longest {
            let at: Vec<&EpisodeStats> = runs.iter().filter_map(|r| r.per_episode.get(i)).collect();
            let column = |f: &dyn Fn(&EpisodeStats) -> f64| {
                mean_se(&at.iter().map(|e| f(e)).collect::<Vec<_>>())
            };
            out.push(CurvePoint {
                key: key.clone(),
                episode: i + 1,
                n: at.len(),
                agent_return: column(&|e| f64::from(e.agent_return)),
                explore_gap: column(&|e| {
                    if normalized {
                        e.gaps.normalized.explore
                    } else {
                        e.gaps.raw.explore
                    }
                }),
                coverage_pct: column(&|e| e.coverage_pct),
            });
        }
    }
    Ok(out)
}
