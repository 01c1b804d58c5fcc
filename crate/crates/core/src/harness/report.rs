//! Tidy CSV reports over finished runs.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::runlog::read_log;
use super::HarnessError;
use crate::metrics::{aggregate, curves, GapReport, Gaps, MeanSe, RunSummary};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// Last-episode and mean gaps with their exploit/explore shares.
    GapsTable,
    /// Exploitation return, agent return, coverage, redundancy, sample efficiency.
    StatsTable,
    /// Per-episode series with standard errors.
    Curves,
    /// One row per run.
    Summary,
}

impl Layout {
    pub fn as_str(&self) -> &'static str {
        match self {
            Layout::GapsTable => "gaps_table",
            Layout::StatsTable => "stats_table",
            Layout::Curves => "curves",
            Layout::Summary => "summary",
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layout {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "gaps_table" => Layout::GapsTable,
            "stats_table" => Layout::StatsTable,
            "curves" => Layout::Curves,
            "summary" => Layout::Summary,
            _ => return Err(HarnessError::Config(format!("unknown layout {s:?}"))),
        })
    }
}

/// Summaries from the footers of every log matching `pattern`, in path order.
/// Logs without a footer are rejected.
pub fn load_summaries(pattern: &str) -> Result<Vec<RunSummary>, HarnessError> {
    let mut paths = Vec::new();
    for entry in glob::glob(pattern)? {
        let path = entry.map_err(|e| HarnessError::Io(e.into()))?;
        if path.to_string_lossy().ends_with(".jsonl") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(HarnessError::Config(format!("no logs match {pattern:?}")));
    }
    paths
        .iter()
        .map(|path| {
            read_log(path)?
                .footer
                .map(|f| f.summary)
                .ok_or_else(|| HarnessError::Log {
                    path: path.display().to_string(),
                    msg: "run is unfinished (no footer)".into(),
                })
        })
        .collect()
}

fn num(x: f64) -> String {
    format!("{x:.4}")
}

fn push_mean_se(row: &mut Vec<String>, v: MeanSe) {
    row.push(num(v.mean));
    row.push(num(v.se));
}

fn with_se(names: &[&str]) -> Vec<String> {
    names
        .iter()
        .flat_map(|n| [n.to_string(), format!("{n}_se")])
        .collect()
}

fn pick(report: &GapReport, normalized: bool) -> Gaps {
    if normalized {
        report.normalized
    } else {
        report.raw
    }
}

/// Renders `layout` as CSV. Groups mixing worlds with different `r_max`
/// are rejected unless `normalized` is set.
pub fn render_report(
    summaries: &[RunSummary],
    layout: Layout,
    normalized: bool,
) -> Result<String, HarnessError> {
    let mut out = csv::Writer::from_writer(Vec::new());
    let key_cols = ["model", "instruction", "env_kind"];
    match layout {
        Layout::GapsTable => {
            let mut header: Vec<String> = key_cols.iter().map(|s| s.to_string()).collect();
            header.push("n".into());
            for scope in ["last", "mean"] {
                header.extend(with_se(&[
                    &format!("{scope}_total_gap"),
                    &format!("{scope}_exploit_gap"),
                    &format!("{scope}_explore_gap"),
                ]));
                header.push(format!("{scope}_exploit_frac"));
                header.push(format!("{scope}_explore_frac"));
            }
            out.write_record(&header)?;
            for group in aggregate(summaries, normalized)? {
                let mut row = vec![
                    group.key.model.clone(),
                    group.key.instruction.clone(),
                    group.key.env_kind.clone(),
                    group.n.to_string(),
                ];
                for (scope, fractions) in [
                    ("last", group.last_fractions),
                    ("mean", group.mean_fractions),
                ] {
                    for part in ["total", "exploit", "explore"] {
                        push_mean_se(
                            &mut row,
                            group
                                .get(&format!("{scope}_{part}_gap"))
                                .expect("known field"),
                        );
                    }
                    row.push(num(fractions.0));
                    row.push(num(fractions.1));
                }
                out.write_record(&row)?;
            }
        }
        Layout::StatsTable => {
            let fields = [
                "exploit_return_final",
                "agent_return_mean",
                "agent_return_final",
                "coverage_pct",
                "redundancy",
                "sample_efficiency",
                "invalid_actions",
            ];
            let mut header: Vec<String> = key_cols.iter().map(|s| s.to_string()).collect();
            header.push("n".into());
            header.extend(with_se(&fields));
            out.write_record(&header)?;
            for group in aggregate(summaries, normalized)? {
                let mut row = vec![
                    group.key.model.clone(),
                    group.key.instruction.clone(),
                    group.key.env_kind.clone(),
                    group.n.to_string(),
                ];
                for field in fields {
                    push_mean_se(&mut row, group.get(field).expect("known field"));
                }
                out.write_record(&row)?;
            }
        }
        Layout::Curves => {
            let mut header: Vec<String> = key_cols.iter().map(|s| s.to_string()).collect();
            header.push("episode".into());
            header.push("n".into());
            header.extend(with_se(&["agent_return", "explore_gap", "coverage_pct"]));
            out.write_record(&header)?;
            for point in curves(summaries, normalized)? {
                let mut row = vec![
                    point.key.model.clone(),
                    point.key.instruction.clone(),
                    point.key.env_kind.clone(),
                    point.episode.to_string(),
                    point.n.to_string(),
                ];
                push_mean_se(&mut row, point.agent_return);
                push_mean_se(&mut row, point.explore_gap);
                push_mean_se(&mut row, point.coverage_pct);
                out.write_record(&row)?;
            }
        }
        Layout::Summary => {
            out.write_record([
                "model",
                "instruction",
                "env_kind",
                "dims",
                "seed",
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
                "episodes",
                "interactions",
            ])?;
            for s in summaries {
                let last = pick(&s.last, normalized);
                let mean = pick(&s.mean, normalized);
                out.write_record([
                    s.model.clone(),
                    s.instruction.clone(),
                    s.env_kind.clone(),
                    s.dims.clone(),
                    s.seed.to_string(),
                    s.r_max.to_string(),
                    s.exploit_return_final.to_string(),
                    num(s.agent_return_mean),
                    s.agent_return_final.to_string(),
                    num(last.total),
                    num(last.exploit),
                    num(last.explore),
                    num(mean.total),
                    num(mean.exploit),
                    num(mean.explore),
                    num(s.coverage_pct),
                    num(s.redundancy),
                    s.sample_efficiency.to_string(),
                    s.invalid_actions.to_string(),
                    s.episodes.to_string(),
                    s.interactions.to_string(),
                ])?;
            }
        }
    }
    let bytes = out
        .into_inner()
        .map_err(|e| HarnessError::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_report(
    summaries: &[RunSummary],
    layout: Layout,
    normalized: bool,
    out: impl AsRef<Path>,
) -> Result<(), HarnessError> {
    let text = render_report(summaries, layout, normalized)?;
    if let Some(parent) = out.as_ref().parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(out, text)?;
    Ok(())
}
