use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agents::{LlmConfig, PolicyKind};
use crate::textio::{Instruction, InstructionId, InstructionSet};
use crate::worldgen::{
    generate_maze_with, generate_treasure_rooms_with, GridDims, MazeParams, Palette,
    TreasureParams, WorldKind, WorldSpec,
};

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_episodes() -> usize {
    20
}

fn default_instruction() -> String {
    InstructionId::TaskOriented.to_string()
}

fn default_p_drop() -> f64 {
    TreasureParams::default().p_drop
}

fn default_p_ball() -> f64 {
    TreasureParams::default().p_ball
}

fn default_n_balls() -> usize {
    MazeParams::default().n_balls
}

/// Experiment file as written by users (TOML).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    /// Instruction id: `task_oriented`, `soft_lower` or `soft_upper`.
    #[serde(default = "default_instruction")]
    pub instruction: String,
    /// Free-form instruction text; overrides `instruction`.
    #[serde(default)]
    pub instruction_text: Option<String>,
    /// Alternative `instructions.json`.
    #[serde(default)]
    pub instructions_file: Option<PathBuf>,
    /// Concurrent runs; 0 picks a default.
    #[serde(default)]
    pub parallelism: usize,
    pub world: WorldRef,
    pub agent: AgentSpec,
    #[serde(default)]
    pub matrix: Option<Matrix>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldRef {
    #[serde(default)]
    pub kind: Option<WorldKind>,
    /// `RxC`.
    #[serde(default)]
    pub dims: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_p_drop")]
    pub p_drop: f64,
    #[serde(default = "default_p_ball")]
    pub p_ball: f64,
    #[serde(default = "default_n_balls")]
    pub n_balls: usize,
    /// Load this `world.json` instead of generating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl WorldRef {
    pub fn generated(kind: WorldKind, dims: GridDims, seed: u64) -> Self {
        Self {
            kind: Some(kind),
            dims: Some(dims.to_string()),
            seed,
            p_drop: default_p_drop(),
            p_ball: default_p_ball(),
            n_balls: default_n_balls(),
            path: None,
        }
    }

    pub fn resolve(&self) -> Result<WorldSpec, HarnessError> {
        if let Some(path) = &self.path {
            return Ok(WorldSpec::load(path)?);
        }
        let kind = self
            .kind
            .ok_or_else(|| HarnessError::Config("world needs either `path` or `kind`".into()))?;
        let dims: GridDims = self
            .dims
            .as_deref()
            .ok_or_else(|| HarnessError::Config("world needs `dims`".into()))?
            .parse()?;
        let palette = Palette::builtin();
        Ok(match kind {
            WorldKind::TreasureRooms => {
                let params = TreasureParams {
                    p_drop: self.p_drop,
                    p_ball: self.p_ball,
                };
                generate_treasure_rooms_with(self.seed, dims, &params, &palette)?
            }
            WorldKind::Maze => {
                let params = MazeParams {
                    n_balls: self.n_balls,
                };
                generate_maze_with(self.seed, dims, &params, &palette)?
            }
        })
    }

    fn label(&self) -> String {
        match (&self.path, self.kind, &self.dims) {
            (Some(path), _, _) => path
                .file_stem()
                .map(|s| s.to_string_lossy().trim_end_matches(".world").to_string())
                .unwrap_or_else(|| "world".into()),
            (None, Some(kind), Some(dims)) => format!("{kind}-{dims}-s{}", self.seed),
            _ => "world".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub kind: PolicyKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm: Option<LlmConfig>,
    /// Per-episode action lists for the scripted agent, e.g. `["teal door"]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<Vec<Vec<String>>>,
}

impl AgentSpec {
    pub fn new(kind: PolicyKind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            llm: None,
            script: None,
        }
    }

    /// Model name for LLM agents, the policy kind otherwise.
    pub fn label(&self) -> String {
        match (&self.kind, &self.llm) {
            (PolicyKind::Llm, Some(llm)) => llm.model_name.clone(),
            (kind, _) => kind.to_string(),
        }
    }
}

/// Seeds to sweep. Every combination becomes one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Matrix {
    #[serde(default)]
    pub dims: Vec<String>,
    #[serde(default)]
    pub world_seeds: Vec<u64>,
    #[serde(default)]
    pub run_seeds: Vec<u64>,
}

/// One fully resolved run. Echoed into the log header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub name: String,
    pub output_dir: PathBuf,
    pub episodes: usize,
    pub instruction: Instruction,
    pub world: WorldRef,
    pub agent: AgentSpec,
}

impl RunConfig {
    pub fn new(
        output_dir: impl Into<PathBuf>,
        episodes: usize,
        instruction: Instruction,
        world: WorldRef,
        agent: AgentSpec,
    ) -> Self {
        let name = format!(
            "{}__{}__{}__r{}",
            world.label(),
            sanitize(&agent.label()),
            instruction.id,
            agent.seed
        );
        Self {
            name,
            output_dir: output_dir.into(),
            episodes,
            instruction,
            world,
            agent,
        }
    }

    pub fn log_path(&self) -> PathBuf {
        self.output_dir.join(format!("{}.jsonl", self.name))
    }

    pub fn world_path(&self) -> PathBuf {
        self.output_dir.join(format!("{}.world.json", self.name))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.episodes == 0 {
            return Err(HarnessError::Config("episodes must be at least 1".into()));
        }
        match self.agent.kind {
            PolicyKind::Llm if self.agent.llm.is_none() => Err(HarnessError::Config(
                "llm agent needs an [agent.llm] section".into(),
            )),
            PolicyKind::Scripted if self.agent.script.is_none() => {
                Err(HarnessError::Config("scripted agent needs `script`".into()))
            }
            _ => Ok(()),
        }
    }
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a config file; relative paths inside it are taken relative to the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let mut config = Self::from_toml(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut config.output_dir);
        if let Some(p) = config.world.path.as_mut() {
            rebase(p);
        }
        if let Some(p) = config.instructions_file.as_mut() {
            rebase(p);
        }
        if let Some(p) = config
            .agent
            .llm
            .as_mut()
            .and_then(|l| l.replay_file.as_mut())
        {
            rebase(p);
        }
        Ok(config)
    }

    pub fn instruction(&self) -> Result<Instruction, HarnessError> {
        if let Some(text) = &self.instruction_text {
            return Ok(Instruction::custom(text.clone()));
        }
        let set = match &self.instructions_file {
            Some(path) => InstructionSet::load(path)?,
            None => InstructionSet::builtin(),
        };
        Ok(set.get(self.instruction.parse()?)?)
    }

    /// Expands the seed matrix into individual runs.
    pub fn runs(&self) -> Result<Vec<RunConfig>, HarnessError> {
        let instruction = self.instruction()?;
        let matrix = self.matrix.clone().unwrap_or_default();
        let dims: Vec<Option<String>> = if matrix.dims.is_empty() {
            vec![self.world.dims.clone()]
        } else {
            matrix.dims.iter().cloned().map(Some).collect()
        };
        let world_seeds = if matrix.world_seeds.is_empty() {
            vec![self.world.seed]
        } else {
            matrix.world_seeds.clone()
        };
        let run_seeds = if matrix.run_seeds.is_empty() {
            vec![self.agent.seed]
        } else {
            matrix.run_seeds.clone()
        };
        if self.world.path.is_some() && (matrix.dims.len() > 1 || matrix.world_seeds.len() > 1) {
            return Err(HarnessError::Config(
                "a world loaded from `path` cannot be swept over dims or seeds".into(),
            ));
        }
        let mut runs = Vec::new();
        for d in &dims {
            for &world_seed in &world_seeds {
                for &run_seed in &run_seeds {
                    let world = WorldRef {
                        dims: d.clone(),
                        seed: world_seed,
                        ..self.world.clone()
                    };
                    let agent = AgentSpec {
                        seed: run_seed,
                        ..self.agent.clone()
                    };
                    let run = RunConfig::new(
                        &self.output_dir,
                        self.episodes,
                        instruction.clone(),
                        world,
                        agent,
                    );
                    run.validate()?;
                    runs.push(run);
                }
            }
        }
        Ok(runs)
    }
}
