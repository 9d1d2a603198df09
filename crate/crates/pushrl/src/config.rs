//! Run configuration: one JSON document for every subcommand.

use std::path::{Path, PathBuf};

use pushrl_core::env::EnvConfig;
use pushrl_core::geom::Vec2;
use pushrl_core::physics::PusherParams;
use pushrl_core::planner::PetsConfig;
use pushrl_core::sac::SacConfig;
use serde::{Deserialize, Serialize};

use crate::checkpoint::AgentKind;
use crate::error::{Error, Result};
use crate::objects::ObjectLibrary;

/// Environment variable that overrides `seed`.
pub const SEED_ENV: &str = "PUSHRL_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub env: EnvConfig,
    pub physics: PhysicsConfig,
    pub agent: AgentConfig,
    pub scenario: ScenarioConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            env: EnvConfig::default(),
            physics: PhysicsConfig::default(),
            agent: AgentConfig::default(),
            scenario: ScenarioConfig::default(),
            output_dir: PathBuf::from("runs"),
        }
    }
}

/// Object used for training and single rollouts, looked up in the object
/// library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    pub object: String,
    /// Extra library merged over the builtin one.
    pub objects_file: Option<PathBuf>,
    pub pusher: PusherParams,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self { object: "square".into(), objects_file: None, pusher: PusherParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub kind: AgentKind,
    /// Environment step budget; overrides `pets.env_step_budget` for the
    /// planner.
    pub steps: usize,
    pub pets: PetsConfig,
    pub sac: SacConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self { kind: AgentKind::Mb, steps: 50_000, pets: PetsConfig::default(), sac: SacConfig::default() }
    }
}

/// Knobs shared by the builtin scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub trials: usize,
    /// Lattice counts along x and y.
    pub grid: [usize; 2],
    pub min_distance: f64,
    pub angle_offset_deg: f64,
    pub cof_offset: Vec2,
    /// Episodes of the band-goal scenarios.
    pub band_goals: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self { trials: 5, grid: [6, 9], min_distance: 0.1, angle_offset_deg: 20.0, cof_offset: Vec2::new(0.0, 0.015), band_goals: 20 }
    }
}

impl RunConfig {
    /// Parses and validates. Errors name the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::Config(format!("field `{path}` (line {}, column {}): {inner}", inner.line(), inner.column()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, e: &dyn std::fmt::Display| Error::Config(format!("field `{name}`: {e}"));
        self.env.validate().map_err(|e| field("env", &e))?;
        self.physics.pusher.validate().map_err(|e| field("physics.pusher", &e))?;
        if self.agent.steps == 0 {
            return Err(field("agent.steps", &"must be positive"));
        }
        self.agent.pets.validate().map_err(|e| field("agent.pets", &e))?;
        self.agent.sac.validate().map_err(|e| field("agent.sac", &e))?;
        let s = &self.scenario;
        if s.trials == 0 {
            return Err(field("scenario.trials", &"must be at least 1"));
        }
        if s.grid.contains(&0) {
            return Err(field("scenario.grid", &"counts must be positive"));
        }
        if !(s.min_distance >= 0.0) {
            return Err(field("scenario.min_distance", &"must be non-negative"));
        }
        if !s.angle_offset_deg.is_finite() || !s.cof_offset.is_finite() {
            return Err(field("scenario", &"offsets must be finite"));
        }
        Ok(())
    }

    /// Builtin objects plus `physics.objects_file`.
    pub fn library(&self) -> Result<ObjectLibrary> {
        let mut lib = ObjectLibrary::builtin();
        if let Some(p) = &self.physics.objects_file {
            lib.merge(ObjectLibrary::load(p)?);
        }
        Ok(lib)
    }

    /// Applies the seed override from the environment, if set.
    pub fn apply_seed_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v.trim().parse().map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))?;
        }
        Ok(())
    }
}
