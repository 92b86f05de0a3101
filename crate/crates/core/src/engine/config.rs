use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::oracle::OracleConfig;
use crate::world::GridCitySpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parallelism {
    #[default]
    Serial,
    /// Worker thread count; 0 lets rayon pick.
    Parallel(usize),
}

/// Where personas come from: a JSONL file or the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationConfig {
    pub path: Option<PathBuf>,
    pub n: usize,
    /// Optional TOML distribution spec for the generator.
    pub spec: Option<PathBuf>,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            path: None,
            n: 100,
            spec: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// City JSON. Without one a grid city is generated from `grid`.
    pub city: Option<PathBuf>,
    pub grid: GridCitySpec,
    pub population: PopulationConfig,
    pub days: u64,
    pub tick_minutes: u32,
    pub seed: u64,
    pub start_month: u8,
    pub parallelism: Parallelism,
    pub output_dir: PathBuf,
    /// Relative to `output_dir`. A `.gz` suffix compresses the log.
    pub event_log: PathBuf,
    pub scenario: Option<PathBuf>,
    pub oracle: OracleConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            city: None,
            grid: GridCitySpec::default(),
            population: PopulationConfig::default(),
            days: 1,
            tick_minutes: 5,
            seed: 0,
            start_month: 4,
            parallelism: Parallelism::Serial,
            output_dir: PathBuf::from("out"),
            event_log: PathBuf::from("events.jsonl"),
            scenario: None,
            oracle: OracleConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, EngineError> {
        let cfg: SimConfig =
            toml::from_str(text).map_err(|e| EngineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EngineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| EngineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.city.as_mut().map(fix);
        self.population.path.as_mut().map(fix);
        self.population.spec.as_mut().map(fix);
        self.scenario.as_mut().map(fix);
        fix(&mut self.output_dir);
        for p in [
            &mut self.oracle.template_dir,
            &mut self.oracle.record_path,
            &mut self.oracle.replay_path,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.days < 1 {
            return Err(EngineError::Config("days must be at least 1".into()));
        }
        if self.tick_minutes == 0
            || 1440 % self.tick_minutes != 0
            || !self.tick_minutes.is_multiple_of(5)
        {
            return Err(EngineError::Config(format!(
                "tick_minutes {} must be a multiple of 5 dividing 1440",
                self.tick_minutes
            )));
        }
        if !(1..=12).contains(&self.start_month) {
            return Err(EngineError::Config(format!(
                "start_month {} outside 1..=12",
                self.start_month
            )));
        }
        if self.population.path.is_none() && self.population.n == 0 {
            return Err(EngineError::Config("population.n must be positive".into()));
        }
        Ok(())
    }

    pub fn event_log_path(&self) -> PathBuf {
        self.output_dir.join(&self.event_log)
    }
}
