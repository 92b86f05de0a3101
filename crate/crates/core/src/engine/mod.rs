//! Tick loop, event log, snapshots and the scaling benchmark.

pub mod agent;
pub mod bench;
pub mod config;
pub mod event;
pub mod scenario;
pub mod sim;
pub mod snapshot;

pub use agent::{AgentState, Intent, Segment, StepOutput, Trip, World};
pub use bench::{bench_tier, run_bench, BenchConfig, BenchReport, BenchRow};
pub use config::{Parallelism, PopulationConfig, SimConfig};
pub use event::{
    parse_events, read_events, EventKind, EventRecord, EventSink, JsonlBuffer, JsonlWriter,
    NullSink,
};
pub use scenario::{LifeEvent, Scenario};
pub use sim::{RunSummary, SimState, Simulation};
pub use snapshot::{Snapshot, SNAPSHOT_VERSION};

use crate::oracle::OracleError;
use crate::persona::PersonaError;
use crate::world::WorldError;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Persona(#[from] PersonaError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("snapshot error: {0}")]
    Snapshot(String),
    #[error("snapshot version {found} not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
}

impl EngineError {
    /// Errors that stem from bad input rather than a failure mid-run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            EngineError::Config(_)
                | EngineError::World(_)
                | EngineError::Persona(_)
                | EngineError::Oracle(OracleError::Config(_))
        )
    }
}
