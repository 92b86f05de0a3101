//! Versioned, self-contained run snapshots.
//!
//! A snapshot holds the config, the city, the scenario and the full
//! [`SimState`], so a restored run continues exactly as the original would
//! have. Paths ending in `.gz` are compressed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::SimConfig;
use super::scenario::Scenario;
use super::sim::{SimState, Simulation};
use super::EngineError;
use crate::oracle::Oracle;
use crate::world::CityMap;

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub version: u32,
    pub config: SimConfig,
    /// City in its JSON file form.
    pub city: Value,
    pub scenario: Scenario,
    pub state: SimState,
}

fn snap_err(e: impl std::fmt::Display) -> EngineError {
    EngineError::Snapshot(e.to_string())
}

impl Snapshot {
    pub fn capture(sim: &Simulation) -> Result<Self, EngineError> {
        let city = sim.city().to_json()?;
        Ok(Self {
            version: SNAPSHOT_VERSION,
            config: sim.config().clone(),
            city: serde_json::from_str(&city).map_err(snap_err)?,
            scenario: sim.scenario().clone(),
            state: sim.state().clone(),
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, EngineError> {
        serde_json::to_vec(self).map_err(snap_err)
    }

    /// Parses a snapshot, checking the version before anything else.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EngineError> {
        let value: Value = serde_json::from_slice(bytes)
            .map_err(|e| snap_err(format!("corrupt snapshot: {e}")))?;
        let found = value
            .get("version")
            .and_then(Value::as_u64)
            .ok_or_else(|| snap_err("snapshot has no version"))?;
        if found != SNAPSHOT_VERSION as u64 {
            return Err(EngineError::VersionMismatch {
                found: found.min(u32::MAX as u64) as u32,
                expected: SNAPSHOT_VERSION,
            });
        }
        serde_json::from_value(value).map_err(|e| snap_err(format!("corrupt snapshot: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EngineError> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)
                .map_err(|e| EngineError::Io(format!("{}: {e}", dir.display())))?;
        }
        let file =
            File::create(path).map_err(|e| EngineError::Io(format!("{}: {e}", path.display())))?;
        let bytes = self.to_bytes()?;
        let io = |e: std::io::Error| EngineError::Io(e.to_string());
        if path.extension().is_some_and(|e| e == "gz") {
            let mut w = GzEncoder::new(BufWriter::new(file), Compression::default());
            w.write_all(&bytes).map_err(io)?;
            w.finish().map_err(io)?.flush().map_err(io)
        } else {
            let mut w = BufWriter::new(file);
            w.write_all(&bytes).map_err(io)?;
            w.flush().map_err(io)
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EngineError> {
        let path = path.as_ref();
        let file =
            File::open(path).map_err(|e| EngineError::Io(format!("{}: {e}", path.display())))?;
        let mut bytes = Vec::new();
        let res = if path.extension().is_some_and(|e| e == "gz") {
            GzDecoder::new(file).read_to_end(&mut bytes)
        } else {
            BufReader::new(file).read_to_end(&mut bytes)
        };
        res.map_err(|e| snap_err(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    /// Rebuilds the simulation around `oracle`.
    pub fn restore(self, oracle: Oracle) -> Result<Simulation, EngineError> {
        let text = serde_json::to_string(&self.city).map_err(snap_err)?;
        let city = CityMap::from_json(&text)?;
        Simulation::from_state(self.config, city, oracle, self.scenario, self.state)
    }

    /// Restores with the oracle the snapshot's config describes.
    pub fn restore_with_config_oracle(self) -> Result<Simulation, EngineError> {
        let oracle = Oracle::from_config(&self.config.oracle, self.config.seed)?;
        self.restore(oracle)
    }
}

impl Simulation {
    pub fn snapshot(&self) -> Result<Snapshot, EngineError> {
        Snapshot::capture(self)
    }

    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> Result<(), EngineError> {
        self.snapshot()?.save(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::event::NullSink;
    use crate::persona::generate_population;
    use crate::world::{generate_grid_city, GridCitySpec};

    fn sim() -> Simulation {
        let config = SimConfig {
            grid: GridCitySpec {
                rows: 2,
                cols: 2,
                pois_per_area: 12,
                ..Default::default()
            },
            ..Default::default()
        };
        let city = generate_grid_city(&config.grid);
        let personas = generate_population(4, &city, 5, &Default::default()).unwrap();
        Simulation::new(config, city, personas, Oracle::stub(0), Scenario::default()).unwrap()
    }

    #[test]
    fn round_trip_preserves_state() {
        let mut s = sim();
        s.run_until(60, &mut NullSink).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for name in ["s.json", "s.json.gz"] {
            let path = dir.path().join(name);
            s.save_snapshot(&path).unwrap();
            let back = Snapshot::load(&path).unwrap();
            assert_eq!(back, s.snapshot().unwrap());
            let restored = back.restore(Oracle::stub(0)).unwrap();
            assert_eq!(restored.state(), s.state());
        }
    }

    #[test]
    fn version_mismatch_and_corruption_are_errors() {
        let s = sim();
        let mut v: Value =
            serde_json::from_slice(&s.snapshot().unwrap().to_bytes().unwrap()).unwrap();
        v["version"] = 99.into();
        let bytes = serde_json::to_vec(&v).unwrap();
        assert!(matches!(
            Snapshot::from_bytes(&bytes),
            Err(EngineError::VersionMismatch {
                found: 99,
                expected: 1
            })
        ));
        assert!(matches!(
            Snapshot::from_bytes(b"{\"version\": 1, \"config\""),
            Err(EngineError::Snapshot(_))
        ));
        v["version"] = 1.into();
        v["state"]["clock"] = "noon".into();
        assert!(matches!(
            Snapshot::from_bytes(&serde_json::to_vec(&v).unwrap()),
            Err(EngineError::Snapshot(_))
        ));
    }
}
