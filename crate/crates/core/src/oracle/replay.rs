//! Record/replay: a JSONL log of `{request_hash, kind, response}` lines
//! answered back by request digest.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{OracleBackend, OracleError, OracleKind, OracleRequest, Repair, Reply};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub request_hash: String,
    pub kind: OracleKind,
    pub response: Value,
}

#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    responses: HashMap<String, Value>,
}

impl ReplayBackend {
    pub fn from_records(records: impl IntoIterator<Item = ReplayRecord>) -> Self {
        Self {
            responses: records
                .into_iter()
                .map(|r| (r.request_hash, r.response))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

/// Loads a recorded log as a backend.
pub fn replay_log(path: impl AsRef<Path>) -> Result<ReplayBackend, OracleError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| {
        OracleError::Config(format!("cannot open replay log {}: {e}", path.display()))
    })?;
    let mut records = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| OracleError::Config(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ReplayRecord = serde_json::from_str(&line)
            .map_err(|e| OracleError::Config(format!("replay log line {}: {e}", i + 1)))?;
        records.push(record);
    }
    Ok(ReplayBackend::from_records(records))
}

impl OracleBackend for ReplayBackend {
    fn complete(&self, request: &OracleRequest, _: Option<&Repair>) -> Result<Reply, OracleError> {
        let digest = request.digest();
        self.responses
            .get(&digest)
            .cloned()
            .map(Reply::Payload)
            .ok_or(OracleError::ReplayMiss {
                kind: request.kind,
                digest,
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::Oracle;
    use serde_json::json;

    #[test]
    fn empty_log_misses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        std::fs::write(&path, "").unwrap();
        let oracle = Oracle::new(Box::new(replay_log(&path).unwrap()));
        let err = oracle
            .call(&OracleRequest::new(
                OracleKind::InitNeeds,
                json!({"agent_id": 1}),
            ))
            .unwrap_err();
        assert!(matches!(err, OracleError::ReplayMiss { .. }));
    }

    #[test]
    fn recorded_answers_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let req = OracleRequest::new(OracleKind::InitNeeds, json!({"agent_id": 1, "day": 0}));
        let recorder = Oracle::stub(5).record_to(&path).unwrap();
        let original = recorder.call(&req).unwrap().payload;
        recorder.flush().unwrap();
        let replay = Oracle::new(Box::new(replay_log(&path).unwrap()));
        assert_eq!(replay.call(&req).unwrap().payload, original);
        let other = OracleRequest::new(OracleKind::InitNeeds, json!({"agent_id": 2, "day": 0}));
        assert!(matches!(
            replay.call(&other),
            Err(OracleError::ReplayMiss { .. })
        ));
    }
}
