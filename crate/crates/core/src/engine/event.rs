//! Event records and the JSONL event log.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::EngineError;
use crate::persona::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Move,
    ActivityStart,
    ActivityEnd,
    Visit,
    Interaction,
    Interruption,
    Reflection,
    GoalRevision,
    NeedSnapshot,
    LifeEvent,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Move => "move",
            EventKind::ActivityStart => "activity_start",
            EventKind::ActivityEnd => "activity_end",
            EventKind::Visit => "visit",
            EventKind::Interaction => "interaction",
            EventKind::Interruption => "interruption",
            EventKind::Reflection => "reflection",
            EventKind::GoalRevision => "goal_revision",
            EventKind::NeedSnapshot => "need_snapshot",
            EventKind::LifeEvent => "life_event",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One log line. `time` is sim minutes, `tick` the tick index it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub tick: u64,
    pub time: u64,
    pub agent_id: AgentId,
    pub kind: EventKind,
    pub payload: Value,
}

impl EventRecord {
    pub fn new(tick: u64, time: u64, agent_id: AgentId, kind: EventKind, payload: Value) -> Self {
        Self {
            tick,
            time,
            agent_id,
            kind,
            payload,
        }
    }

    pub fn day(&self) -> u64 {
        self.time / 1440
    }

    pub fn f64(&self, key: &str) -> Option<f64> {
        self.payload.get(key).and_then(Value::as_f64)
    }

    pub fn u64(&self, key: &str) -> Option<u64> {
        self.payload.get(key).and_then(Value::as_u64)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.payload.get(key).and_then(Value::as_str)
    }

    pub fn bool(&self, key: &str) -> Option<bool> {
        self.payload.get(key).and_then(Value::as_bool)
    }
}

/// Destination for events, drained by the single-threaded commit phase.
pub trait EventSink {
    fn emit(&mut self, event: &EventRecord) -> Result<(), EngineError>;

    fn finish(&mut self) -> Result<(), EngineError> {
        Ok(())
    }
}

impl EventSink for Vec<EventRecord> {
    fn emit(&mut self, event: &EventRecord) -> Result<(), EngineError> {
        self.push(event.clone());
        Ok(())
    }
}

/// Discards everything.
#[derive(Debug, Default)]
pub struct NullSink;

impl EventSink for NullSink {
    fn emit(&mut self, _: &EventRecord) -> Result<(), EngineError> {
        Ok(())
    }
}

/// Serialized JSONL bytes kept in memory; handy for byte-level comparisons.
#[derive(Debug, Default)]
pub struct JsonlBuffer(pub Vec<u8>);

impl EventSink for JsonlBuffer {
    fn emit(&mut self, event: &EventRecord) -> Result<(), EngineError> {
        serde_json::to_writer(&mut self.0, event).map_err(|e| EngineError::Io(e.to_string()))?;
        self.0.push(b'\n');
        Ok(())
    }
}

enum Output {
    Plain(BufWriter<File>),
    Gzip(GzEncoder<BufWriter<File>>),
}

/// JSONL file writer, gzip-compressed when the path ends in `.gz`.
pub struct JsonlWriter {
    out: Option<Output>,
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

impl JsonlWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, EngineError> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)
                .map_err(|e| EngineError::Io(format!("{}: {e}", dir.display())))?;
        }
        let file =
            File::create(path).map_err(|e| EngineError::Io(format!("{}: {e}", path.display())))?;
        let w = BufWriter::new(file);
        let out = if is_gz(path) {
            Output::Gzip(GzEncoder::new(w, Compression::fast()))
        } else {
            Output::Plain(w)
        };
        Ok(Self { out: Some(out) })
    }

    fn writer(&mut self) -> Result<&mut dyn Write, EngineError> {
        match self.out.as_mut() {
            Some(Output::Plain(w)) => Ok(w),
            Some(Output::Gzip(w)) => Ok(w),
            None => Err(EngineError::Io("event log already closed".into())),
        }
    }
}

impl EventSink for JsonlWriter {
    fn emit(&mut self, event: &EventRecord) -> Result<(), EngineError> {
        let w = self.writer()?;
        serde_json::to_writer(&mut *w, event).map_err(|e| EngineError::Io(e.to_string()))?;
        w.write_all(b"\n")
            .map_err(|e| EngineError::Io(e.to_string()))
    }

    fn finish(&mut self) -> Result<(), EngineError> {
        let io = |e: std::io::Error| EngineError::Io(e.to_string());
        match self.out.take() {
            Some(Output::Plain(mut w)) => w.flush().map_err(io),
            Some(Output::Gzip(w)) => w.finish().map_err(io)?.flush().map_err(io),
            None => Ok(()),
        }
    }
}

impl Drop for JsonlWriter {
    fn drop(&mut self) {
        let _ = self.finish();
    }
}

pub fn parse_events(reader: impl BufRead) -> Result<Vec<EventRecord>, EngineError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| EngineError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let ev = serde_json::from_str(&line)
            .map_err(|e| EngineError::Io(format!("line {}: {e}", i + 1)))?;
        out.push(ev);
    }
    Ok(out)
}

/// Reads a JSONL log, transparently decompressing `.gz` files.
pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<EventRecord>, EngineError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| EngineError::Io(format!("{}: {e}", path.display())))?;
    let reader: Box<dyn Read> = if is_gz(path) {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    parse_events(BufReader::new(reader))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> Vec<EventRecord> {
        vec![
            EventRecord::new(0, 0, 1, EventKind::NeedSnapshot, json!({"hunger": 0.9})),
            EventRecord::new(
                3,
                15,
                2,
                EventKind::Move,
                json!({"from": 1, "to": 2, "vehicle": "walk"}),
            ),
        ]
    }

    #[test]
    fn kinds_serialize_in_snake_case() {
        let line = serde_json::to_string(&sample()[1]).unwrap();
        assert!(line.contains("\"kind\":\"move\""), "{line}");
        assert_eq!(
            serde_json::to_string(&EventKind::GoalRevision).unwrap(),
            format!("\"{}\"", EventKind::GoalRevision.as_str())
        );
    }

    #[test]
    fn plain_and_gzip_logs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["events.jsonl", "nested/events.jsonl.gz"] {
            let path = dir.path().join(name);
            let mut w = JsonlWriter::create(&path).unwrap();
            for e in sample() {
                w.emit(&e).unwrap();
            }
            w.finish().unwrap();
            assert_eq!(read_events(&path).unwrap(), sample());
        }
    }

    #[test]
    fn buffer_matches_file_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        let mut w = JsonlWriter::create(&path).unwrap();
        let mut buf = JsonlBuffer::default();
        for e in sample() {
            w.emit(&e).unwrap();
            buf.emit(&e).unwrap();
        }
        drop(w);
        assert_eq!(std::fs::read(&path).unwrap(), buf.0);
    }

    #[test]
    fn garbage_line_is_an_error() {
        assert!(parse_events("{\"tick\": 1}\n".as_bytes()).is_err());
    }
}
