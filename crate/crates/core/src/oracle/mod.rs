//! The decision oracle: every open-ended agent judgment goes through
//! [`Oracle::call`], answered by a deterministic stub, an OpenAI-compatible
//! HTTP endpoint, or a recorded log.
//!
//! The front end owns validation, retries, caching and recording so all
//! backends share one contract: a response leaving this module always
//! validates against the schema of its [`OracleKind`].

mod http;
mod replay;
pub mod schema;
pub mod stub;
mod templates;

use std::collections::HashMap;
use std::fmt;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub use http::{extract_json, HttpBackend};
pub use replay::{replay_log, ReplayBackend, ReplayRecord};
pub use stub::StubBackend;
pub use templates::{parse_prompt, TemplateSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    InitNeeds,
    NeedEffects,
    AppraiseVisit,
    PlanMandatory,
    FillMedium,
    LeisureCandidates,
    SelectArea,
    ExtractIntention,
    SelectVehicle,
    Dispatch,
    Converse,
    Reflect,
    ReviseGoals,
}

impl OracleKind {
    pub const ALL: [OracleKind; 13] = [
        OracleKind::InitNeeds,
        OracleKind::NeedEffects,
        OracleKind::AppraiseVisit,
        OracleKind::PlanMandatory,
        OracleKind::FillMedium,
        OracleKind::LeisureCandidates,
        OracleKind::SelectArea,
        OracleKind::ExtractIntention,
        OracleKind::SelectVehicle,
        OracleKind::Dispatch,
        OracleKind::Converse,
        OracleKind::Reflect,
        OracleKind::ReviseGoals,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OracleKind::InitNeeds => "init_needs",
            OracleKind::NeedEffects => "need_effects",
            OracleKind::AppraiseVisit => "appraise_visit",
            OracleKind::PlanMandatory => "plan_mandatory",
            OracleKind::FillMedium => "fill_medium",
            OracleKind::LeisureCandidates => "leisure_candidates",
            OracleKind::SelectArea => "select_area",
            OracleKind::ExtractIntention => "extract_intention",
            OracleKind::SelectVehicle => "select_vehicle",
            OracleKind::Dispatch => "dispatch",
            OracleKind::Converse => "converse",
            OracleKind::Reflect => "reflect",
            OracleKind::ReviseGoals => "revise_goals",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for OracleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Serializes with object keys sorted at every level, independent of how
/// `serde_json` was compiled.
pub fn canonical_json(value: &Value) -> String {
    fn write(v: &Value, out: &mut String) {
        match v {
            Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                out.push('{');
                for (i, k) in keys.into_iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&Value::String(k.clone()).to_string());
                    out.push(':');
                    write(&map[k], out);
                }
                out.push('}');
            }
            Value::Array(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write(item, out);
                }
                out.push(']');
            }
            other => out.push_str(&other.to_string()),
        }
    }
    let mut out = String::new();
    write(value, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRequest {
    pub kind: OracleKind,
    pub context: Value,
}

impl OracleRequest {
    pub fn new(kind: OracleKind, context: Value) -> Self {
        Self { kind, context }
    }

    /// SHA-256 over the canonical `{kind, context}` encoding; the key for
    /// caching and record/replay.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.kind.as_str().as_bytes());
        hasher.update([0u8]);
        hasher.update(canonical_json(&self.context).as_bytes());
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResponse {
    pub payload: Value,
    pub raw_text: Option<String>,
    pub latency_ms: u64,
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("oracle request timed out after {0} ms")]
    Timeout(u64),
    #[error("oracle transport failure: {0}")]
    Transport(String),
    #[error("{kind} response failed validation after {attempts} attempts: {reason}")]
    Schema {
        kind: OracleKind,
        attempts: u32,
        reason: String,
    },
    #[error("no recorded response for {kind} request {digest}")]
    ReplayMiss { kind: OracleKind, digest: String },
    #[error("oracle misconfigured: {0}")]
    Config(String),
    #[error("oracle backend unavailable: {0}")]
    Unavailable(String),
}

impl OracleError {
    fn retryable(&self) -> bool {
        matches!(self, OracleError::Timeout(_) | OracleError::Transport(_))
    }
}

/// What a backend hands back for one attempt: either a structured payload
/// or free text that still needs JSON extraction.
#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    Payload(Value),
    Text(String),
}

/// The previous failed attempt, passed back so the backend can ask the model
/// to repair its answer.
#[derive(Debug, Clone, PartialEq)]
pub struct Repair {
    pub previous: String,
    pub reason: String,
}

pub trait OracleBackend: Send + Sync {
    fn complete(
        &self,
        request: &OracleRequest,
        repair: Option<&Repair>,
    ) -> Result<Reply, OracleError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Stub,
    Http,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub backend: BackendKind,
    pub base_url: Option<String>,
    pub model: Option<String>,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub max_retries: u32,
    pub timeout_ms: u64,
    pub cache: bool,
    pub max_in_flight: usize,
    pub backoff_base_ms: u64,
    pub template_dir: Option<PathBuf>,
    /// Append every backend answer to this JSONL log.
    pub record_path: Option<PathBuf>,
    /// Log answered from when `backend = "replay"`.
    pub replay_path: Option<PathBuf>,
    /// Amplitude of the stub's conversation-outcome noise.
    pub converse_noise: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Stub,
            base_url: None,
            model: None,
            api_key_env: "OPENAI_API_KEY".into(),
            max_retries: 2,
            timeout_ms: 30_000,
            cache: false,
            max_in_flight: 8,
            backoff_base_ms: 500,
            template_dir: None,
            record_path: None,
            replay_path: None,
            converse_noise: stub::DEFAULT_CONVERSE_NOISE,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OracleStats {
    pub calls: u64,
    pub cache_hits: u64,
    pub failures: u64,
}

pub struct Oracle {
    backend: Box<dyn OracleBackend>,
    max_retries: u32,
    backoff_base: Duration,
    cache: Option<Mutex<HashMap<String, Value>>>,
    recorder: Option<Mutex<BufWriter<std::fs::File>>>,
    calls: AtomicU64,
    cache_hits: AtomicU64,
    failures: AtomicU64,
}

impl fmt::Debug for Oracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Oracle")
            .field("max_retries", &self.max_retries)
            .field("cache", &self.cache.is_some())
            .field("recording", &self.recorder.is_some())
            .finish()
    }
}

impl Oracle {
    pub fn new(backend: Box<dyn OracleBackend>) -> Self {
        Self {
            backend,
            max_retries: 2,
            backoff_base: Duration::from_millis(500),
            cache: None,
            recorder: None,
            calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
            failures: AtomicU64::new(0),
        }
    }

    /// Deterministic rule-table oracle.
    pub fn stub(seed: u64) -> Self {
        Self::new(Box::new(StubBackend::new(seed)))
    }

    pub fn from_config(config: &OracleConfig, seed: u64) -> Result<Self, OracleError> {
        let backend: Box<dyn OracleBackend> = match config.backend {
            BackendKind::Stub => {
                Box::new(StubBackend::new(seed).with_converse_noise(config.converse_noise))
            }
            BackendKind::Http => Box::new(HttpBackend::from_config(config)?),
            BackendKind::Replay => {
                let path = config.replay_path.as_ref().ok_or_else(|| {
                    OracleError::Config("replay backend requires replay_path".into())
                })?;
                Box::new(replay_log(path)?)
            }
        };
        let mut oracle = Self::new(backend)
            .with_max_retries(config.max_retries)
            .with_backoff(Duration::from_millis(config.backoff_base_ms))
            .with_cache(config.cache);
        if let Some(path) = &config.record_path {
            oracle = oracle.record_to(path)?;
        }
        Ok(oracle)
    }

    pub fn with_max_retries(mut self, retries: u32) -> Self {
        self.max_retries = retries;
        self
    }

    pub fn with_backoff(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    pub fn with_cache(mut self, on: bool) -> Self {
        self.cache = on.then(|| Mutex::new(HashMap::new()));
        self
    }

    pub fn record_to(mut self, path: impl AsRef<Path>) -> Result<Self, OracleError> {
        let file = std::fs::File::create(path.as_ref())
            .map_err(|e| OracleError::Config(format!("cannot create record log: {e}")))?;
        self.recorder = Some(Mutex::new(BufWriter::new(file)));
        Ok(self)
    }

    pub fn stats(&self) -> OracleStats {
        OracleStats {
            calls: self.calls.load(Ordering::Relaxed),
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
            failures: self.failures.load(Ordering::Relaxed),
        }
    }

    /// Flushes the record log, if any.
    pub fn flush(&self) -> std::io::Result<()> {
        if let Some(rec) = &self.recorder {
            rec.lock().unwrap().flush()?;
        }
        Ok(())
    }

    pub fn call(&self, request: &OracleRequest) -> Result<OracleResponse, OracleError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let result = self.call_inner(request);
        if result.is_err() {
            self.failures.fetch_add(1, Ordering::Relaxed);
        }
        result
    }

    fn call_inner(&self, request: &OracleRequest) -> Result<OracleResponse, OracleError> {
        let digest = (self.cache.is_some() || self.recorder.is_some()).then(|| request.digest());
        if let (Some(cache), Some(d)) = (&self.cache, &digest) {
            if let Some(payload) = cache.lock().unwrap().get(d) {
                self.cache_hits.fetch_add(1, Ordering::Relaxed);
                return Ok(OracleResponse {
                    payload: payload.clone(),
                    raw_text: None,
                    latency_ms: 0,
                    cached: true,
                });
            }
        }

        let started = Instant::now();
        let attempts = self.max_retries + 1;
        let mut repair: Option<Repair> = None;
        let mut last_err = None;
        for attempt in 0..attempts {
            let reply = match self.backend.complete(request, repair.as_ref()) {
                Ok(r) => r,
                Err(e) if e.retryable() => {
                    if attempt + 1 < attempts {
                        std::thread::sleep(self.backoff_base * 2u32.pow(attempt));
                    }
                    last_err = Some(e);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let (payload, raw_text) = match reply {
                Reply::Payload(v) => (Ok(v), None),
                Reply::Text(t) => (extract_json(&t), Some(t)),
            };
            let checked = payload.and_then(|p| schema::validate(request.kind, &p).map(|_| p));
            match checked {
                Ok(payload) => {
                    if let (Some(cache), Some(d)) = (&self.cache, &digest) {
                        cache.lock().unwrap().insert(d.clone(), payload.clone());
                    }
                    if let (Some(rec), Some(d)) = (&self.recorder, &digest) {
                        let line = ReplayRecord {
                            request_hash: d.clone(),
                            kind: request.kind,
                            response: payload.clone(),
                        };
                        let mut w = rec.lock().unwrap();
                        serde_json::to_writer(&mut *w, &line)
                            .and_then(|_| w.write_all(b"\n").map_err(serde_json::Error::io))
                            .map_err(|e| {
                                OracleError::Config(format!("record log write failed: {e}"))
                            })?;
                    }
                    return Ok(OracleResponse {
                        payload,
                        raw_text,
                        latency_ms: started.elapsed().as_millis() as u64,
                        cached: false,
                    });
                }
                Err(reason) => {
                    log::debug!("{} attempt {} invalid: {reason}", request.kind, attempt + 1);
                    repair = Some(Repair {
                        previous: raw_text.unwrap_or_default(),
                        reason: reason.clone(),
                    });
                    last_err = Some(OracleError::Schema {
                        kind: request.kind,
                        attempts: attempt + 1,
                        reason,
                    });
                }
            }
        }
        Err(last_err.unwrap_or_else(|| OracleError::Unavailable("no attempts made".into())))
    }

    /// Calls and deserializes into the kind's reply type.
    pub fn ask<T: DeserializeOwned>(
        &self,
        kind: OracleKind,
        context: Value,
    ) -> Result<T, OracleError> {
        let response = self.call(&OracleRequest::new(kind, context))?;
        serde_json::from_value(response.payload).map_err(|e| OracleError::Schema {
            kind,
            attempts: 0,
            reason: e.to_string(),
        })
    }
}

/// Subjective 4-dimensional rating of a POI the agent is standing in, with
/// the model's reasoning. Out-of-range dimensions are clamped; `None` on
/// oracle failure.
pub fn appraise_visit(
    agent_id: u64,
    poi: &crate::world::Poi,
    oracle: &Oracle,
) -> Option<([f64; 4], String)> {
    let ctx = serde_json::json!({
        "agent_id": agent_id,
        "poi_id": poi.id,
        "name": poi.name,
        "category": poi.category.as_str(),
        "popularity": poi.popularity,
    });
    match oracle.ask::<schema::AppraisalReply>(OracleKind::AppraiseVisit, ctx) {
        Ok(r) => {
            let raw = [r.price, r.atmosphere, r.satisfaction, r.convenience];
            if raw.iter().any(|d| !(0.0..=1.0).contains(d)) {
                log::warn!(
                    "agent {agent_id}: appraisal of poi {} out of range, clamping",
                    poi.id
                );
            }
            Some((
                raw.map(|d| if d.is_nan() { 0.5 } else { d.clamp(0.0, 1.0) }),
                r.reasoning,
            ))
        }
        Err(e) => {
            log::warn!("agent {agent_id}: appraise_visit failed: {e}");
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::sync::atomic::AtomicUsize;
    use std::sync::Arc;

    struct Scripted {
        replies: Mutex<Vec<Result<Reply, OracleError>>>,
        seen: Arc<AtomicUsize>,
    }

    impl OracleBackend for Scripted {
        fn complete(&self, _: &OracleRequest, _: Option<&Repair>) -> Result<Reply, OracleError> {
            self.seen.fetch_add(1, Ordering::SeqCst);
            self.replies.lock().unwrap().remove(0)
        }
    }

    fn scripted(replies: Vec<Result<Reply, OracleError>>) -> (Oracle, Arc<AtomicUsize>) {
        let seen = Arc::new(AtomicUsize::new(0));
        let backend = Scripted {
            replies: Mutex::new(replies),
            seen: seen.clone(),
        };
        (
            Oracle::new(Box::new(backend)).with_backoff(Duration::from_millis(1)),
            seen,
        )
    }

    #[test]
    fn digest_ignores_key_order() {
        let a = OracleRequest::new(OracleKind::Dispatch, json!({"a": 1, "b": {"x": 1, "y": 2}}));
        let b = OracleRequest::new(OracleKind::Dispatch, json!({"b": {"y": 2, "x": 1}, "a": 1}));
        assert_eq!(a.digest(), b.digest());
        let c = OracleRequest::new(OracleKind::Reflect, json!({"a": 1, "b": {"x": 1, "y": 2}}));
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn malformed_replies_exhaust_retries_with_schema_error() {
        let (oracle, seen) = scripted(vec![
            Ok(Reply::Text("no json here".into())),
            Ok(Reply::Text("```json\n{\"hunger\": 1}\n```".into())),
            Ok(Reply::Payload(json!({"oops": true}))),
        ]);
        let err = oracle
            .call(&OracleRequest::new(OracleKind::InitNeeds, json!({})))
            .unwrap_err();
        assert!(
            matches!(err, OracleError::Schema { attempts: 3, .. }),
            "{err}"
        );
        assert_eq!(seen.load(Ordering::SeqCst), 3);
        assert_eq!(oracle.stats().failures, 1);
    }

    #[test]
    fn repair_attempt_can_succeed() {
        let good = json!({"hunger": 0.5, "energy": 0.5, "safety": 0.5, "social": 0.5});
        let (oracle, _) = scripted(vec![
            Ok(Reply::Text("garbage".into())),
            Ok(Reply::Payload(good.clone())),
        ]);
        let r = oracle
            .call(&OracleRequest::new(OracleKind::InitNeeds, json!({})))
            .unwrap();
        assert_eq!(r.payload, good);
    }

    #[test]
    fn transport_errors_retry_then_surface() {
        let (oracle, seen) = scripted(vec![
            Err(OracleError::Timeout(5)),
            Err(OracleError::Timeout(5)),
            Err(OracleError::Timeout(5)),
        ]);
        let err = oracle
            .call(&OracleRequest::new(OracleKind::InitNeeds, json!({})))
            .unwrap_err();
        assert_eq!(err, OracleError::Timeout(5));
        assert_eq!(seen.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn cache_serves_second_identical_request() {
        let oracle = Oracle::stub(7).with_cache(true);
        let req = OracleRequest::new(OracleKind::InitNeeds, json!({"agent_id": 1, "day": 0}));
        let first = oracle.call(&req).unwrap();
        let second = oracle.call(&req).unwrap();
        assert!(!first.cached);
        assert!(second.cached);
        assert_eq!(second.latency_ms, 0);
        assert_eq!(first.payload, second.payload);
        assert_eq!(oracle.stats().cache_hits, 1);
    }

    #[test]
    fn stub_is_referentially_transparent() {
        let req = OracleRequest::new(OracleKind::InitNeeds, json!({"agent_id": 3, "day": 2}));
        let a = Oracle::stub(7).call(&req).unwrap().payload;
        let b = Oracle::stub(7).call(&req).unwrap().payload;
        assert_eq!(a, b);
    }

    #[test]
    fn http_backend_requires_url_and_model() {
        let config = OracleConfig {
            backend: BackendKind::Http,
            ..Default::default()
        };
        assert!(matches!(
            Oracle::from_config(&config, 1),
            Err(OracleError::Config(_))
        ));
    }

    #[test]
    fn appraisal_of_popular_poi_stays_high_and_is_pure() {
        let city = crate::world::generate_grid_city(&Default::default());
        let stub = Oracle::stub(4);
        for poi in city.pois().iter().filter(|p| p.popularity >= 0.9) {
            let (a, _) = appraise_visit(1, poi, &stub).unwrap();
            assert!(a.iter().all(|d| (0.75..=1.0).contains(d)), "{a:?}");
            assert_eq!(appraise_visit(1, poi, &stub).unwrap().0, a);
        }
    }

    struct Negative;

    impl OracleBackend for Negative {
        fn complete(&self, _: &OracleRequest, _: Option<&Repair>) -> Result<Reply, OracleError> {
            Ok(Reply::Payload(json!({
                "price": -0.2, "atmosphere": 0.5, "satisfaction": 1.4, "convenience": 0.5, "reasoning": "odd"
            })))
        }
    }

    #[test]
    fn appraisal_is_clamped() {
        let city = crate::world::generate_grid_city(&Default::default());
        let (a, why) =
            appraise_visit(1, &city.pois()[0], &Oracle::new(Box::new(Negative))).unwrap();
        assert_eq!(a, [0.0, 0.5, 1.0, 0.5]);
        assert_eq!(why, "odd");
    }
}
