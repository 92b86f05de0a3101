//! Per-agent memory: the temporal stream of observations, reflective
//! insights linked to it, and spatial beliefs about POIs.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::oracle::schema::ReflectReply;
use crate::oracle::{Oracle, OracleKind};
use crate::world::{CityMap, Poi, PoiId};

/// Initial belief uncertainty.
pub const SIGMA_B0: f64 = 0.25;
/// Observation noise.
pub const SIGMA_O: f64 = 0.2;
/// Daily pull toward the neutral belief.
pub const DECAY_LAMBDA: f64 = 0.03;
pub const NEUTRAL: f64 = 0.5;
/// Nodes returned by temporal retrieval.
pub const RETRIEVE_K: usize = 5;
pub const RETRIEVE_WINDOW_MIN: u64 = 1440;
/// Visited POIs averaged when imputing an unvisited one.
pub const IMPUTE_K: usize = 10;
pub const MAX_INSIGHTS: usize = 5;

pub const BELIEF_DIMS: [&str; 4] = ["price", "atmosphere", "satisfaction", "convenience"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MemoryError {
    #[error("time regression: node at {got} after {last}")]
    TimeRegression { last: u64, got: u64 },
    #[error("observation for {dim} is {value}, outside [0, 1]")]
    ObservationOutOfRange { dim: &'static str, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalNode {
    pub node_id: u64,
    pub time: u64,
    pub location: Option<PoiId>,
    pub observation: String,
    pub key: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectiveEntry {
    pub id: u64,
    pub text: String,
    pub evidence: Vec<u64>,
    pub day: u64,
}

/// Text embedding used for temporal retrieval.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Term-frequency vectors over lowercased alphanumeric tokens, feature-hashed
/// into a fixed number of buckets.
#[derive(Debug, Clone, Copy)]
pub struct BagOfWords {
    pub buckets: usize,
}

impl Default for BagOfWords {
    fn default() -> Self {
        Self { buckets: 1024 }
    }
}

impl Embedder for BagOfWords {
    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.buckets];
        for token in text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            let h = crate::rng::hash_str(&token.to_lowercase());
            v[(h % self.buckets as u64) as usize] += 1.0;
        }
        v
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Temporal stream plus reflective entries. Both draw ids from one counter,
/// so evidence can point at either.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodicMemory {
    next_id: u64,
    nodes: Vec<TemporalNode>,
    reflections: Vec<ReflectiveEntry>,
}

impl EpisodicMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nodes(&self) -> &[TemporalNode] {
        &self.nodes
    }

    pub fn reflections(&self) -> &[ReflectiveEntry] {
        &self.reflections
    }

    pub fn append_temporal(
        &mut self,
        time: u64,
        location: Option<PoiId>,
        observation: impl Into<String>,
        key: impl Into<String>,
    ) -> Result<u64, MemoryError> {
        if let Some(last) = self.nodes.last() {
            if time < last.time {
                return Err(MemoryError::TimeRegression {
                    last: last.time,
                    got: time,
                });
            }
        }
        let id = self.next_id;
        self.next_id += 1;
        self.nodes.push(TemporalNode {
            node_id: id,
            time,
            location,
            observation: observation.into(),
            key: key.into(),
        });
        Ok(id)
    }

    /// Top [`RETRIEVE_K`] nodes of the last 24 hours by cosine similarity to
    /// `query`; ties go to the more recent node, then the higher id.
    pub fn retrieve_temporal(
        &self,
        query: &str,
        now: u64,
        embedder: &dyn Embedder,
    ) -> Vec<&TemporalNode> {
        let q = embedder.embed(query);
        let mut scored: Vec<(f64, &TemporalNode)> = self
            .nodes
            .iter()
            .rev()
            .take_while(|n| n.time + RETRIEVE_WINDOW_MIN >= now)
            .filter(|n| n.time <= now)
            .map(|n| (cosine(&q, &embedder.embed(&n.observation)), n))
            .collect();
        scored.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(b.1.time.cmp(&a.1.time))
                .then(b.1.node_id.cmp(&a.1.node_id))
        });
        scored
            .into_iter()
            .take(RETRIEVE_K)
            .map(|(_, n)| n)
            .collect()
    }

    pub fn contains(&self, id: u64) -> bool {
        self.nodes.binary_search_by_key(&id, |n| n.node_id).is_ok()
            || self.reflections.binary_search_by_key(&id, |r| r.id).is_ok()
    }

    /// Nodes with `from <= time < to`.
    pub fn nodes_between(&self, from: u64, to: u64) -> &[TemporalNode] {
        let lo = self.nodes.partition_point(|n| n.time < from);
        let hi = self.nodes.partition_point(|n| n.time < to);
        &self.nodes[lo..hi]
    }

    /// Stores an insight if its evidence is non-empty and resolves.
    pub fn add_reflection(
        &mut self,
        text: impl Into<String>,
        evidence: Vec<u64>,
        day: u64,
    ) -> Option<u64> {
        if evidence.is_empty() || !evidence.iter().all(|&e| self.contains(e)) {
            return None;
        }
        let id = self.next_id;
        self.next_id += 1;
        self.reflections.push(ReflectiveEntry {
            id,
            text: text.into(),
            evidence,
            day,
        });
        Some(id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefVector {
    pub dims: [f64; 4],
    pub sigma: f64,
    pub visit_count: u32,
    pub last_update: u64,
}

impl Default for BeliefVector {
    fn default() -> Self {
        Self::prior()
    }
}

impl BeliefVector {
    /// Neutral belief for a place never seen.
    pub fn prior() -> Self {
        Self {
            dims: [NEUTRAL; 4],
            sigma: SIGMA_B0,
            visit_count: 0,
            last_update: 0,
        }
    }

    /// Scalar Kalman step with one gain shared by all four dimensions.
    pub fn kalman_update(&self, obs: [f64; 4], now: u64) -> Result<Self, MemoryError> {
        for (d, &o) in obs.iter().enumerate() {
            if !(0.0..=1.0).contains(&o) {
                return Err(MemoryError::ObservationOutOfRange {
                    dim: BELIEF_DIMS[d],
                    value: o,
                });
            }
        }
        let k = self.sigma / (self.sigma + SIGMA_O);
        let mut dims = self.dims;
        for (d, o) in dims.iter_mut().zip(obs) {
            *d = k * o + (1.0 - k) * *d;
        }
        Ok(Self {
            dims,
            sigma: (1.0 - k) * self.sigma,
            visit_count: self.visit_count + 1,
            last_update: now,
        })
    }

    pub fn decay(&mut self, lambda: f64) {
        for d in &mut self.dims {
            *d = (1.0 - lambda) * *d + lambda * NEUTRAL;
        }
    }

    /// Mean of the four dimensions, the attractiveness fed to place choice.
    pub fn attractiveness(&self) -> f64 {
        self.dims.iter().sum::<f64>() / 4.0
    }

    pub fn satisfaction(&self) -> f64 {
        self.dims[2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefSource {
    Observed,
    Imputed,
    Prior,
}

/// Beliefs about visited POIs only.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpatialMemory {
    beliefs: BTreeMap<PoiId, BeliefVector>,
}

impl SpatialMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, poi: PoiId) -> Option<&BeliefVector> {
        self.beliefs.get(&poi)
    }

    pub fn len(&self) -> usize {
        self.beliefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beliefs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PoiId, &BeliefVector)> {
        self.beliefs.iter()
    }

    /// Folds a visit's observation into the POI's belief, starting from the
    /// neutral prior on first visit.
    pub fn observe(
        &mut self,
        poi: PoiId,
        obs: [f64; 4],
        now: u64,
    ) -> Result<BeliefVector, MemoryError> {
        let current = self
            .beliefs
            .get(&poi)
            .copied()
            .unwrap_or_else(BeliefVector::prior);
        let updated = current.kalman_update(obs, now)?;
        self.beliefs.insert(poi, updated);
        Ok(updated)
    }

    /// Records a visit with no usable observation.
    pub fn note_visit(&mut self, poi: PoiId, now: u64) {
        let b = self.beliefs.entry(poi).or_insert_with(BeliefVector::prior);
        b.visit_count += 1;
        b.last_update = now;
    }

    pub fn decay_beliefs(&mut self) {
        for b in self.beliefs.values_mut() {
            b.decay(DECAY_LAMBDA);
        }
    }

    /// Estimates a belief for `target` from the [`IMPUTE_K`] most similar
    /// visited POIs (cosine over feature vectors). The result is not stored.
    pub fn impute_belief(&self, target: &Poi, city: &CityMap) -> (BeliefVector, BeliefSource) {
        let mut similar: Vec<(f64, PoiId, &BeliefVector)> = self
            .beliefs
            .iter()
            .filter_map(|(&id, b)| {
                city.poi(id)
                    .map(|p| (cosine(&target.feature_vector, &p.feature_vector), id, b))
            })
            .collect();
        if similar.is_empty() {
            return (BeliefVector::prior(), BeliefSource::Prior);
        }
        similar.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        similar.truncate(IMPUTE_K);
        let n = similar.len() as f64;
        let mut dims = [0.0; 4];
        let mut sigma: f64 = 0.0;
        for (_, _, b) in &similar {
            for (acc, d) in dims.iter_mut().zip(b.dims) {
                *acc += d / n;
            }
            sigma = sigma.max(b.sigma);
        }
        (
            BeliefVector {
                dims,
                sigma,
                visit_count: 0,
                last_update: 0,
            },
            BeliefSource::Imputed,
        )
    }

    /// Stored belief if visited, else an imputed one.
    pub fn belief_for(&self, poi: &Poi, city: &CityMap) -> (BeliefVector, BeliefSource) {
        match self.beliefs.get(&poi.id) {
            Some(b) => (*b, BeliefSource::Observed),
            None => self.impute_belief(poi, city),
        }
    }

    /// Share of `visited` POIs whose satisfaction belief exceeds 0.5.
    pub fn interest_score(&self, visited: &[PoiId]) -> f64 {
        if visited.is_empty() {
            return 0.0;
        }
        let liked = visited
            .iter()
            .filter(|p| {
                self.beliefs
                    .get(p)
                    .is_some_and(|b| b.satisfaction() > NEUTRAL)
            })
            .count();
        liked as f64 / visited.len() as f64
    }
}

/// Asks the oracle for up to five insights over the nodes recorded on `day`,
/// keeping only those whose evidence resolves.
pub fn nightly_reflection(
    memory: &mut EpisodicMemory,
    agent_id: u64,
    day: u64,
    oracle: &Oracle,
) -> Vec<ReflectiveEntry> {
    let nodes = memory.nodes_between(day * 1440, (day + 1) * 1440);
    if nodes.is_empty() {
        return Vec::new();
    }
    let ctx = json!({
        "agent_id": agent_id,
        "day": day,
        "nodes": nodes
            .iter()
            .map(|n| json!({"id": n.node_id, "time": n.time, "key": n.key, "observation": n.observation}))
            .collect::<Vec<_>>(),
    });
    let reply: ReflectReply = match oracle.ask(OracleKind::Reflect, ctx) {
        Ok(r) => r,
        Err(e) => {
            log::warn!("agent {agent_id}: reflection failed: {e}");
            return Vec::new();
        }
    };
    let before = memory.reflections.len();
    let mut seen: HashMap<String, ()> = HashMap::new();
    for insight in reply.insights.into_iter().take(MAX_INSIGHTS) {
        if seen.insert(insight.text.clone(), ()).is_some() {
            continue;
        }
        if memory
            .add_reflection(insight.text.clone(), insight.evidence, day)
            .is_none()
        {
            log::debug!("agent {agent_id}: dropped insight with unresolved evidence");
        }
    }
    memory.reflections[before..].to_vec()
}
