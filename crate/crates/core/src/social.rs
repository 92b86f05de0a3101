//! Social network with evolving per-edge beliefs and pairwise conversations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::behavior::place::sample_index;
use crate::behavior::Tier;
use crate::cognition::needs::{Need, NeedsState, THRESHOLDS};
use crate::oracle::schema::{ConverseReply, Outcome};
use crate::oracle::{Oracle, OracleKind};
use crate::persona::{AgentId, Persona};
use crate::world::{AreaId, CityMap};

pub const HOUSEHOLD_TIE: f64 = 0.8;
pub const COWORKER_TIE: f64 = 0.5;
pub const MAX_COWORKERS: usize = 10;
pub const DEMOGRAPHIC_K: usize = 5;
/// Candidates sampled per agent when looking for demographic neighbours.
pub const DEMOGRAPHIC_SAMPLE: usize = 50;
pub const STRANGER_WEIGHT: f64 = 0.05;
pub const SOCIAL_TICK_MINUTES: u32 = 30;
pub const POSITIVE_STEP: f64 = 0.05;
pub const NEGATIVE_STEP: f64 = 0.05;
pub const NEUTRAL_STEP: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SocialEdge {
    pub affinity: f64,
    pub trust: f64,
    pub familiarity: f64,
    pub last_interaction: Option<u64>,
}

impl SocialEdge {
    pub fn uniform(level: f64) -> Self {
        let level = level.clamp(0.0, 1.0);
        Self {
            affinity: level,
            trust: level,
            familiarity: level,
            last_interaction: None,
        }
    }

    pub fn scalar(&self) -> f64 {
        (self.affinity + self.trust + self.familiarity) / 3.0
    }

    /// Proportional-gap update, so every dimension stays in [0, 1].
    pub fn updated(&self, outcome: Outcome, now: u64) -> Self {
        let up = |d: f64| d + POSITIVE_STEP * (1.0 - d);
        let down = |d: f64| d - NEGATIVE_STEP * d;
        let (affinity, trust, familiarity) = match outcome {
            Outcome::Positive => (up(self.affinity), up(self.trust), up(self.familiarity)),
            Outcome::Negative => (
                down(self.affinity),
                down(self.trust),
                down(self.familiarity),
            ),
            Outcome::Neutral => (
                self.affinity,
                self.trust,
                self.familiarity + NEUTRAL_STEP * (1.0 - self.familiarity),
            ),
        };
        Self {
            affinity,
            trust,
            familiarity,
            last_interaction: Some(now),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    FaceToFace,
    Online,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::FaceToFace => "face_to_face",
            Mode::Online => "online",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "face_to_face" => Some(Mode::FaceToFace),
            "online" => Some(Mode::Online),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SocialNetwork {
    #[serde(with = "edge_list")]
    edges: BTreeMap<(AgentId, AgentId), SocialEdge>,
    contacts: BTreeMap<AgentId, Vec<(u64, AgentId)>>,
}

// JSON object keys must be strings, so the edge map is stored as a list.
mod edge_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Row {
        u: AgentId,
        v: AgentId,
        #[serde(flatten)]
        edge: SocialEdge,
    }

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<(AgentId, AgentId), SocialEdge>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.iter().map(|(&(u, v), &edge)| Row { u, v, edge }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<(AgentId, AgentId), SocialEdge>, D::Error> {
        let rows = Vec::<Row>::deserialize(d)?;
        Ok(rows.into_iter().map(|r| ((r.u, r.v), r.edge)).collect())
    }
}

impl SocialNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn edge(&self, u: AgentId, v: AgentId) -> Option<&SocialEdge> {
        self.edges.get(&(u, v))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (AgentId, AgentId, &SocialEdge)> {
        self.edges.iter().map(|(&(u, v), e)| (u, v, e))
    }

    /// Outgoing edges of `u`, ordered by target id.
    pub fn neighbours(&self, u: AgentId) -> impl Iterator<Item = (AgentId, &SocialEdge)> {
        self.edges
            .range((u, 0)..=(u, AgentId::MAX))
            .map(|(&(_, v), e)| (v, e))
    }

    /// Inserts or replaces a directed edge. Self-edges are ignored.
    pub fn set_edge(&mut self, u: AgentId, v: AgentId, edge: SocialEdge) {
        if u != v {
            self.edges.insert((u, v), edge);
        }
    }

    fn link(&mut self, u: AgentId, v: AgentId, level: f64) {
        if u == v {
            return;
        }
        self.edges
            .entry((u, v))
            .or_insert_with(|| SocialEdge::uniform(level));
        self.edges
            .entry((v, u))
            .or_insert_with(|| SocialEdge::uniform(level));
    }

    pub fn contacts(&self, u: AgentId) -> &[(u64, AgentId)] {
        self.contacts.get(&u).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Applies `outcome` to both directed edges, creating stranger edges on
    /// first contact, and logs the contact for both agents.
    pub fn record_interaction(&mut self, u: AgentId, v: AgentId, outcome: Outcome, now: u64) {
        if u == v {
            return;
        }
        for (a, b) in [(u, v), (v, u)] {
            let current = self
                .edges
                .get(&(a, b))
                .copied()
                .unwrap_or(SocialEdge::uniform(STRANGER_WEIGHT));
            self.edges
                .insert((a, b), update_edge(&current, outcome, now));
            self.contacts.entry(a).or_default().push((now, b));
        }
    }

    /// Weight used when `u` considers talking to `v`.
    pub fn weight(&self, u: AgentId, v: AgentId) -> f64 {
        self.edge(u, v).map_or(STRANGER_WEIGHT, SocialEdge::scalar)
    }
}

pub fn update_edge(edge: &SocialEdge, outcome: Outcome, now: u64) -> SocialEdge {
    edge.updated(outcome, now)
}

fn similarity(a: &Persona, area_a: Option<AreaId>, b: &Persona, area_b: Option<AreaId>) -> f64 {
    let age = (a.age as f64 - b.age as f64).abs() / 110.0;
    let occupation = if a.occupation == b.occupation {
        0.0
    } else {
        1.0
    };
    let area = if area_a.is_some() && area_a == area_b {
        0.0
    } else {
        1.0
    };
    1.0 - (age.min(1.0) + occupation + area) / 3.0
}

/// Demographic level for a pair with the given similarity.
pub fn demographic_tie(similarity: f64) -> f64 {
    0.3 + 0.2 * similarity
}

/// Builds the initial network: household members, coworkers or classmates
/// sharing a workplace, then the most similar agents among a random sample.
pub fn init_network(personas: &[Persona], city: &CityMap, seed: u64) -> SocialNetwork {
    let mut net = SocialNetwork::new();
    if personas.len() < 2 {
        return net;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x50C1A1);
    let home_area: Vec<Option<AreaId>> = personas
        .iter()
        .map(|p| city.poi(p.home_poi).map(|poi| poi.area_id))
        .collect();

    let mut households: BTreeMap<u64, Vec<AgentId>> = BTreeMap::new();
    let mut workplaces: BTreeMap<u64, Vec<AgentId>> = BTreeMap::new();
    for p in personas {
        households
            .entry(p.household_id)
            .or_default()
            .push(p.agent_id);
        if let Some(w) = p.work_poi {
            workplaces.entry(w).or_default().push(p.agent_id);
        }
    }
    for members in households.values() {
        for (i, &u) in members.iter().enumerate() {
            for &v in &members[i + 1..] {
                net.link(u, v, HOUSEHOLD_TIE);
            }
        }
    }
    for members in workplaces.values() {
        for &u in members {
            let mut others: Vec<AgentId> = members.iter().copied().filter(|&v| v != u).collect();
            others.shuffle(&mut rng);
            for v in others.into_iter().take(MAX_COWORKERS) {
                net.link(u, v, COWORKER_TIE);
            }
        }
    }
    let n = personas.len();
    for (i, p) in personas.iter().enumerate() {
        let mut pool: BTreeSet<usize> = BTreeSet::new();
        if n - 1 <= DEMOGRAPHIC_SAMPLE {
            pool.extend((0..n).filter(|&j| j != i));
        } else {
            while pool.len() < DEMOGRAPHIC_SAMPLE {
                let j = rng.random_range(0..n);
                if j != i {
                    pool.insert(j);
                }
            }
        }
        let mut scored: Vec<(f64, usize)> = pool
            .into_iter()
            .map(|j| (similarity(p, home_area[i], &personas[j], home_area[j]), j))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (sim, j) in scored.into_iter().take(DEMOGRAPHIC_K) {
            net.link(p.agent_id, personas[j].agent_id, demographic_tie(sim));
        }
    }
    net
}

/// Selection probabilities over `colocated` (excluding `u`), in input order.
/// Agents without an edge get the stranger weight.
pub fn partner_probabilities(
    u: AgentId,
    colocated: &[AgentId],
    net: &SocialNetwork,
) -> Vec<(AgentId, f64)> {
    let weights: Vec<(AgentId, f64)> = colocated
        .iter()
        .filter(|&&v| v != u)
        .map(|&v| (v, net.weight(u, v)))
        .collect();
    let total: f64 = weights.iter().map(|w| w.1).sum();
    if total <= 0.0 {
        return Vec::new();
    }
    weights.into_iter().map(|(v, w)| (v, w / total)).collect()
}

pub fn select_partner<R: Rng + ?Sized>(
    u: AgentId,
    colocated: &[AgentId],
    net: &SocialNetwork,
    rng: &mut R,
) -> Option<AgentId> {
    let probs = partner_probabilities(u, colocated, net);
    if probs.is_empty() {
        return None;
    }
    let p: Vec<f64> = probs.iter().map(|x| x.1).collect();
    Some(probs[sample_index(&p, rng)].0)
}

pub fn should_contact_online(needs: &NeedsState, current_tier: Option<Tier>) -> bool {
    needs.get(Need::Social) <= THRESHOLDS[Need::Social.index()]
        && current_tier == Some(Tier::Leisure)
}

/// Strongest existing contact of `u` that is not in `exclude`. Ties go to the
/// smaller id.
pub fn best_online_contact(
    u: AgentId,
    exclude: &BTreeSet<AgentId>,
    net: &SocialNetwork,
) -> Option<AgentId> {
    net.neighbours(u)
        .filter(|(v, _)| !exclude.contains(v))
        .fold(None, |best: Option<(AgentId, f64)>, (v, e)| match best {
            Some((_, s)) if s >= e.scalar() => best,
            _ => Some((v, e.scalar())),
        })
        .map(|(v, _)| v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub u: AgentId,
    pub v: AgentId,
    pub mode: Mode,
    pub outcome: Outcome,
    pub transcript: Vec<String>,
}

/// Runs one exchange. Oracle failure yields a neutral outcome with no
/// transcript.
pub fn converse(
    u: AgentId,
    v: AgentId,
    mode: Mode,
    net: &SocialNetwork,
    tick: u64,
    oracle: &Oracle,
) -> Conversation {
    let ctx = json!({
        "u": u,
        "v": v,
        "mode": mode.as_str(),
        "scalar_uv": net.weight(u, v),
        "scalar_vu": net.weight(v, u),
        "tick": tick,
    });
    let (outcome, transcript) = match oracle.ask::<ConverseReply>(OracleKind::Converse, ctx) {
        Ok(r) => (r.outcome, r.transcript),
        Err(e) => {
            log::warn!("conversation {u}->{v} failed: {e}");
            (Outcome::Neutral, Vec::new())
        }
    };
    Conversation {
        u,
        v,
        mode,
        outcome,
        transcript,
    }
}
