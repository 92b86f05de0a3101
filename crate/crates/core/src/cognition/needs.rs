//! Need scores: initialization, decay, dominance and activity effects.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::oracle::schema::NeedScores;
use crate::oracle::{Oracle, OracleKind};
use crate::persona::Persona;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Need {
    Hunger,
    Energy,
    Safety,
    Social,
}

impl Need {
    /// Storage order of the score arrays.
    pub const ALL: [Need; 4] = [Need::Hunger, Need::Energy, Need::Safety, Need::Social];
    /// Highest priority first.
    pub const PRIORITY: [Need; 4] = [Need::Hunger, Need::Safety, Need::Energy, Need::Social];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Need::Hunger => "hunger",
            Need::Energy => "energy",
            Need::Safety => "safety",
            Need::Social => "social",
        }
    }

    pub fn parse(s: &str) -> Option<Need> {
        Need::ALL.into_iter().find(|n| n.as_str() == s)
    }
}

impl fmt::Display for Need {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const THRESHOLDS: [f64; 4] = [0.3, 0.3, 0.2, 0.2];
/// Score lost per hour.
pub const DEFAULT_DECAY: [f64; 4] = [0.06, 0.04, 0.01, 0.02];
pub const FALLBACK_SCORE: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeedsState {
    pub scores: [f64; 4],
    pub decay_rates: [f64; 4],
    pub thresholds: [f64; 4],
}

impl Default for NeedsState {
    fn default() -> Self {
        Self::new([FALLBACK_SCORE; 4])
    }
}

impl NeedsState {
    pub fn new(scores: [f64; 4]) -> Self {
        Self {
            scores: scores.map(|s| s.clamp(0.0, 1.0)),
            decay_rates: DEFAULT_DECAY,
            thresholds: THRESHOLDS,
        }
    }

    pub fn with_decay_rates(mut self, rates: [f64; 4]) -> Self {
        self.decay_rates = rates;
        self
    }

    pub fn get(&self, need: Need) -> f64 {
        self.scores[need.index()]
    }

    /// Linear decay over `minutes`, floored at zero.
    pub fn decay(&mut self, minutes: u32) {
        let hours = minutes as f64 / 60.0;
        for (s, a) in self.scores.iter_mut().zip(self.decay_rates) {
            *s = (*s - a * hours).max(0.0);
        }
    }

    /// Highest-priority need at or below its threshold.
    pub fn dominant(&self) -> Option<Need> {
        Need::PRIORITY
            .into_iter()
            .find(|n| self.scores[n.index()] <= self.thresholds[n.index()])
    }

    /// Every need strictly above its threshold.
    pub fn all_satisfied(&self) -> bool {
        (0..4).all(|i| self.scores[i] > self.thresholds[i])
    }

    pub fn apply_deltas(&mut self, deltas: [f64; 4]) {
        for (s, d) in self.scores.iter_mut().zip(deltas) {
            *s = (*s + d.clamp(-1.0, 1.0)).clamp(0.0, 1.0);
        }
    }
}

/// Updates the persona's plain-text dominant need and returns it.
pub fn record_dominant(persona: &mut Persona, state: &NeedsState) -> Option<Need> {
    let dominant = state.dominant();
    persona.dominant_need_text = dominant.map(|n| n.as_str().to_owned()).unwrap_or_default();
    dominant
}

/// Morning need scores from the oracle; all 0.8 if it fails.
pub fn init_needs(persona: &Persona, day: u64, weekday: bool, oracle: &Oracle) -> NeedsState {
    let ctx = json!({
        "agent_id": persona.agent_id,
        "day": day,
        "weekday": weekday,
        "age": persona.age,
        "occupation": persona.occupation.as_str(),
        "habits": persona.habits,
    });
    match oracle.ask::<NeedScores>(OracleKind::InitNeeds, ctx) {
        Ok(s) => NeedsState::new(s.to_array()),
        Err(e) => {
            log::warn!(
                "agent {}: init_needs failed, using defaults: {e}",
                persona.agent_id
            );
            NeedsState::default()
        }
    }
}

/// Applies the oracle's deltas for a finished activity; unchanged on failure.
pub fn apply_need_effects(
    state: &NeedsState,
    agent_id: u64,
    activity: &str,
    category: &str,
    completed: bool,
    oracle: &Oracle,
) -> NeedsState {
    let ctx = json!({
        "agent_id": agent_id,
        "activity": activity,
        "category": category,
        "completed": completed,
        "needs": NeedScores::from_array(state.scores),
    });
    let mut next = *state;
    match oracle.ask::<NeedScores>(OracleKind::NeedEffects, ctx) {
        Ok(d) => next.apply_deltas(d.to_array()),
        Err(e) => log::warn!("agent {agent_id}: need_effects failed: {e}"),
    }
    next
}

/// Fraction of sampled states in which every need exceeds its threshold.
pub fn need_fulfillment(log: &[NeedsState]) -> f64 {
    if log.is_empty() {
        return 0.0;
    }
    log.iter().filter(|s| s.all_satisfied()).count() as f64 / log.len() as f64
}
