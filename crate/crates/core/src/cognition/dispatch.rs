//! Perception dispatch: choose which module acts on the current observation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::needs::Need;
use crate::oracle::schema::DispatchReply;
use crate::oracle::{Oracle, OracleKind};
use crate::persona::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleChoice {
    Planning,
    Social,
    PlaceSelection,
    Vehicle,
    Rest,
    None,
}

impl ModuleChoice {
    pub const ALL: [ModuleChoice; 6] = [
        ModuleChoice::Planning,
        ModuleChoice::Social,
        ModuleChoice::PlaceSelection,
        ModuleChoice::Vehicle,
        ModuleChoice::Rest,
        ModuleChoice::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModuleChoice::Planning => "planning",
            ModuleChoice::Social => "social",
            ModuleChoice::PlaceSelection => "place_selection",
            ModuleChoice::Vehicle => "vehicle",
            ModuleChoice::Rest => "rest",
            ModuleChoice::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s.trim())
    }
}

impl fmt::Display for ModuleChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchDecision {
    pub module_choice: ModuleChoice,
    pub explanation: String,
    pub parameters: BTreeMap<String, String>,
}

impl DispatchDecision {
    pub fn none(explanation: &str) -> Self {
        Self {
            module_choice: ModuleChoice::None,
            explanation: explanation.to_owned(),
            parameters: BTreeMap::new(),
        }
    }

    pub fn param(&self, key: &str) -> Option<&str> {
        self.parameters.get(key).map(String::as_str)
    }
}

/// What the agent perceives at one tick.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub agent_id: AgentId,
    pub minute: u32,
    pub asleep: bool,
    pub dominant_need: Option<Need>,
    pub current_activity: String,
    pub current_category: String,
    /// The ongoing activity already addresses the dominant need.
    pub serves_need: bool,
    pub block_empty: bool,
    pub travelling: bool,
    pub colocated_contact: Option<AgentId>,
    pub online_contact: Option<AgentId>,
}

/// Routes the observation to a module. An unregistered choice is retried
/// once, then treated as `none`.
pub fn dispatch(
    observation: &Observation,
    available: &[ModuleChoice],
    oracle: &Oracle,
) -> DispatchDecision {
    if available.is_empty() {
        return DispatchDecision::none("no modules registered");
    }
    let mut ctx = serde_json::to_value(observation).unwrap_or(Value::Null);
    ctx["available"] = available
        .iter()
        .map(|m| m.as_str())
        .collect::<Vec<_>>()
        .into();
    for attempt in 0..2 {
        if attempt > 0 {
            ctx["retry"] = attempt.into();
        }
        match oracle.ask::<DispatchReply>(OracleKind::Dispatch, ctx.clone()) {
            Ok(reply) => match ModuleChoice::parse(&reply.module) {
                Some(m) if available.contains(&m) => {
                    return DispatchDecision {
                        module_choice: m,
                        explanation: reply.explanation,
                        parameters: reply.parameters,
                    }
                }
                _ => log::debug!(
                    "agent {}: dispatch named unregistered module {:?}",
                    observation.agent_id,
                    reply.module
                ),
            },
            Err(e) => {
                log::warn!("agent {}: dispatch failed: {e}", observation.agent_id);
                break;
            }
        }
    }
    DispatchDecision::none("fallback")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{OracleBackend, OracleError, OracleRequest, Repair, Reply};
    use serde_json::json;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    #[test]
    fn hunger_goes_to_place_selection() {
        let obs = Observation {
            dominant_need: Some(Need::Hunger),
            ..Default::default()
        };
        let d = dispatch(&obs, &ModuleChoice::ALL, &Oracle::stub(1));
        assert_eq!(d.module_choice, ModuleChoice::PlaceSelection);
        assert_eq!(d.param("category"), Some("restaurant"));
    }

    #[test]
    fn active_block_without_need_is_none() {
        let obs = Observation {
            current_activity: "work".into(),
            ..Default::default()
        };
        assert_eq!(
            dispatch(&obs, &ModuleChoice::ALL, &Oracle::stub(1)).module_choice,
            ModuleChoice::None
        );
    }

    struct Helicopter(Arc<AtomicUsize>);

    impl OracleBackend for Helicopter {
        fn complete(&self, _: &OracleRequest, _: Option<&Repair>) -> Result<Reply, OracleError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(Reply::Payload(
                json!({"module": "teleport", "explanation": "", "parameters": {}}),
            ))
        }
    }

    #[test]
    fn unregistered_module_twice_maps_to_none() {
        let calls = Arc::new(AtomicUsize::new(0));
        let oracle = Oracle::new(Box::new(Helicopter(calls.clone())));
        let d = dispatch(&Observation::default(), &ModuleChoice::ALL, &oracle);
        assert_eq!(d.module_choice, ModuleChoice::None);
        assert_eq!(calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn choice_outside_available_set_is_rejected() {
        let obs = Observation {
            dominant_need: Some(Need::Hunger),
            ..Default::default()
        };
        let d = dispatch(
            &obs,
            &[ModuleChoice::Planning, ModuleChoice::None],
            &Oracle::stub(1),
        );
        assert_eq!(d.module_choice, ModuleChoice::None);
    }
}
