//! Response shapes, one per [`OracleKind`]. A payload is valid when it
//! deserializes into the kind's reply type and every number in it is finite.
//! Range clamping is left to the caller, which knows the fallback rules.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::OracleKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeedScores {
    pub hunger: f64,
    pub energy: f64,
    pub safety: f64,
    pub social: f64,
}

impl NeedScores {
    pub fn to_array(self) -> [f64; 4] {
        [self.hunger, self.energy, self.safety, self.social]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            hunger: a[0],
            energy: a[1],
            safety: a[2],
            social: a[3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppraisalReply {
    pub price: f64,
    pub atmosphere: f64,
    pub satisfaction: f64,
    pub convenience: f64,
    pub reasoning: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposedBlock {
    pub start: u32,
    pub duration: u32,
    pub activity: String,
    pub category: String,
    #[serde(default)]
    pub location: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanMandatoryReply {
    pub blocks: Vec<ProposedBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposedTask {
    pub activity: String,
    pub category: String,
    pub duration: u32,
    #[serde(default)]
    pub location: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillMediumReply {
    pub task: Option<ProposedTask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeisureCandidateReply {
    pub description: String,
    pub category: String,
    pub duration: u32,
    #[serde(default)]
    pub location: String,
    pub expected_desire: NeedScores,
    #[serde(default)]
    pub serves_goal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeisureReply {
    pub candidates: Vec<LeisureCandidateReply>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectAreaReply {
    pub area_id: u64,
    #[serde(default)]
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentionReply {
    pub categories: Vec<String>,
    pub max_radius_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleReply {
    pub vehicle: String,
    #[serde(default)]
    pub justification: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchReply {
    pub module: String,
    #[serde(default)]
    pub explanation: String,
    #[serde(default)]
    pub parameters: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Positive,
    Neutral,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConverseReply {
    pub outcome: Outcome,
    #[serde(default)]
    pub transcript: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsightReply {
    pub text: String,
    pub evidence: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectReply {
    pub insights: Vec<InsightReply>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalsReply {
    pub short_goals: Vec<String>,
    pub long_goals: Vec<String>,
}

fn all_finite(v: &Value) -> bool {
    match v {
        Value::Number(n) => n.as_f64().is_some_and(f64::is_finite),
        Value::Array(a) => a.iter().all(all_finite),
        Value::Object(o) => o.values().all(all_finite),
        _ => true,
    }
}

fn shape<T: DeserializeOwned>(payload: &Value) -> Result<(), String> {
    serde_json::from_value::<T>(payload.clone())
        .map(|_| ())
        .map_err(|e| e.to_string())
}

/// Checks `payload` against the reply shape of `kind`.
pub fn validate(kind: OracleKind, payload: &Value) -> Result<(), String> {
    if !payload.is_object() {
        return Err("payload must be a JSON object".into());
    }
    if !all_finite(payload) {
        return Err("payload contains a non-finite number".into());
    }
    match kind {
        OracleKind::InitNeeds | OracleKind::NeedEffects => shape::<NeedScores>(payload),
        OracleKind::AppraiseVisit => shape::<AppraisalReply>(payload),
        OracleKind::PlanMandatory => shape::<PlanMandatoryReply>(payload),
        OracleKind::FillMedium => shape::<FillMediumReply>(payload),
        OracleKind::LeisureCandidates => shape::<LeisureReply>(payload),
        OracleKind::SelectArea => shape::<SelectAreaReply>(payload),
        OracleKind::ExtractIntention => shape::<IntentionReply>(payload),
        OracleKind::SelectVehicle => shape::<VehicleReply>(payload),
        OracleKind::Dispatch => shape::<DispatchReply>(payload),
        OracleKind::Converse => shape::<ConverseReply>(payload),
        OracleKind::Reflect => shape::<ReflectReply>(payload),
        OracleKind::ReviseGoals => shape::<GoalsReply>(payload),
    }
}

/// Example reply, embedded in prompts so the model sees the expected shape.
pub fn example(kind: OracleKind) -> &'static str {
    match kind {
        OracleKind::InitNeeds => r#"{"hunger": 0.8, "energy": 0.9, "safety": 0.95, "social": 0.7}"#,
        OracleKind::NeedEffects => {
            r#"{"hunger": 0.6, "energy": 0.0, "safety": 0.1, "social": 0.0}"#
        }
        OracleKind::AppraiseVisit => {
            r#"{"price": 0.6, "atmosphere": 0.7, "satisfaction": 0.8, "convenience": 0.5, "reasoning": "..."}"#
        }
        OracleKind::PlanMandatory => {
            r#"{"blocks": [{"start": 0, "duration": 420, "activity": "sleep", "category": "sleep", "location": "home"}]}"#
        }
        OracleKind::FillMedium => {
            r#"{"task": {"activity": "lunch", "category": "meal", "duration": 45, "location": "out"}} or {"task": null}"#
        }
        OracleKind::LeisureCandidates => {
            r#"{"candidates": [{"description": "grab coffee at a cafe", "category": "leisure", "duration": 30, "location": "out", "expected_desire": {"hunger": 0.6, "energy": 0.7, "safety": 0.9, "social": 0.6}, "serves_goal": false}]}"#
        }
        OracleKind::SelectArea => r#"{"area_id": 3, "reason": "..."}"#,
        OracleKind::ExtractIntention => r#"{"categories": ["cafe"], "max_radius_m": 1500}"#,
        OracleKind::SelectVehicle => r#"{"vehicle": "walk", "justification": "..."}"#,
        OracleKind::Dispatch => {
            r#"{"module": "place_selection", "explanation": "...", "parameters": {"category": "restaurant"}}"#
        }
        OracleKind::Converse => r#"{"outcome": "positive", "transcript": ["A: ...", "B: ..."]}"#,
        OracleKind::Reflect => r#"{"insights": [{"text": "...", "evidence": [8, 13]}]}"#,
        OracleKind::ReviseGoals => r#"{"short_goals": ["..."], "long_goals": ["..."]}"#,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn rejects_wrong_shapes() {
        assert!(validate(OracleKind::InitNeeds, &json!({"hunger": 1})).is_err());
        assert!(validate(OracleKind::InitNeeds, &json!([1, 2])).is_err());
        assert!(validate(OracleKind::Converse, &json!({"outcome": "ecstatic"})).is_err());
        assert!(validate(
            OracleKind::InitNeeds,
            &json!({"hunger": 1.3, "energy": 0.1, "safety": 0.2, "social": 0.3})
        )
        .is_ok());
    }

    #[test]
    fn examples_parse_as_json_objects() {
        for kind in OracleKind::ALL {
            let text = example(kind).split(" or ").next().unwrap();
            let v: Value = serde_json::from_str(text).unwrap();
            assert!(v.is_object(), "{kind:?}");
        }
    }
}
