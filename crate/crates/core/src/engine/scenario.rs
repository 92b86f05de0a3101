//! Life-event schedule injected into a run.
//!
//! ```toml
//! [[events]]
//! day = 3
//! agent_id = 12
//! tag = "job_loss"
//! occupation = "unemployed"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::persona::{AgentId, Occupation, Persona};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifeEvent {
    pub day: u64,
    pub agent_id: AgentId,
    pub tag: String,
    /// Optional new occupation, e.g. for a job loss or a new job.
    #[serde(default)]
    pub occupation: Option<Occupation>,
    #[serde(default)]
    pub income: Option<f64>,
}

impl LifeEvent {
    /// Applies the persona changes carried by the event.
    pub fn apply(&self, persona: &mut Persona) {
        if let Some(o) = self.occupation {
            persona.occupation = o;
            if !o.needs_workplace() {
                persona.work_poi = None;
            }
        }
        if let Some(i) = self.income {
            persona.income = i.max(0.0);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub events: Vec<LifeEvent>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, EngineError> {
        let mut s: Scenario =
            toml::from_str(text).map_err(|e| EngineError::Config(format!("scenario: {e}")))?;
        s.events.sort_by_key(|e| (e.day, e.agent_id));
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EngineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| EngineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn on_day(&self, day: u64) -> impl Iterator<Item = &LifeEvent> {
        self.events.iter().filter(move |e| e.day == day)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_sorts() {
        let s = Scenario::from_toml(
            r#"
            [[events]]
            day = 4
            agent_id = 1
            tag = "moved"
            [[events]]
            day = 2
            agent_id = 7
            tag = "job_loss"
            occupation = "unemployed"
            "#,
        )
        .unwrap();
        assert_eq!(s.events[0].day, 2);
        assert_eq!(s.events[0].occupation, Some(Occupation::Unemployed));
        assert_eq!(s.on_day(4).count(), 1);
        assert_eq!(s.on_day(5).count(), 0);
        assert!(Scenario::from_toml("[[events]]\nday = 1").is_err());
        assert_eq!(Scenario::from_toml("").unwrap(), Scenario::default());
    }
}
