//! Long-term goals and the triggers that prompt their revision.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::memory::SpatialMemory;
use crate::oracle::schema::GoalsReply;
use crate::oracle::{Oracle, OracleError, OracleKind};
use crate::persona::{AgentId, Persona};
use crate::world::PoiId;

pub const STRESS_RATIO: f64 = 0.9;
pub const CONTACT_WINDOW_DAYS: u64 = 7;
pub const MIN_CONTACTS: usize = 3;
pub const INTEREST_WINDOW_DAYS: u64 = 30;
pub const REVISION_INTERVAL_DAYS: u64 = 30;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GoalSet {
    pub short_goals: Vec<String>,
    pub long_goals: Vec<String>,
    pub last_revision: u64,
    pub pending_life_event: Option<String>,
}

impl GoalSet {
    pub fn all(&self) -> impl Iterator<Item = &String> {
        self.short_goals.iter().chain(&self.long_goals)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TriggerReport {
    pub financial_stress: bool,
    pub social_isolation: bool,
    pub monthly_due: bool,
    pub life_event: bool,
    pub interest: f64,
}

impl TriggerReport {
    pub fn any(&self) -> bool {
        self.financial_stress || self.social_isolation || self.monthly_due || self.life_event
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GoalError {
    #[error("goal revision requested with no trigger fired")]
    NoTrigger,
    #[error("goal revision failed: {0}")]
    Oracle(#[from] OracleError),
}

pub fn financial_stress(persona: &Persona) -> bool {
    persona.income < STRESS_RATIO * persona.expenses
}

/// Evaluates every trigger at `now` (sim minutes). `contacts` and `visits`
/// are timestamped logs; only their recent windows are counted.
pub fn goal_triggers(
    persona: &Persona,
    goals: &GoalSet,
    contacts: &[(u64, AgentId)],
    visits: &[(u64, PoiId)],
    spatial: &SpatialMemory,
    now: u64,
) -> TriggerReport {
    let day = now / 1440;
    let contact_from = now.saturating_sub(CONTACT_WINDOW_DAYS * 1440);
    let unique: BTreeSet<AgentId> = contacts
        .iter()
        .filter(|(t, _)| *t >= contact_from && *t <= now)
        .map(|&(_, who)| who)
        .collect();
    let visit_from = now.saturating_sub(INTEREST_WINDOW_DAYS * 1440);
    let visited: Vec<PoiId> = visits
        .iter()
        .filter(|(t, _)| *t >= visit_from && *t <= now)
        .map(|&(_, p)| p)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    TriggerReport {
        financial_stress: financial_stress(persona),
        social_isolation: unique.len() < MIN_CONTACTS,
        monthly_due: day.saturating_sub(goals.last_revision) >= REVISION_INTERVAL_DAYS,
        life_event: goals.pending_life_event.is_some(),
        interest: spatial.interest_score(&visited),
    }
}

/// Asks the oracle for fresh goals. On failure the caller keeps its current
/// goals and the revision is not marked.
pub fn revise_goals(
    goals: &GoalSet,
    persona: &Persona,
    report: &TriggerReport,
    day: u64,
    oracle: &Oracle,
) -> Result<GoalSet, GoalError> {
    if !report.any() {
        return Err(GoalError::NoTrigger);
    }
    let ctx = json!({
        "agent_id": persona.agent_id,
        "day": day,
        "occupation": persona.occupation.as_str(),
        "age": persona.age,
        "income": persona.income,
        "expenses": persona.expenses,
        "hobbies": persona.hobbies,
        "triggers": report,
        "interest": report.interest,
        "life_event": goals.pending_life_event,
        "current_short_goals": goals.short_goals,
        "current_long_goals": goals.long_goals,
    });
    let reply: GoalsReply = oracle.ask(OracleKind::ReviseGoals, ctx)?;
    Ok(GoalSet {
        short_goals: reply.short_goals,
        long_goals: reply.long_goals,
        last_revision: day,
        pending_life_event: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn persona(income: f64, expenses: f64) -> Persona {
        let city = crate::world::generate_grid_city(&Default::default());
        let mut p = crate::persona::generate_population(1, &city, 1, &Default::default())
            .unwrap()
            .remove(0);
        p.income = income;
        p.expenses = expenses;
        p
    }

    #[test]
    fn stress_boundary() {
        assert!(financial_stress(&persona(100.0, 120.0)));
        assert!(!financial_stress(&persona(108.0, 120.0)));
        assert!(!financial_stress(&persona(120.0, 100.0)));
    }

    #[test]
    fn isolation_and_interest() {
        let p = persona(100.0, 50.0);
        let now = 10 * 1440;
        let contacts = [(now - 10, 1), (now - 20, 2), (now - 30, 3), (now - 40, 3)];
        let mut mem = SpatialMemory::new();
        let mut visits = Vec::new();
        for id in 0..10u64 {
            let sat = if id < 4 { 0.9 } else { 0.3 };
            mem.observe(id, [0.5, 0.5, sat, 0.5], now).unwrap();
            visits.push((now - 100, id));
        }
        let r = goal_triggers(&p, &GoalSet::default(), &contacts, &visits, &mem, now);
        assert!(!r.social_isolation);
        assert!((r.interest - 0.4).abs() < 1e-12);
        assert!(!r.monthly_due);
        let r = goal_triggers(&p, &GoalSet::default(), &contacts[..2], &visits, &mem, now);
        assert!(r.social_isolation);
        let old = [(now - 8 * 1440, 4), (now - 1, 1), (now - 2, 2)];
        assert!(goal_triggers(&p, &GoalSet::default(), &old, &[], &mem, now).social_isolation);
        assert!(goal_triggers(&p, &GoalSet::default(), &[], &[], &mem, 30 * 1440).monthly_due);
    }

    #[test]
    fn revision_cases() {
        let p = persona(100.0, 120.0);
        let stub = Oracle::stub(2);
        let none = TriggerReport::default();
        assert_eq!(
            revise_goals(&GoalSet::default(), &p, &none, 3, &stub),
            Err(GoalError::NoTrigger)
        );

        let stress = TriggerReport {
            financial_stress: true,
            ..Default::default()
        };
        let g = revise_goals(&GoalSet::default(), &p, &stress, 3, &stub).unwrap();
        assert!(g.short_goals.iter().any(|s| s.contains("save money")));
        assert_eq!(g.last_revision, 3);

        let monthly = TriggerReport {
            monthly_due: true,
            ..Default::default()
        };
        let a = revise_goals(&GoalSet::default(), &p, &monthly, 30, &stub).unwrap();
        let b = revise_goals(&GoalSet::default(), &p, &monthly, 30, &stub).unwrap();
        assert_eq!(a, b);
        assert!(!a.short_goals.is_empty());
    }
}
