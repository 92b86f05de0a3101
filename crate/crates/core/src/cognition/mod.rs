//! Needs, long-term goals and perception dispatch.

pub mod dispatch;
pub mod goals;
pub mod needs;

pub use dispatch::{dispatch, DispatchDecision, ModuleChoice, Observation};
pub use goals::{goal_triggers, revise_goals, GoalError, GoalSet, TriggerReport};
pub use needs::{
    apply_need_effects, init_needs, need_fulfillment, record_dominant, Need, NeedsState,
};
