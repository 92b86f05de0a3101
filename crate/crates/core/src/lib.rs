//! City-scale agent simulation.
//!
//! Agents carry personas, memories, needs and goals, plan their days, pick
//! places with a belief-weighted gravity model and talk to each other. Every
//! judgment that would normally come from a language model goes through the
//! [`oracle`], whose stub backend keeps runs deterministic.

pub mod analytics;
pub mod behavior;
pub mod cognition;
pub mod engine;
pub mod memory;
pub mod oracle;
pub mod persona;
pub mod rng;
pub mod social;
pub mod world;
