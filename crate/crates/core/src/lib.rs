//! Broadcast in the dual graph radio network model under fading
//! adversaries.
//!
//! The crate provides the round-level radio model, the uniform back-off
//! schedules, adversary policies (benign and worst-case), closed-form
//! success probabilities, the lower-bound gadget graphs, and a seeded,
//! parallel trial engine.

pub mod adversary;
pub mod cli;
pub mod config;
pub mod engine;
pub mod fit;
pub mod format;
pub mod gadgets;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod schedules;
pub mod units;
