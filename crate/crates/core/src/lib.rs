//! Knowledge-driven ad hoc teamwork in the Fort Attack domain.
//!
//! The crate is organised around the pieces of the architecture:
//!
//! * [`env`]: the discrete Fort Attack simulator.
//! * [`policies`]: scripted behaviours for the non ad hoc agents.
//! * [`features`]: the attribute vector used to model other agents.
//! * [`models`]: stacked fast-and-frugal trees, agreement tracking and model selection.
//! * [`kr`]: the action-language reasoner (parser, grounder, belief progression,
//!   defaults with consistency restoring, goals, relevance zones and planning).
//! * [`agent`]: the ad hoc agent and the game control loop.
//! * [`explain`]: execution traces and why / why-not question answering.
//! * [`harness`]: experiments, training and bootstrap statistics.

pub mod agent;
pub mod env;
pub mod explain;
pub mod features;
pub mod harness;
pub mod kr;
pub mod models;
pub mod policies;
