//! Action-language reasoning for the ad hoc agent.
//!
//! A domain description ([`syntax`]) is grounded for one game ([`ground`]).
//! Belief states hold the true inertial fluents; [`eval`] answers queries,
//! checks executability and progresses states. [`defaults`] completes an
//! initial state from defaults, retracting a minimal set when observations
//! contradict them. [`planner`] searches for the shortest plan to a goal
//! while other agents follow predicted actions, and [`fort`] ties all of this
//! to the Fort Attack simulator.

pub mod defaults;
pub mod eval;
pub mod fort;
pub mod goals;
pub mod ground;
pub mod planner;
pub mod syntax;
pub mod zones;

pub use defaults::{complete_initial, default_instances, Completion, DefaultInstance, Observation};
pub use eval::{BeliefState, RuleInstance, Violation};
pub use goals::Goal;
pub use ground::{ground, GroundContext, GroundedDomain, NamedAgent};
pub use planner::{plan, Plan, PlanOptions, PlanStep, Timeline};
pub use syntax::{Atom, DomainDescription, ParseError, PredId, RuleKind, Val};
pub use zones::{compute_relevance, Granularity, ZoneGrid, ZoneId};

/// The bundled Fort Attack domain description.
pub const FORT_ATTACK_DOMAIN: &str = include_str!("../../data/fort_attack.ald");

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum KrError {
    #[error("domain description: {0}")]
    Parse(#[from] ParseError),
    #[error("grounding `{axiom}`: {msg}")]
    Ground { axiom: String, msg: String },
    #[error("{0}")]
    Context(String),
    #[error("inconsistent state: {0}")]
    Inconsistent(String),
}

/// Parse the bundled domain description.
pub fn fort_attack_domain() -> Result<DomainDescription, KrError> {
    Ok(DomainDescription::parse(FORT_ATTACK_DOMAIN)?)
}

pub fn load_domain(path: &std::path::Path) -> Result<DomainDescription, KrError> {
    let text = std::fs::read_to_string(path).map_err(|e| KrError::Context(format!("{}: {e}", path.display())))?;
    Ok(DomainDescription::parse(&text)?)
}
