//! Execution traces and why / why-not answers.
//!
//! A trace is JSONL: a header naming the grid and the agents, one line per
//! tick, and a closing line with the outcome. Ticks of the ad hoc guard carry
//! its belief state, goal, plan and the states the plan passes through, as
//! literal text, so answers can be rebuilt and re-checked from the file alone.

mod chain;
mod query;

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{Decision, DecisionKind};
use crate::env::{Action, AgentId, AgentState, EpisodeResult, GridConfig, JointAction, Outcome, StepEvent, WorldState};
use crate::kr::fort;
use crate::kr::{Atom, BeliefState, GroundContext, GroundedDomain, KrError, NamedAgent, Val};

pub use chain::{AxiomRef, Answer, Explainer, Link, LinkRole, StepView, Templates, DEFAULT_TEMPLATES};
pub use query::{parse_query, Query, QueryAction, QueryKind, QUERY_GRAMMAR};

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ExplainError {
    #[error("cannot parse query `{text}`; expected one of:\n{grammar}")]
    Query { text: String, grammar: &'static str },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("degenerate query: {0}")]
    Degenerate(String),
    #[error("bad trace: {0}")]
    Trace(String),
    #[error(transparent)]
    Kr(#[from] KrError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub version: u32,
    pub seed: u64,
    pub policy: String,
    pub grid: GridConfig,
    pub zone_size: i32,
    pub agents: Vec<NamedAgent>,
}

/// What the ad hoc guard knew and intended at one tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reasoning {
    pub decision: DecisionKind,
    /// The executed action as an action atom; absent for a no-op.
    pub action: Option<String>,
    pub belief: Vec<String>,
    pub fine_zones: Vec<usize>,
    pub goal: Option<String>,
    pub goal_reason: Option<String>,
    /// Planned actions; `wait` when idle.
    pub plan: Vec<String>,
    /// Predicted actions of the others that occur with each plan step.
    pub plan_exogenous: Vec<Vec<String>>,
    /// States after each plan step.
    pub plan_states: Vec<Vec<String>>,
    pub timeline: Vec<Vec<String>>,
    pub retracted: Vec<String>,
    /// Axiom instances supporting the executed action.
    pub active: Vec<AxiomRef>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: u32,
    /// World state before the tick.
    pub agents: Vec<AgentState>,
    pub joint: Vec<(AgentId, Action)>,
    pub events: Vec<StepEvent>,
    pub reasoning: Option<Reasoning>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEnd {
    pub outcome: Outcome,
    pub steps: u32,
    pub agents: Vec<AgentState>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceLine {
    Header(TraceHeader),
    Step(TraceStep),
    End(TraceEnd),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub steps: Vec<TraceStep>,
    pub end: Option<TraceEnd>,
}

impl Trace {
    pub fn read(r: impl BufRead) -> Result<Trace, ExplainError> {
        let mut header = None;
        let mut steps = Vec::new();
        let mut end = None;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TraceLine =
                serde_json::from_str(&line).map_err(|e| ExplainError::Trace(format!("line {}: {e}", i + 1)))?;
            match parsed {
                TraceLine::Header(h) => header = Some(h),
                TraceLine::Step(s) => steps.push(s),
                TraceLine::End(e) => end = Some(e),
            }
        }
        let header = header.ok_or_else(|| ExplainError::Trace("missing header line".into()))?;
        if header.version != TRACE_VERSION {
            return Err(ExplainError::Trace(format!("unsupported trace version {}", header.version)));
        }
        Ok(Trace { header, steps, end })
    }

    pub fn load(path: &Path) -> Result<Trace, ExplainError> {
        let f = std::fs::File::open(path).map_err(|e| ExplainError::Trace(format!("{}: {e}", path.display())))?;
        Self::read(io::BufReader::new(f))
    }

    pub fn step(&self, i: u32) -> Option<&TraceStep> {
        self.steps.iter().find(|s| s.step == i)
    }

    pub fn context(&self) -> GroundContext {
        GroundContext { grid: self.header.grid.clone(), zone_size: self.header.zone_size, agents: self.header.agents.clone() }
    }
}

fn texts(g: &GroundedDomain, atoms: &[Atom]) -> Vec<String> {
    atoms.iter().map(|a| g.desc.atom_text(a)).collect()
}

/// Writes one trace line per call.
pub struct TraceWriter<'w> {
    out: &'w mut dyn Write,
    domain: Option<GroundedDomain>,
}

impl<'w> TraceWriter<'w> {
    pub fn new(
        out: &'w mut dyn Write,
        state: &WorldState,
        domain: Option<&GroundedDomain>,
        seed: u64,
        policy: &str,
    ) -> io::Result<Self> {
        let ctx = match domain {
            Some(g) => (*g.ctx).clone(),
            None => GroundContext::fort_attack(state),
        };
        let header = TraceHeader {
            version: TRACE_VERSION,
            seed,
            policy: policy.to_string(),
            grid: ctx.grid,
            zone_size: ctx.zone_size,
            agents: ctx.agents,
        };
        let mut w = TraceWriter { out, domain: domain.cloned() };
        w.line(&TraceLine::Header(header))?;
        Ok(w)
    }

    fn line(&mut self, l: &TraceLine) -> io::Result<()> {
        serde_json::to_writer(&mut *self.out, l)?;
        self.out.write_all(b"\n")
    }

    pub fn step(
        &mut self,
        state: &WorldState,
        joint: &JointAction,
        events: &[StepEvent],
        decision: Option<&Decision>,
    ) -> io::Result<()> {
        let reasoning = match (decision, &self.domain) {
            (Some(d), Some(base)) => Some(reasoning_of(base, state, d)),
            _ => None,
        };
        let step = TraceStep {
            step: state.step,
            agents: state.agents.clone(),
            joint: joint.iter().map(|(k, v)| (*k, *v)).collect(),
            events: events.to_vec(),
            reasoning,
        };
        self.line(&TraceLine::Step(step))
    }

    pub fn finish(&mut self, state: &WorldState, result: &EpisodeResult) -> io::Result<()> {
        self.line(&TraceLine::End(TraceEnd { outcome: result.outcome, steps: result.steps, agents: state.agents.clone() }))
    }
}

fn reasoning_of(base: &GroundedDomain, state: &WorldState, d: &Decision) -> Reasoning {
    let g = d.domain.as_ref().unwrap_or(base);
    let me = state.adhoc().map(|a| a.id);
    let action = me.and_then(|id| fort::action_atom(g, state, id, d.action).ok().flatten());
    let mut r = Reasoning {
        decision: d.kind,
        action: action.map(|a| g.desc.atom_text(&a)),
        belief: texts(g, d.belief.atoms()),
        fine_zones: d.fine_zones.clone(),
        goal: d.goal.as_ref().map(|c| g.goal_text(&c.goal)),
        goal_reason: d.goal.as_ref().map(|c| c.reason.clone()),
        plan: Vec::new(),
        plan_exogenous: Vec::new(),
        plan_states: Vec::new(),
        timeline: d.timeline.steps.iter().map(|s| texts(g, s)).collect(),
        retracted: texts(g, &d.retracted),
        active: Vec::new(),
        error: d.error.clone(),
    };
    if let Some(p) = &d.plan {
        for s in &p.steps {
            r.plan.push(s.action.as_ref().map_or_else(|| "wait".to_string(), |a| g.desc.atom_text(a)));
            r.plan_exogenous.push(texts(g, &s.exogenous));
        }
        r.plan_states = p.states.iter().skip(1).map(|s| texts(g, s.atoms())).collect();
    }
    if let (Some(id), true) = (me, d.domain.is_some()) {
        if let Some(ah) = g.agent_val(id) {
            let view = StepView {
                step: state.step,
                me: ah,
                states: d.plan.as_ref().map_or_else(|| vec![d.belief.clone()], |p| p.states.clone()),
                plan: d.plan.as_ref().map(|p| p.steps.iter().map(|s| s.action).collect()).unwrap_or_default(),
                exogenous: d.plan.as_ref().map(|p| p.steps.iter().map(|s| s.exogenous.clone()).collect()).unwrap_or_default(),
                goal: d.goal.as_ref().map(|c| c.goal.clone()),
                action,
                kind: d.kind,
            };
            r.active = chain::action_chain(g, &view).iter().filter_map(|l| l.axiom.clone()).collect();
        }
    }
    r
}

/// Parse `name(a,b,..)` or `name` into its parts.
pub fn split_call(text: &str) -> Option<(String, Vec<String>)> {
    let t = text.trim();
    match t.find('(') {
        None => (!t.is_empty()).then(|| (t.to_string(), Vec::new())),
        Some(i) => {
            let inner = t[i + 1..].strip_suffix(')')?;
            let args = inner.split(',').map(|a| a.trim().to_string()).filter(|a| !a.is_empty()).collect();
            Some((t[..i].trim().to_string(), args))
        }
    }
}

/// Value named by `text` in a grounded domain.
pub fn parse_val(g: &GroundedDomain, text: &str) -> Result<Val, ExplainError> {
    if text == "_" {
        return Ok(Val::Nil);
    }
    if let Ok(i) = text.parse::<i32>() {
        return Ok(Val::Int(i));
    }
    g.desc.sym(text).ok_or_else(|| ExplainError::NotFound(format!("unknown constant `{text}`")))
}

/// Parse a literal `p(a,..)` or `-p(a,..)`; the flag is true for the negative form.
pub fn parse_literal(g: &GroundedDomain, text: &str) -> Result<(Atom, bool), ExplainError> {
    let t = text.trim();
    let (neg, t) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t),
    };
    let (name, args) = split_call(t).ok_or_else(|| ExplainError::NotFound(format!("malformed literal `{text}`")))?;
    let vals = args.iter().map(|a| parse_val(g, a)).collect::<Result<Vec<_>, _>>()?;
    let p = g.desc.pred(&name).ok_or_else(|| ExplainError::NotFound(format!("unknown predicate `{name}`")))?;
    if g.desc.arity(p) != vals.len() {
        return Err(ExplainError::NotFound(format!("`{name}` takes {} arguments", g.desc.arity(p))));
    }
    Ok((Atom::new(p, &vals), neg))
}

pub fn parse_state(g: &GroundedDomain, lits: &[String]) -> Result<BeliefState, ExplainError> {
    let atoms = lits.iter().map(|l| parse_literal(g, l).map(|(a, _)| a)).collect::<Result<Vec<_>, _>>()?;
    Ok(BeliefState::from_atoms(atoms))
}

/// Names of the agents in a header, by id.
pub fn agent_names(h: &TraceHeader) -> BTreeMap<AgentId, String> {
    h.agents.iter().map(|a| (a.id, a.name.clone())).collect()
}
