//! Shortest plans by iterative deepening with an admissible estimate.
//!
//! Other agents follow a fixed timeline of predicted actions. At each step the
//! predicted actions that are executable, and consistent together, occur
//! alongside the planning agent's action; the rest are skipped. Failed
//! (state, step) pairs are remembered with the bound they failed under.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::eval::BeliefState;
use super::goals::Goal;
use super::ground::GroundedDomain;
use super::syntax::{Atom, Val};
use super::KrError;

/// Predicted actions of the other agents, one list per future step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub steps: Vec<Vec<Atom>>,
}

impl Timeline {
    pub fn at(&self, t: usize) -> &[Atom] {
        self.steps.get(t).map_or(&[], Vec::as_slice)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    /// `None` is waiting.
    pub action: Option<Atom>,
    pub exogenous: Vec<Atom>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
    /// States along the plan, starting with the initial one.
    pub states: Vec<BeliefState>,
    pub expanded: usize,
}

impl Plan {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanOptions {
    pub horizon: usize,
    pub node_limit: usize,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions { horizon: 8, node_limit: 20_000 }
    }
}

/// Predicted actions at step `t` that can occur in `s`, taken greedily in
/// order, at most one per agent.
pub fn applicable_exogenous(g: &GroundedDomain, s: &BeliefState, events: &[Atom]) -> Vec<Atom> {
    let mut ok: Vec<Atom> = Vec::new();
    for e in events {
        if ok.iter().any(|o| o.args.first() == e.args.first()) || !g.check_executable(s, e) {
            continue;
        }
        ok.push(*e);
        if g.progress(s, &ok).is_err() {
            ok.pop();
        }
    }
    ok
}

/// Successors of `s` at step `t`: each candidate action of `actor` (in `rank`
/// order) and then waiting, together with the applicable predicted actions.
pub fn successors(
    g: &GroundedDomain,
    s: &BeliefState,
    t: usize,
    actor: Val,
    timeline: &Timeline,
    rank: &dyn Fn(&BeliefState, Option<&Atom>) -> u8,
) -> Vec<(PlanStep, BeliefState)> {
    let exo = applicable_exogenous(g, s, timeline.at(t));
    let mut acts: Vec<Option<Atom>> = g.candidates(s, actor).into_iter().map(Some).collect();
    acts.push(None);
    acts.sort_by_key(|a| rank(s, a.as_ref()));
    // an action that ends where waiting ends is dominated by waiting
    let idle = g.progress(s, &exo).ok();
    let mut out = Vec::with_capacity(acts.len());
    for a in acts {
        let mut all = exo.clone();
        if let Some(a) = a {
            all.push(a);
        }
        if let Ok(next) = g.progress(s, &all) {
            if a.is_some() && idle.as_ref() == Some(&next) {
                continue;
            }
            out.push((PlanStep { action: a, exogenous: exo.clone() }, next));
        }
    }
    out
}

struct Search<'a> {
    g: &'a GroundedDomain,
    actor: Val,
    goal: &'a Goal,
    timeline: &'a Timeline,
    h: &'a dyn Fn(&BeliefState, usize) -> usize,
    rank: &'a dyn Fn(&BeliefState, Option<&Atom>) -> u8,
    horizon: usize,
    node_limit: usize,
    expanded: usize,
    failed: HashMap<(BeliefState, usize), usize>,
    next_bound: usize,
    path: Vec<(PlanStep, BeliefState)>,
}

enum Outcome {
    Found,
    NotFound,
    Exhausted,
}

impl Search<'_> {
    fn dfs(&mut self, s: &BeliefState, t: usize, bound: usize) -> Outcome {
        let f = t + (self.h)(s, t);
        if f > bound {
            self.next_bound = self.next_bound.min(f);
            return Outcome::NotFound;
        }
        if self.g.goal_holds(s, self.goal) {
            return Outcome::Found;
        }
        if t >= self.horizon {
            return Outcome::NotFound;
        }
        let key = (s.clone(), t);
        if self.failed.get(&key).is_some_and(|&b| b >= bound) {
            return Outcome::NotFound;
        }
        if self.expanded >= self.node_limit {
            return Outcome::Exhausted;
        }
        self.expanded += 1;
        for (step, next) in successors(self.g, s, t, self.actor, self.timeline, self.rank) {
            self.path.push((step, next.clone()));
            match self.dfs(&next, t + 1, bound) {
                Outcome::Found => return Outcome::Found,
                Outcome::Exhausted => return Outcome::Exhausted,
                Outcome::NotFound => {
                    self.path.pop();
                }
            }
        }
        self.failed.insert(key, bound);
        Outcome::NotFound
    }
}

/// Shortest plan for `actor` reaching `goal` within the horizon. `h` must not
/// overestimate the remaining number of steps. `Ok(None)` when no plan exists
/// within the horizon or the node limit was reached.
#[allow(clippy::too_many_arguments)]
pub fn plan(
    g: &GroundedDomain,
    s0: &BeliefState,
    actor: Val,
    goal: &Goal,
    timeline: &Timeline,
    opts: &PlanOptions,
    h: &dyn Fn(&BeliefState, usize) -> usize,
    rank: &dyn Fn(&BeliefState, Option<&Atom>) -> u8,
) -> Result<Option<Plan>, KrError> {
    g.validate_goal(goal)?;
    let mut search = Search {
        g,
        actor,
        goal,
        timeline,
        h,
        rank,
        horizon: opts.horizon,
        node_limit: opts.node_limit,
        expanded: 0,
        failed: HashMap::new(),
        next_bound: usize::MAX,
        path: Vec::new(),
    };
    let mut bound = h(s0, 0);
    while bound <= opts.horizon {
        search.next_bound = usize::MAX;
        search.path.clear();
        match search.dfs(s0, 0, bound) {
            Outcome::Found => {
                let mut states = vec![s0.clone()];
                let mut steps = Vec::new();
                for (st, s) in search.path.drain(..) {
                    steps.push(st);
                    states.push(s);
                }
                return Ok(Some(Plan { steps, states, expanded: search.expanded }));
            }
            Outcome::Exhausted => return Ok(None),
            Outcome::NotFound => {
                if search.next_bound == usize::MAX {
                    return Ok(None);
                }
                bound = search.next_bound;
            }
        }
    }
    Ok(None)
}
