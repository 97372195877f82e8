//! The ad hoc guard and the game control loop.
//!
//! Each tick the agent predicts the other agents' next actions with its
//! behaviour models, rolls those predictions forward to see where everyone
//! will be, marks the zones that need cell-level reasoning, completes its
//! beliefs from observations and defaults, picks a goal, plans, and executes
//! the first planned action.

pub mod game;

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::env::{self, legal_actions, Action, ActionKind, AgentId, AgentKind, Cell, Dir, WorldState};
use crate::features::extract;
use crate::kr::fort::{self, GoalChoice, SelectionInputs};
use crate::kr::planner::applicable_exogenous;
use crate::kr::{
    compute_relevance, ground, plan, Atom, BeliefState, DomainDescription, Granularity, GroundContext, GroundedDomain,
    KrError, Observation, Plan, PlanOptions, Timeline, Val,
};
use crate::models::ModelManager;

pub use game::{episode_seed, initial_state, run_episode, run_games, EpisodeStats, GameError, GameStats, RunOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub horizon: usize,
    /// Search nodes per decision before giving up.
    pub node_limit: usize,
    /// Attackers within shoot range plus this many cells become targets.
    pub reach_margin: f64,
    /// Restrict cell-level reasoning to relevant zones.
    pub use_zones: bool,
    /// Consecutive northward moves near the centre line that reveal a frontal attack.
    pub frontal_streak: u32,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig { horizon: 8, node_limit: 4_000, reach_margin: 4.0, use_zones: true, frontal_streak: 3 }
    }
}

/// Source of predictions for the other agents.
pub trait Predictor {
    /// Predicted action kind, or `None` when no model covers the agent.
    fn predict_kind(&self, state: &WorldState, id: AgentId, prev: Action) -> Option<ActionKind>;
}

impl Predictor for ModelManager {
    fn predict_kind(&self, state: &WorldState, id: AgentId, prev: Action) -> Option<ActionKind> {
        let f = extract(state, id, prev).ok()?;
        self.predict(id, &f)
    }
}

/// Predicts nothing, so everyone repeats their previous action.
pub struct NoModels;

impl Predictor for NoModels {
    fn predict_kind(&self, _: &WorldState, _: AgentId, _: Action) -> Option<ActionKind> {
        None
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    /// The agent is dead.
    Dead,
    /// First action of a plan.
    Planned,
    /// The goal already holds.
    GoalHolds,
    /// No plan was found; step toward the fort.
    Fallback,
    /// The reasoner failed; do nothing.
    Error,
}

/// Everything behind one choice of action.
#[derive(Clone, Debug)]
pub struct Decision {
    pub action: Action,
    pub kind: DecisionKind,
    /// The restricted domain the decision was made in.
    pub domain: Option<GroundedDomain>,
    pub belief: BeliefState,
    pub goal: Option<GoalChoice>,
    pub plan: Option<Plan>,
    pub timeline: Timeline,
    pub fine_zones: Vec<usize>,
    /// Defaults withdrawn to stay consistent with what was observed.
    pub retracted: Vec<Atom>,
    pub error: Option<String>,
    pub micros: u64,
}

/// Concrete action for a predicted kind: guards shoot the legal target nearest the fort, attackers the nearest one.
pub fn concretize(state: &WorldState, id: AgentId, kind: ActionKind) -> Action {
    match kind {
        ActionKind::Noop => Action::Noop,
        ActionKind::RotateCw => Action::RotateCw,
        ActionKind::RotateCcw => Action::RotateCcw,
        ActionKind::Shoot => {
            let Ok(me) = state.agent(id) else { return Action::Noop };
            let legal = legal_actions(state, id).unwrap_or_default();
            legal
                .into_iter()
                .filter_map(|a| if let Action::Shoot(t) = a { Some(t) } else { None })
                .min_by(|a, b| {
                    // guards are assumed to fire at the biggest threat to the fort,
                    // attackers at whoever is closest
                    let key = |t: AgentId| {
                        let p = state.agents[t.0 as usize].pos;
                        if me.kind.is_guard() { state.config.dist_to_fort(p) } else { p.dist(me.pos) }
                    };
                    key(*a).total_cmp(&key(*b)).then(a.cmp(b))
                })
                .map_or(Action::Noop, Action::Shoot)
        }
        k => Action::Move(k.move_dir().expect("move kinds have a direction")),
    }
}

/// Predicted joint actions of everyone but `me` over `horizon` steps, with `me`
/// idle, and the states they lead to (starting with `state`).
pub fn rollout(
    state: &WorldState,
    me: AgentId,
    predictor: &dyn Predictor,
    prev: &BTreeMap<AgentId, Action>,
    horizon: usize,
) -> (Vec<Vec<(AgentId, Action)>>, Vec<WorldState>) {
    let mut states = vec![state.clone()];
    let mut acts = Vec::new();
    let mut prev = prev.clone();
    for _ in 0..horizon {
        let s = states.last().unwrap();
        if s.is_terminal() {
            break;
        }
        let mut joint = env::JointAction::new();
        let mut mine = Vec::new();
        for a in s.alive() {
            if a.id == me {
                joint.insert(me, Action::Noop);
                continue;
            }
            let p = prev.get(&a.id).copied().unwrap_or(Action::Noop);
            let kind = predictor.predict_kind(s, a.id, p).unwrap_or(p.kind());
            let act = concretize(s, a.id, kind);
            joint.insert(a.id, act);
            mine.push((a.id, act));
        }
        let Ok((next, _)) = env::step(s, &joint) else { break };
        for &(id, a) in &mine {
            prev.insert(id, a);
        }
        acts.push(mine);
        states.push(next);
    }
    (acts, states)
}

/// Step toward the fort if some move gets closer; otherwise wait.
pub fn toward_fort(state: &WorldState, id: AgentId) -> Action {
    let Ok(me) = state.agent(id) else { return Action::Noop };
    if !me.alive {
        return Action::Noop;
    }
    let cfg = &state.config;
    let here = cfg.dist_to_fort(me.pos);
    let mut best: Option<(f64, u8, Action)> = None;
    for d in Dir::ALL {
        let c = me.pos.offset(d);
        if !cfg.in_bounds(c) || state.occupant(c).is_some() {
            continue;
        }
        let dist = cfg.dist_to_fort(c);
        let a = Action::Move(d);
        let key = (dist, fort::tie_rank(a.kind()));
        if dist < here - 1e-9 && best.is_none_or(|(bd, br, _)| (key.0, key.1) < (bd, br)) {
            best = Some((key.0, key.1, a));
        }
    }
    best.map_or(Action::Noop, |b| b.2)
}

pub struct AdHocAgent {
    pub id: AgentId,
    pub config: AgentConfig,
    base: GroundedDomain,
    me: Val,
    history: Vec<Observation>,
    streak: BTreeMap<AgentId, u32>,
}

impl AdHocAgent {
    /// Ground `domain` for the game in `state`, which must contain an ad hoc guard.
    pub fn new(domain: &DomainDescription, state: &WorldState, config: AgentConfig) -> Result<Self, KrError> {
        let ctx = GroundContext::fort_attack(state);
        let base = ground(domain, &ctx)?;
        Self::from_grounded(base, state, config)
    }

    pub fn from_grounded(base: GroundedDomain, state: &WorldState, config: AgentConfig) -> Result<Self, KrError> {
        let id = state.adhoc().ok_or_else(|| KrError::Context("no ad hoc guard in the game".into()))?.id;
        let me = base.agent_val(id).ok_or_else(|| KrError::Context("ad hoc guard is not named".into()))?;
        Ok(AdHocAgent { id, config, base, me, history: Vec::new(), streak: BTreeMap::new() })
    }

    pub fn domain(&self) -> &GroundedDomain {
        &self.base
    }

    pub fn history(&self) -> &[Observation] {
        &self.history
    }

    /// Choose this tick's action.
    pub fn decide(&self, state: &WorldState, predictor: &dyn Predictor, prev: &BTreeMap<AgentId, Action>) -> Decision {
        let t0 = Instant::now();
        let mut d = Decision {
            action: Action::Noop,
            kind: DecisionKind::Dead,
            domain: None,
            belief: BeliefState::default(),
            goal: None,
            plan: None,
            timeline: Timeline::default(),
            fine_zones: Vec::new(),
            retracted: Vec::new(),
            error: None,
            micros: 0,
        };
        let alive = state.agent(self.id).is_ok_and(|a| a.alive);
        if alive {
            if let Err(e) = self.reason(state, predictor, prev, &mut d) {
                log::warn!("step {}: reasoning failed: {e}", state.step);
                d.kind = DecisionKind::Error;
                d.action = Action::Noop;
                d.error = Some(e.to_string());
            }
        }
        d.micros = t0.elapsed().as_micros() as u64;
        d
    }

    fn reason(
        &self,
        state: &WorldState,
        predictor: &dyn Predictor,
        prev: &BTreeMap<AgentId, Action>,
        d: &mut Decision,
    ) -> Result<(), KrError> {
        let cfg = &state.config;
        // predict the others and simulate the effects of their actions
        let (acts, states) = rollout(state, self.id, predictor, prev, self.config.horizon);
        let me_cell = state.agent(self.id).map_err(|e| KrError::Context(e.to_string()))?.pos;
        let attacker_cells: Vec<Cell> = states
            .iter()
            .flat_map(|s| s.attackers().filter(|a| a.alive).map(|a| a.pos).collect::<Vec<_>>())
            .collect();
        let granularity = if self.config.use_zones {
            compute_relevance(&self.base.zones, cfg, me_cell, attacker_cells)
        } else {
            Granularity::all_fine(&self.base.zones)
        };
        let g = self.base.with_granularity(granularity);
        d.fine_zones = g.granularity.fine_zones();

        // beliefs: what is observed now, completed by defaults
        let observed = fort::observe(&g, state)?;
        let completion = crate::kr::complete_initial(&g, &observed, &self.history)?;
        let belief = completion.state;
        d.retracted = completion.retracted.iter().map(|r| r.atom).collect();

        // a teammate with a clear shot that would be credited is assumed to take it
        let mut covered: Vec<(AgentId, AgentId)> = Vec::new();
        for mate in state.guards().filter(|m| m.alive && m.id != self.id) {
            if let Action::Shoot(t) = concretize(state, mate.id, ActionKind::Shoot) {
                let tp = state.agents[t.0 as usize].pos;
                if (mate.pos.dist(tp), mate.id) < (me_cell.dist(tp), self.id) {
                    covered.push((mate.id, t));
                }
            }
        }

        // attackers believed to shoot at me will do so whenever I am in their sights
        let shoots = g.pred("shoots")?;
        let shoot = g.pred("agent_shoot")?;
        let mut timeline = Timeline::default();
        for (t, step) in acts.iter().enumerate() {
            let mut atoms = Vec::new();
            if t == 0 {
                for &(m, a) in &covered {
                    if let (Some(mv), Some(av)) = (g.agent_val(m), g.agent_val(a)) {
                        atoms.push(Atom::new(shoot, &[mv, av]));
                    }
                }
            }
            for a in states[t].attackers().filter(|a| a.alive) {
                if let Some(v) = g.agent_val(a.id) {
                    if belief.contains(&Atom::new(shoots, &[v, self.me])) {
                        atoms.push(Atom::new(shoot, &[v, self.me]));
                    }
                }
            }
            for &(id, a) in step {
                if let Some(atom) = fort::action_atom(&g, &states[t], id, a)? {
                    atoms.push(atom);
                }
            }
            timeline.steps.push(atoms);
        }

        // predicted teammate shots and attacker moves for goal selection
        let first = applicable_exogenous(&g, &belief, timeline.at(0));
        let mut inputs = SelectionInputs { reach: cfg.shoot_range + self.config.reach_margin, ..Default::default() };
        for e in &first {
            let name = g.desc.decl(e.pred).name.as_str();
            if name == "agent_shoot" && g.in_sort("guard", e.args[0]) {
                inputs.teammate_targets.push(e.args[1]);
            }
        }
        for &(_, t) in &covered {
            if let Some(v) = g.agent_val(t) {
                if !inputs.teammate_targets.contains(&v) {
                    inputs.teammate_targets.push(v);
                }
            }
        }
        if let Some(next) = states.get(1) {
            for a in next.attackers().filter(|a| a.alive) {
                if let Some(v) = g.agent_val(a.id) {
                    inputs.predicted.push((v, a.pos));
                }
            }
        }
        let choice = fort::select_goal(&g, &belief, self.me, &inputs)?;
        let opts = PlanOptions { horizon: self.config.horizon, node_limit: self.config.node_limit };
        let found = {
            let h = fort::heuristic(&g, &choice.goal, &timeline, self.me);
            let rank = fort::rank_fn(&g);
            plan(&g, &belief, self.me, &choice.goal, &timeline, &opts, &h, &rank)?
        };
        match &found {
            Some(p) if p.is_empty() => {
                d.kind = DecisionKind::GoalHolds;
                d.action = Action::Noop;
            }
            Some(p) => {
                d.kind = DecisionKind::Planned;
                d.action = fort::to_action(&g, &belief, p.steps[0].action.as_ref())
                    .ok_or_else(|| KrError::Context("planned action has no simulator counterpart".into()))?;
            }
            None => {
                d.kind = DecisionKind::Fallback;
                // no safe way to the goal: trade shots with the target if it is in sights
                let target = match choice.goal.name.as_str() {
                    "shoot_target" => choice.goal.args.first().and_then(|v| g.agent_of(*v)),
                    _ => None,
                };
                d.action = match target.map(Action::Shoot) {
                    Some(a) if env::legal_actions(state, self.id).is_ok_and(|l| l.contains(&a)) => a,
                    _ => toward_fort(state, self.id),
                };
            }
        }
        d.plan = found;
        d.goal = Some(choice);
        d.timeline = timeline;
        d.belief = belief;
        d.domain = Some(g);
        Ok(())
    }

    /// Record what was observed during a tick: attackers seen shooting, and
    /// attackers charging straight up the middle.
    pub fn observe_step(&mut self, before: &WorldState, joint: &env::JointAction, events: &[env::StepEvent]) {
        let g = &self.base;
        let me = self.me;
        let add = |history: &mut Vec<Observation>, name: &str, args: &[Val], holds: bool| {
            if let Ok(atom) = g.atom(name, args) {
                let o = Observation { atom, holds };
                if !history.contains(&o) {
                    history.push(o);
                }
            }
        };
        for e in events {
            if let env::StepEvent::Shot(s) = e {
                let shooter = before.agents.get(s.shooter.0 as usize);
                if shooter.is_some_and(|a| a.kind == AgentKind::Attacker) {
                    if let Some(v) = g.agent_val(s.shooter) {
                        add(&mut self.history, "shoots", &[v, me], true);
                    }
                }
            }
        }
        let cfg = &before.config;
        let (cx, _) = cfg.center();
        for a in before.attackers().filter(|a| a.alive) {
            let central = (a.pos.x as f64 - cx).abs() <= 2.0;
            let n = self.streak.entry(a.id).or_insert(0);
            if central && joint.get(&a.id) == Some(&Action::Move(Dir::N)) {
                *n += 1;
            } else {
                *n = 0;
            }
            if *n >= self.config.frontal_streak {
                if let Some(v) = g.agent_val(a.id) {
                    add(&mut self.history, "spread_attack", &[v], false);
                }
            }
        }
    }
}

/// One decision for the ad hoc guard in `state` without any history.
pub fn adhoc_action(state: &WorldState, domain: &GroundedDomain, predictor: &dyn Predictor) -> Action {
    match AdHocAgent::from_grounded(domain.clone(), state, AgentConfig::default()) {
        Ok(agent) => {
            let prev = BTreeMap::new();
            agent.decide(state, predictor, &prev).action
        }
        Err(e) => {
            log::warn!("ad hoc agent unavailable: {e}");
            Action::Noop
        }
    }
}
