//! Glue between the reasoner and the Fort Attack simulator: observations,
//! action translation, goal selection and plan-length estimates.

use serde::{Deserialize, Serialize};

use super::eval::BeliefState;
use super::goals::Goal;
use super::ground::GroundedDomain;
use super::planner::Timeline;
use super::syntax::{Atom, Val};
use super::KrError;
use crate::env::{Action, ActionKind, AgentId, Cell, Dir, WorldState};

/// Belief state observed from a world state. Agents in fine zones get a
/// cell position, the others only their zone.
pub fn observe(g: &GroundedDomain, state: &WorldState) -> Result<BeliefState, KrError> {
    let mut atoms = Vec::new();
    for a in &state.agents {
        let v = g.agent_val(a.id).ok_or_else(|| KrError::Context(format!("agent {} is not named", a.id.0)))?;
        if g.is_fine(a.pos.x, a.pos.y) {
            atoms.push(g.atom("in", &[v, Val::Int(a.pos.x), Val::Int(a.pos.y)])?);
        } else {
            atoms.push(g.atom("region_in", &[v, Val::Int(g.zones.zone_of(a.pos) as i32)])?);
        }
        atoms.push(g.atom("face", &[v, g.dir_val(a.dir)])?);
        if !a.alive {
            atoms.push(g.atom("shot", &[v])?);
        }
    }
    Ok(BeliefState::from_atoms(atoms))
}

/// Cell of an agent in a belief state, if it is known at cell level.
pub fn cell_of(g: &GroundedDomain, s: &BeliefState, agent: Val) -> Option<Cell> {
    let p = g.desc.pred("in")?;
    s.of_pred(p).iter().find(|a| a.args[0] == agent).and_then(|a| match (a.args[1], a.args[2]) {
        (Val::Int(x), Val::Int(y)) => Some(Cell::new(x, y)),
        _ => None,
    })
}

pub fn facing(g: &GroundedDomain, s: &BeliefState, agent: Val) -> Option<Dir> {
    let p = g.desc.pred("face")?;
    s.of_pred(p).iter().find(|a| a.args[0] == agent).and_then(|a| g.dir_of(a.args[1]))
}

pub fn is_shot(g: &GroundedDomain, s: &BeliefState, agent: Val) -> bool {
    g.atom("shot", &[agent]).is_ok_and(|a| s.contains(&a))
}

/// Simulator action for a planned action of the agent.
pub fn to_action(g: &GroundedDomain, s: &BeliefState, a: Option<&Atom>) -> Option<Action> {
    let Some(a) = a else { return Some(Action::Noop) };
    let name = g.desc.decl(a.pred).name.as_str();
    let actor = a.args[0];
    match name {
        "move" | "agent_move" => {
            let from = cell_of(g, s, actor)?;
            let (Val::Int(x), Val::Int(y)) = (a.args[1], a.args[2]) else { return None };
            let d = Dir::towards(x - from.x, y - from.y)?;
            (from.offset(d) == Cell::new(x, y)).then_some(Action::Move(d))
        }
        "rotate" | "agent_rotate" => {
            let now = facing(g, s, actor)?;
            let to = g.dir_of(a.args[1])?;
            if to == now.cw() {
                Some(Action::RotateCw)
            } else if to == now.ccw() {
                Some(Action::RotateCcw)
            } else {
                None
            }
        }
        "shoot" | "agent_shoot" => g.agent_of(a.args[1]).map(Action::Shoot),
        _ => None,
    }
}

/// Action atom for an agent's simulator action; `None` for a no-op. The ad hoc
/// agent uses the plain action names, everyone else the exogenous ones.
pub fn action_atom(g: &GroundedDomain, state: &WorldState, id: AgentId, action: Action) -> Result<Option<Atom>, KrError> {
    let me = state.agent(id).map_err(|e| KrError::Context(e.to_string()))?;
    let v = g.agent_val(id).ok_or_else(|| KrError::Context(format!("agent {} is not named", id.0)))?;
    let own = g.in_sort("ah_agent", v);
    let name = |base: &str| if own { base.to_string() } else { format!("agent_{base}") };
    Ok(match action {
        Action::Noop => None,
        Action::Move(d) => {
            let c = me.pos.offset(d);
            Some(g.atom(&name("move"), &[v, Val::Int(c.x), Val::Int(c.y)])?)
        }
        Action::RotateCw => Some(g.atom(&name("rotate"), &[v, g.dir_val(me.dir.cw())])?),
        Action::RotateCcw => Some(g.atom(&name("rotate"), &[v, g.dir_val(me.dir.ccw())])?),
        Action::Shoot(t) => {
            let tv = g.agent_val(t).ok_or_else(|| KrError::Context(format!("agent {} is not named", t.0)))?;
            Some(g.atom(&name("shoot"), &[v, tv])?)
        }
    })
}

/// Tie order among equally short plans.
pub fn tie_rank(kind: ActionKind) -> u8 {
    match kind {
        ActionKind::Shoot => 0,
        ActionKind::MoveN => 1,
        ActionKind::MoveE => 2,
        ActionKind::MoveS => 3,
        ActionKind::MoveW => 4,
        ActionKind::RotateCw => 5,
        ActionKind::RotateCcw => 6,
        ActionKind::Noop => 7,
    }
}

pub fn rank_fn(g: &GroundedDomain) -> impl Fn(&BeliefState, Option<&Atom>) -> u8 + '_ {
    move |s, a| to_action(g, s, a).map_or(8, |a| tie_rank(a.kind()))
}

/// Lower bound on the steps needed to reach `goal`.
pub fn heuristic<'a>(g: &'a GroundedDomain, goal: &'a Goal, timeline: &'a Timeline, actor: Val) -> impl Fn(&BeliefState, usize) -> usize + 'a {
    let range = g.ctx.grid.shoot_range;
    move |s, t| {
        if g.goal_holds(s, goal) {
            return 0;
        }
        let Some(me) = cell_of(g, s, actor) else { return 0 };
        match (goal.name.as_str(), goal.args.as_slice()) {
            ("shoot_target", [target]) => {
                let later = |name: &str| {
                    (t..timeline.steps.len()).any(|k| {
                        timeline.at(k).iter().any(|e| {
                            let n = g.desc.decl(e.pred).name.as_str();
                            n == name && (if name == "agent_shoot" { e.args[1] == *target } else { e.args[0] == *target })
                        })
                    })
                };
                // another agent may shoot it for us
                if later("agent_shoot") {
                    return 1;
                }
                let Some(tc) = cell_of(g, s, *target) else { return 1 };
                let gap = (me.dist(tc) - range).max(0.0);
                let closing = if later("agent_move") { 2.0 } else { 1.0 };
                1 + (gap / closing - 1e-9).ceil().max(0.0) as usize
            }
            ("occupy_region", [Val::Int(z)]) => g.zones.moves_to(me, *z as usize) as usize,
            ("hold_position", [Val::Int(x), Val::Int(y), d]) => {
                let m = me.manhattan(Cell::new(*x, *y)) as usize;
                let turn = match (facing(g, s, actor), g.dir_of(*d)) {
                    (Some(a), Some(b)) if a == b => 0,
                    (Some(a), Some(b)) if a.cw() == b || a.ccw() == b => 1,
                    _ => 2,
                };
                m + turn
            }
            _ => 0,
        }
    }
}

/// Inputs to goal selection beyond the belief state.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionInputs {
    /// Attackers within this distance (now or at their predicted next cell) are targets.
    pub reach: f64,
    /// Attackers a teammate is predicted to shoot next step.
    pub teammate_targets: Vec<Val>,
    /// Predicted next cell per attacker.
    pub predicted: Vec<(Val, Cell)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalChoice {
    pub goal: Goal,
    pub reason: String,
}

fn front_zone(g: &GroundedDomain) -> Option<usize> {
    let grid = &g.ctx.grid;
    let fort = g.zones.fort_zones(grid);
    let guard = g.zones.guard_zones(grid);
    guard
        .iter()
        .copied()
        .find(|&z| fort.iter().any(|&f| g.zones.coords(f).0 == g.zones.coords(z).0))
        .or_else(|| guard.first().copied())
}

/// Pick the goal for the ad hoc agent: shoot the nearest reachable attacker no
/// teammate is about to shoot; otherwise cover the most threatened fort-side
/// zone no teammate covers; otherwise hold position facing the nearest attacker.
pub fn select_goal(g: &GroundedDomain, s: &BeliefState, ah: Val, inputs: &SelectionInputs) -> Result<GoalChoice, KrError> {
    let me = cell_of(g, s, ah).ok_or_else(|| KrError::Context("ad hoc agent has no cell position".into()))?;
    let name = |v: Val| g.desc.val_name(v);
    let attackers: Vec<(Val, Cell)> = g
        .universe("attacker")
        .iter()
        .filter(|&&a| !is_shot(g, s, a))
        .filter_map(|&a| cell_of(g, s, a).map(|c| (a, c)))
        .collect();

    // 1. a target within reach
    let mut best: Option<(f64, Val)> = None;
    for &(a, c) in &attackers {
        if inputs.teammate_targets.contains(&a) {
            continue;
        }
        let mut d = me.dist(c);
        if let Some(&(_, p)) = inputs.predicted.iter().find(|(v, _)| *v == a) {
            d = d.min(me.dist(p));
        }
        if d <= inputs.reach + 1e-9 && best.is_none_or(|(bd, _)| d < bd - 1e-9) {
            best = Some((d, a));
        }
    }
    if let Some((d, a)) = best {
        return Ok(GoalChoice {
            goal: Goal::new("shoot_target", vec![a]),
            reason: format!("{} is {:.1} cells away", name(a), d),
        });
    }

    let nearest_dir = attackers
        .iter()
        .min_by(|x, y| me.dist(x.1).total_cmp(&me.dist(y.1)))
        .and_then(|&(_, c)| Dir::towards(c.x - me.x, c.y - me.y))
        .or_else(|| facing(g, s, ah))
        .unwrap_or(Dir::S);
    let hold = |why: String| GoalChoice {
        goal: Goal::new("hold_position", vec![Val::Int(me.x), Val::Int(me.y), g.dir_val(nearest_dir)]),
        reason: why,
    };

    // 2. an uncovered zone next to the fort
    let guard_zones = g.zones.guard_zones(&g.ctx.grid);
    let front = front_zone(g);
    let in_region = g.pred("in_region")?;
    let covered = |z: usize| {
        g.universe("guard")
            .iter()
            .any(|&m| !is_shot(g, s, m) && g.holds(s, &Atom::new(in_region, &[m, Val::Int(z as i32)])))
    };
    let spread = g.pred("spread_attack")?;
    let mut open: Vec<(i32, usize)> = Vec::new();
    for &z in &guard_zones {
        if covered(z) {
            continue;
        }
        let threat = attackers
            .iter()
            .filter(|(a, _)| s.contains(&Atom::new(spread, &[*a])) || Some(z) == front)
            .map(|(_, c)| g.zones.moves_to(*c, z))
            .min()
            .unwrap_or(i32::MAX);
        open.push((threat, z));
    }
    open.sort();
    if let Some(&(_, z)) = open.first() {
        if g.zones.zone_of(me) == z {
            return Ok(hold(format!("I cover zone {z}")));
        }
        return Ok(GoalChoice {
            goal: Goal::new("occupy_region", vec![Val::Int(z as i32)]),
            reason: format!("zone {z} next to the fort is unguarded"),
        });
    }

    // 3. everything is covered
    let here = g.zones.zone_of(me);
    let near_fort = guard_zones.contains(&here) || g.zones.fort_zones(&g.ctx.grid).contains(&here);
    match front {
        Some(f) if !near_fort => Ok(GoalChoice {
            goal: Goal::new("occupy_region", vec![Val::Int(f as i32)]),
            reason: "I am away from the fort".into(),
        }),
        _ => Ok(hold("every zone next to the fort is covered".into())),
    }
}
