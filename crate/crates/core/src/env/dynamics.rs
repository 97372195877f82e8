use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

const ARC_EPS: f64 = 1e-9;

/// True when a shooter at `from` facing `dir` hits a target at `to`: within
/// `shoot_range` (inclusive) and within half the arc of the facing direction.
pub fn hit_test(cfg: &GridConfig, from: Cell, dir: Dir, to: Cell) -> bool {
    let dx = (to.x - from.x) as f64;
    let dy = (to.y - from.y) as f64;
    let d2 = dx * dx + dy * dy;
    if d2 == 0.0 || d2 > cfg.shoot_range * cfg.shoot_range + ARC_EPS {
        return false;
    }
    if cfg.shoot_arc_deg >= 360.0 {
        return true;
    }
    let (fx, fy) = dir.delta();
    let cos = (dx * fx as f64 + dy * fy as f64) / d2.sqrt();
    let half = (cfg.shoot_arc_deg / 2.0).to_radians();
    cos >= half.cos() - ARC_EPS
}

/// Place agents for a new episode. Placement depends only on `config` and `seed`.
pub fn reset(config: &GridConfig, seed: u64) -> Result<WorldState, EnvError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut guard_cells = config.guard_spawn_cells();
    if config.n_guards > guard_cells.len() {
        return Err(EnvError::Config(format!(
            "{} guards but only {} spawn cells next to the fort",
            config.n_guards,
            guard_cells.len()
        )));
    }
    guard_cells.shuffle(&mut rng);
    guard_cells.truncate(config.n_guards);

    let mut attacker_cells: Vec<Cell> = config
        .attacker_spawn_cells()
        .into_iter()
        .filter(|c| !guard_cells.contains(c))
        .collect();
    if config.n_attackers > attacker_cells.len() {
        return Err(EnvError::Config(format!(
            "{} attackers but only {} spawn cells in the far band",
            config.n_attackers,
            attacker_cells.len()
        )));
    }
    attacker_cells.shuffle(&mut rng);
    attacker_cells.truncate(config.n_attackers);
    // sort by x so attacker ids read left to right
    attacker_cells.sort_by_key(|c| (c.x, c.y));
    guard_cells.sort_by_key(|c| (c.x, c.y));

    let mut agents = Vec::with_capacity(config.n_agents());
    for (i, pos) in guard_cells.into_iter().enumerate() {
        let kind = if i == 0 && config.adhoc_guard {
            AgentKind::AdHocGuard
        } else {
            AgentKind::Guard
        };
        agents.push(new_agent(agents.len(), kind, pos, Dir::S));
    }
    for pos in attacker_cells {
        agents.push(new_agent(agents.len(), AgentKind::Attacker, pos, Dir::N));
    }
    Ok(WorldState {
        config: Arc::new(config.clone()),
        agents,
        step: 0,
    })
}

fn new_agent(id: usize, kind: AgentKind, pos: Cell, dir: Dir) -> AgentState {
    AgentState {
        id: AgentId(id as u8),
        kind,
        pos,
        dir,
        alive: true,
        shots_fired: 0,
        shots_hit: 0,
    }
}

/// Every action the agent may take. Dead agents may only `Noop`.
pub fn legal_actions(state: &WorldState, id: AgentId) -> Result<Vec<Action>, EnvError> {
    let me = state.agent(id)?;
    if !me.alive {
        return Ok(vec![Action::Noop]);
    }
    let cfg = &state.config;
    let mut out = vec![Action::Noop];
    for d in Dir::ALL {
        if cfg.in_bounds(me.pos.offset(d)) {
            out.push(Action::Move(d));
        }
    }
    out.push(Action::RotateCw);
    out.push(Action::RotateCcw);
    for t in &state.agents {
        if t.id != id && t.alive && !t.kind.same_team(me.kind) && hit_test(cfg, me.pos, me.dir, t.pos) {
            out.push(Action::Shoot(t.id));
        }
    }
    Ok(out)
}

/// Advance one tick with simultaneous joint actions.
pub fn step(state: &WorldState, joint: &JointAction) -> Result<(WorldState, Vec<StepEvent>), EnvError> {
    if terminal(state).is_some() {
        return Err(EnvError::Terminal);
    }
    let n = state.agents.len();
    let cfg = &state.config;
    let mut events = Vec::new();

    for (&id, action) in joint {
        state.agent(id)?;
        if let Action::Shoot(t) = action {
            if t.0 as usize >= n || *t == id {
                return Err(EnvError::BadTarget { agent: id, target: *t });
            }
        }
    }
    let mut actions = vec![Action::Noop; n];
    for a in &state.agents {
        match joint.get(&a.id) {
            Some(act) if a.alive => actions[a.id.0 as usize] = *act,
            Some(_) => events.push(StepEvent::IgnoredDeadAction(a.id)),
            None if a.alive => return Err(EnvError::MissingAction(a.id)),
            None => {}
        }
    }

    let mut next = state.clone();
    next.step += 1;

    // Shots, against pre-tick poses.
    let mut hits_on: BTreeMap<AgentId, Vec<AgentId>> = BTreeMap::new();
    let mut fired = Vec::new();
    for a in state.alive() {
        if let Action::Shoot(t) = actions[a.id.0 as usize] {
            let target = &state.agents[t.0 as usize];
            next.agents[a.id.0 as usize].shots_fired += 1;
            let ok = target.alive
                && !target.kind.same_team(a.kind)
                && hit_test(cfg, a.pos, a.dir, target.pos);
            if ok {
                hits_on.entry(t).or_default().push(a.id);
            }
            fired.push((a.id, t));
        }
    }
    let mut credited: BTreeMap<AgentId, AgentId> = BTreeMap::new();
    for (target, shooters) in &hits_on {
        let tpos = state.agents[target.0 as usize].pos;
        // nearest shooter takes the elimination, ties to the lowest id
        let winner = shooters
            .iter()
            .copied()
            .min_by(|a, b| {
                let da = state.agents[a.0 as usize].pos.dist(tpos);
                let db = state.agents[b.0 as usize].pos.dist(tpos);
                da.total_cmp(&db).then(a.cmp(b))
            })
            .expect("nonempty");
        credited.insert(*target, winner);
    }
    for (shooter, target) in fired {
        let hit = credited.get(&target) == Some(&shooter);
        if hit {
            next.agents[shooter.0 as usize].shots_hit += 1;
        }
        events.push(StepEvent::Shot(ShotEvent { shooter, target, hit }));
    }
    let killed: Vec<bool> = (0..n).map(|i| credited.contains_key(&AgentId(i as u8))).collect();
    for (i, k) in killed.iter().enumerate() {
        if *k {
            next.agents[i].alive = false;
        }
    }

    // Rotations.
    for a in state.alive() {
        let i = a.id.0 as usize;
        if killed[i] {
            continue;
        }
        match actions[i] {
            Action::RotateCw => next.agents[i].dir = a.dir.cw(),
            Action::RotateCcw => next.agents[i].dir = a.dir.ccw(),
            _ => {}
        }
    }

    // Moves.
    let active: Vec<bool> = (0..n).map(|i| state.agents[i].alive && !killed[i]).collect();
    let mut dest: Vec<Cell> = state.agents.iter().map(|a| a.pos).collect();
    let mut moving = vec![false; n];
    for i in 0..n {
        if !active[i] {
            continue;
        }
        if let Action::Move(d) = actions[i] {
            let to = state.agents[i].pos.offset(d);
            if cfg.in_bounds(to) {
                dest[i] = to;
                moving[i] = true;
            } else {
                events.push(StepEvent::OffGridMove(AgentId(i as u8)));
            }
        }
    }
    resolve_moves(&state.agents, &active, &mut dest, &mut moving);
    for i in 0..n {
        if moving[i] {
            next.agents[i].pos = dest[i];
        }
    }
    Ok((next, events))
}

/// Settle simultaneous moves in place. Agents with `moving[i] == false` hold.
fn resolve_moves(agents: &[AgentState], active: &[bool], dest: &mut [Cell], moving: &mut [bool]) {
    let n = agents.len();
    let occupant = |c: Cell| (0..n).find(|&j| active[j] && agents[j].pos == c);
    let hold = |i: usize, dest: &mut [Cell], moving: &mut [bool]| {
        moving[i] = false;
        dest[i] = agents[i].pos;
    };
    loop {
        let mut changed = false;

        // Blocked by an agent that is staying put.
        for i in 0..n {
            if !moving[i] {
                continue;
            }
            if let Some(j) = occupant(dest[i]) {
                if j != i && !moving[j] {
                    hold(i, dest, moving);
                    changed = true;
                }
            }
        }

        // Cycles of movers chasing each other's cells (includes swaps).
        for i in 0..n {
            if !moving[i] {
                continue;
            }
            let mut chain = vec![i];
            let mut cur = i;
            let cyclic = loop {
                match occupant(dest[cur]) {
                    Some(j) if moving[j] => {
                        if j == i {
                            break true;
                        }
                        if chain.contains(&j) {
                            break false;
                        }
                        chain.push(j);
                        cur = j;
                    }
                    _ => break false,
                }
            };
            if cyclic {
                for &k in &chain {
                    hold(k, dest, moving);
                }
                changed = true;
            }
        }

        // Contested destinations: lowest id wins.
        for i in 0..n {
            if !moving[i] {
                continue;
            }
            for j in (i + 1)..n {
                if moving[j] && dest[j] == dest[i] {
                    hold(j, dest, moving);
                    changed = true;
                }
            }
        }

        if !changed {
            break;
        }
    }
}

/// Episode result if the state is terminal, checked in precedence order:
/// attacker on the fort, all attackers dead, all guards dead, step limit.
pub fn terminal(state: &WorldState) -> Option<EpisodeResult> {
    let cfg = &state.config;
    let outcome = if state.attackers().any(|a| a.alive && cfg.is_fort(a.pos)) {
        Outcome::AttackersWinFort
    } else if !state.attackers().any(|a| a.alive) {
        Outcome::GuardsWinElimination
    } else if !state.guards().any(|a| a.alive) {
        Outcome::AttackersWinElimination
    } else if state.step >= cfg.max_steps {
        Outcome::GuardsWinTimeout
    } else {
        return None;
    };
    Some(EpisodeResult {
        outcome,
        steps: state.step,
        shots_fired: state.agents.iter().map(|a| (a.id, a.shots_fired)).collect(),
        shots_hit: state.agents.iter().map(|a| (a.id, a.shots_hit)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn custom(cfg: GridConfig, agents: &[(AgentKind, Cell, Dir)]) -> WorldState {
        WorldState {
            config: Arc::new(cfg),
            agents: agents
                .iter()
                .enumerate()
                .map(|(i, (k, p, d))| new_agent(i, *k, *p, *d))
                .collect(),
            step: 0,
        }
    }

    fn all_noop(s: &WorldState) -> JointAction {
        s.alive().map(|a| (a.id, Action::Noop)).collect()
    }

    #[test]
    fn reset_is_deterministic() {
        let cfg = GridConfig::default();
        assert_eq!(reset(&cfg, 7).unwrap(), reset(&cfg, 7).unwrap());
        assert_ne!(reset(&cfg, 7).unwrap().agents, reset(&cfg, 8).unwrap().agents);
    }

    #[test]
    fn reset_places_six_distinct_agents() {
        let s = reset(&GridConfig::default(), 3).unwrap();
        assert_eq!(s.alive().count(), 6);
        let mut cells: Vec<Cell> = s.agents.iter().map(|a| a.pos).collect();
        cells.sort();
        cells.dedup();
        assert_eq!(cells.len(), 6);
        let spawn = s.config.guard_spawn_cells();
        assert!(s.guards().all(|g| spawn.contains(&g.pos)));
        assert!(s.attackers().all(|a| a.pos.y < 2));
        assert_eq!(s.agents[0].kind, AgentKind::AdHocGuard);
    }

    #[test]
    fn reset_rejects_overfull_config() {
        let mut cfg = GridConfig::with_size(5, 5);
        cfg.n_guards = 500;
        assert!(matches!(reset(&cfg, 0), Err(EnvError::Config(_))));
    }

    #[test]
    fn all_noop_only_advances_step() {
        let s = reset(&GridConfig::default(), 1).unwrap();
        let (n, ev) = step(&s, &all_noop(&s)).unwrap();
        assert_eq!(n.agents, s.agents);
        assert_eq!(n.step, 1);
        assert!(ev.is_empty());
    }

    #[test]
    fn shot_beyond_range_misses() {
        let cfg = GridConfig::default();
        let s = custom(
            cfg,
            &[
                (AgentKind::Guard, Cell::new(5, 10), Dir::S),
                (AgentKind::Attacker, Cell::new(5, 4), Dir::N),
            ],
        );
        assert!(!legal_actions(&s, AgentId(0)).unwrap().contains(&Action::Shoot(AgentId(1))));
        let mut j = all_noop(&s);
        j.insert(AgentId(0), Action::Shoot(AgentId(1)));
        let (n, ev) = step(&s, &j).unwrap();
        assert!(n.agents[1].alive);
        assert_eq!(n.agents[0].shots_fired, 1);
        assert_eq!(n.agents[0].shots_hit, 0);
        assert_eq!(ev, vec![StepEvent::Shot(ShotEvent { shooter: AgentId(0), target: AgentId(1), hit: false })]);
    }

    #[test]
    fn mutual_shots_both_die() {
        let s = custom(
            GridConfig::default(),
            &[
                (AgentKind::Guard, Cell::new(5, 10), Dir::S),
                (AgentKind::Attacker, Cell::new(5, 7), Dir::N),
            ],
        );
        let mut j = JointAction::new();
        j.insert(AgentId(0), Action::Shoot(AgentId(1)));
        j.insert(AgentId(1), Action::Shoot(AgentId(0)));
        let (n, _) = step(&s, &j).unwrap();
        assert!(!n.agents[0].alive && !n.agents[1].alive);
    }

    #[test]
    fn nearest_shooter_is_credited() {
        let s = custom(
            GridConfig::default(),
            &[
                (AgentKind::Guard, Cell::new(5, 10), Dir::S),
                (AgentKind::Guard, Cell::new(6, 8), Dir::S),
                (AgentKind::Attacker, Cell::new(5, 6), Dir::N),
            ],
        );
        let mut j = all_noop(&s);
        j.insert(AgentId(0), Action::Shoot(AgentId(2)));
        j.insert(AgentId(1), Action::Shoot(AgentId(2)));
        let (n, _) = step(&s, &j).unwrap();
        assert!(!n.agents[2].alive);
        assert_eq!((n.agents[0].shots_hit, n.agents[1].shots_hit), (0, 1));
        assert_eq!((n.agents[0].shots_fired, n.agents[1].shots_fired), (1, 1));
    }

    #[test]
    fn dead_agents_are_frozen_and_ignored() {
        let mut s = custom(
            GridConfig::default(),
            &[
                (AgentKind::Guard, Cell::new(5, 10), Dir::S),
                (AgentKind::Attacker, Cell::new(5, 7), Dir::N),
            ],
        );
        s.agents[1].alive = false;
        s.agents.push(new_agent(2, AgentKind::Attacker, Cell::new(1, 1), Dir::N));
        let mut j = all_noop(&s);
        j.insert(AgentId(1), Action::Move(Dir::N));
        let (n, ev) = step(&s, &j).unwrap();
        assert_eq!(n.agents[1], s.agents[1]);
        assert!(ev.contains(&StepEvent::IgnoredDeadAction(AgentId(1))));
        assert_eq!(legal_actions(&s, AgentId(1)).unwrap(), vec![Action::Noop]);
    }

    #[test]
    fn step_rejects_bad_input() {
        let s = reset(&GridConfig::default(), 0).unwrap();
        let mut j = all_noop(&s);
        j.insert(AgentId(0), Action::Shoot(AgentId(42)));
        assert!(matches!(step(&s, &j), Err(EnvError::BadTarget { .. })));
        let mut j = all_noop(&s);
        j.remove(&AgentId(3));
        assert_eq!(step(&s, &j).unwrap_err(), EnvError::MissingAction(AgentId(3)));
        assert!(matches!(legal_actions(&s, AgentId(9)), Err(EnvError::UnknownAgent(_))));
    }

    #[test]
    fn corner_agent_cannot_leave_grid() {
        let s = custom(
            GridConfig::default(),
            &[(AgentKind::Guard, Cell::new(0, 0), Dir::N), (AgentKind::Attacker, Cell::new(19, 19), Dir::N)],
        );
        let acts = legal_actions(&s, AgentId(0)).unwrap();
        assert!(!acts.contains(&Action::Move(Dir::W)));
        assert!(!acts.contains(&Action::Move(Dir::S)));
        assert!(acts.contains(&Action::Move(Dir::N)));
    }

    #[test]
    fn terminal_precedence() {
        let cfg = GridConfig::default();
        let fort = cfg.fort_cells[0];
        let mut s = custom(
            cfg,
            &[(AgentKind::Guard, Cell::new(0, 0), Dir::N), (AgentKind::Attacker, fort, Dir::N)],
        );
        s.agents[0].alive = false;
        assert_eq!(terminal(&s).unwrap().outcome, Outcome::AttackersWinFort);
        s.agents[1].pos = Cell::new(3, 3);
        assert_eq!(terminal(&s).unwrap().outcome, Outcome::AttackersWinElimination);
        s.agents[0].alive = true;
        assert!(terminal(&s).is_none());
        s.step = s.config.max_steps;
        assert_eq!(terminal(&s).unwrap().outcome, Outcome::GuardsWinTimeout);
        s.agents[1].alive = false;
        assert_eq!(terminal(&s).unwrap().outcome, Outcome::GuardsWinElimination);
        assert_eq!(step(&s, &JointAction::new()).unwrap_err(), EnvError::Terminal);
    }

    #[test]
    fn hit_test_geometry() {
        let cfg = GridConfig::default();
        let o = Cell::new(10, 10);
        assert!(hit_test(&cfg, o, Dir::N, Cell::new(10, 15)));
        assert!(!hit_test(&cfg, o, Dir::N, Cell::new(10, 16)));
        // 45 degree boundary is inside a 90 degree arc
        assert!(hit_test(&cfg, o, Dir::N, Cell::new(13, 13)));
        assert!(!hit_test(&cfg, o, Dir::N, Cell::new(13, 12)));
        assert!(!hit_test(&cfg, o, Dir::S, Cell::new(10, 12)));
        assert!(!hit_test(&cfg, o, Dir::N, o));
    }
}
