//! Scripted behaviours for every agent that is not the ad hoc guard.
//!
//! `P1` and `P2` are the two handcrafted training policies. `B220`, `B650`,
//! `B1240` and `B1600` are scripted stand-ins for the four built-in policies of
//! the benchmark; they follow the published one-line descriptions, not the
//! original network checkpoints. `Mix` draws one built-in per episode.
//!
//! Default parameters:
//!
//! | policy | guard radius | guard noise | trigger | aggression | attackers | attacker noise |
//! |--------|--------------|-------------|---------|------------|-----------|----------------|
//! | P1     | 3            | 0.05        | 0.2     | 0.5        | lanes, no shooting | 0.10 |
//! | P2     | 7            | 0.05        | 1.0     | 0.9        | spread, then frontal assault with shooting | 0.10 |
//! | B220   | 2 (band)     | 0.05        | 1.0     | 0.0        | straight at the fort | 0.05 |
//! | B650   | 3            | 0.05        | 0.2     | 0.4        | sneak along the flanks | 0.05 |
//! | B1240  | 6            | 0.05        | 0.15    | 0.7        | sneak along the flanks | 0.05 |
//! | B1600  | 9            | 0.05        | 1.0     | 1.0        | two shooters draw guards out, one waits at the back | 0.05 |
//!
//! The guard radius bounds how far (Euclidean, cells) a guard steps away from
//! the nearest fort cell. B220 guards are further confined to the band of rows
//! directly in front of the fort. The trigger is the chance a guard takes a
//! shot it has; otherwise it holds still that tick.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{hit_test, legal_actions, Action, AgentId, AgentKind, AgentState, Cell, Dir, EnvError, WorldState};

#[derive(Copy, Clone, Debug, Hash, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyName {
    P1,
    P2,
    B220,
    B650,
    B1240,
    B1600,
    Mix,
}

impl PolicyName {
    pub const BUILT_IN: [PolicyName; 4] = [PolicyName::B220, PolicyName::B650, PolicyName::B1240, PolicyName::B1600];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyName::P1 => "P1",
            PolicyName::P2 => "P2",
            PolicyName::B220 => "B220",
            PolicyName::B650 => "B650",
            PolicyName::B1240 => "B1240",
            PolicyName::B1600 => "B1600",
            PolicyName::Mix => "mix",
        }
    }

    pub fn parse(s: &str) -> Option<PolicyName> {
        let t = s.trim().to_ascii_lowercase();
        Some(match t.as_str() {
            "p1" | "policy1" => PolicyName::P1,
            "p2" | "policy2" => PolicyName::P2,
            "b220" | "220" => PolicyName::B220,
            "b650" | "650" => PolicyName::B650,
            "b1240" | "1240" => PolicyName::B1240,
            "b1600" | "1600" => PolicyName::B1600,
            "mix" => PolicyName::Mix,
            _ => return None,
        })
    }
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackerMode {
    /// Each attacker takes its own vertical lane, then closes on the fort.
    Lanes,
    /// Fan out for the opening steps, then charge the guards head on.
    Frontal,
    /// Straight line to the nearest fort cell.
    Direct,
    /// Run up the side walls and along the top row.
    Sneak,
    /// Two attackers hunt guards, the rear one waits for an opening.
    Lure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    /// Max distance from the fort a guard moves to, in cells.
    pub guard_radius: f64,
    /// Probability of a uniformly random legal action for guards.
    pub guard_noise: f64,
    /// Probability a guard takes an available shot; otherwise it holds still.
    pub trigger: f64,
    /// How far past shooting range a guard closes in on an attacker, as a
    /// fraction of `guard_radius + 3`.
    pub aggression: f64,
    pub attacker_mode: AttackerMode,
    pub attacker_noise: f64,
    /// Attackers shoot guards that are in range and arc.
    pub attackers_shoot: bool,
    /// Guards fan out to stations before engaging.
    pub guards_spread: bool,
    /// B1600: the rear attacker moves once a guard is this far from the fort.
    pub lure_distance: f64,
    /// B1600: the rear attacker moves regardless after this many steps.
    pub patience: u32,
}

impl PolicyParams {
    pub fn defaults(name: PolicyName) -> PolicyParams {
        let base = PolicyParams {
            guard_radius: 3.0,
            guard_noise: 0.05,
            trigger: 1.0,
            aggression: 0.5,
            attacker_mode: AttackerMode::Lanes,
            attacker_noise: 0.05,
            attackers_shoot: false,
            guards_spread: false,
            lure_distance: 6.0,
            patience: 40,
        };
        match name {
            PolicyName::P1 => PolicyParams { trigger: 0.2, attacker_noise: 0.10, ..base },
            PolicyName::P2 => PolicyParams {
                guard_radius: 7.0,
                guard_noise: 0.05,
                aggression: 0.9,
                attacker_mode: AttackerMode::Frontal,
                attacker_noise: 0.10,
                attackers_shoot: true,
                guards_spread: true,
                ..base
            },
            PolicyName::B220 => PolicyParams {
                guard_radius: 2.0,
                aggression: 0.0,
                attacker_mode: AttackerMode::Direct,
                ..base
            },
            PolicyName::B650 => PolicyParams { trigger: 0.2, aggression: 0.4, attacker_mode: AttackerMode::Sneak, ..base },
            PolicyName::B1240 => PolicyParams {
                trigger: 0.15,
                guard_radius: 6.0,
                aggression: 0.7,
                attacker_mode: AttackerMode::Sneak,
                guards_spread: true,
                ..base
            },
            PolicyName::B1600 | PolicyName::Mix => PolicyParams {
                guard_radius: 9.0,
                aggression: 1.0,
                attacker_mode: AttackerMode::Lure,
                attackers_shoot: true,
                guards_spread: true,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(self.guard_radius >= 0.0) {
            return Err(PolicyError::BadParam("guard_radius must be >= 0".into()));
        }
        if !unit(self.guard_noise) || !unit(self.attacker_noise) || !unit(self.aggression) || !unit(self.trigger) {
            return Err(PolicyError::BadParam("noise and aggression must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub name: PolicyName,
    pub params: PolicyParams,
}

impl PolicySpec {
    pub fn new(name: PolicyName) -> Self {
        PolicySpec { name, params: PolicyParams::defaults(name) }
    }

    /// Concrete policy for one episode: `Mix` draws a built-in from the seed.
    pub fn resolve(&self, episode_seed: u64) -> PolicySpec {
        match self.name {
            PolicyName::Mix => make_mix(episode_seed),
            _ => self.clone(),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PolicyError {
    #[error("`mix` must be resolved to a built-in policy per episode")]
    UnresolvedMix,
    #[error("no built-in policies to mix")]
    EmptyMix,
    #[error("bad policy parameter: {0}")]
    BadParam(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

const MIX_SALT: u64 = 0x6d69_785f_7365_6564;

/// Uniform draw of one built-in policy, as a pure function of `seed`.
pub fn make_mix(seed: u64) -> PolicySpec {
    make_mix_from(&PolicyName::BUILT_IN, seed).expect("built-in set is nonempty")
}

pub fn make_mix_from(choices: &[PolicyName], seed: u64) -> Result<PolicySpec, PolicyError> {
    if choices.is_empty() {
        return Err(PolicyError::EmptyMix);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ MIX_SALT);
    Ok(PolicySpec::new(choices[rng.random_range(0..choices.len())]))
}

/// The action `id` takes under `spec`. Always legal; dead agents get `Noop`.
pub fn policy_action<R: Rng + ?Sized>(
    spec: &PolicySpec,
    state: &WorldState,
    id: AgentId,
    rng: &mut R,
) -> Result<Action, PolicyError> {
    if spec.name == PolicyName::Mix {
        return Err(PolicyError::UnresolvedMix);
    }
    let me = state.agent(id)?;
    if !me.alive {
        return Ok(Action::Noop);
    }
    let legal = legal_actions(state, id)?;
    let ctx = Ctx { spec, state, me, legal: &legal };
    let act = if me.kind == AgentKind::Attacker { ctx.attacker(rng) } else { ctx.guard(rng) };
    debug_assert!(legal.contains(&act), "{act:?} not legal for {id}");
    Ok(act)
}

struct Ctx<'a> {
    spec: &'a PolicySpec,
    state: &'a WorldState,
    me: &'a AgentState,
    legal: &'a [Action],
}

impl Ctx<'_> {
    fn p(&self) -> &PolicyParams {
        &self.spec.params
    }

    fn fort_center(&self) -> Cell {
        let f = &self.state.config.fort_cells;
        f[f.len() / 2]
    }

    fn fort_row(&self) -> i32 {
        self.fort_center().y
    }

    /// Rank of `me` among alive teammates ordered by (x, y), and the team size.
    fn team_rank(&self) -> (usize, usize) {
        let mut mates: Vec<&AgentState> = self
            .state
            .agents
            .iter()
            .filter(|a| a.alive && a.kind.same_team(self.me.kind))
            .collect();
        mates.sort_by_key(|a| (a.pos.x, a.pos.y, a.id));
        let rank = mates.iter().position(|a| a.id == self.me.id).unwrap_or(0);
        (rank, mates.len())
    }

    /// Rank among all teammates by id, stable over the episode.
    fn id_rank(&self) -> (usize, usize) {
        let mates: Vec<AgentId> = self
            .state
            .agents
            .iter()
            .filter(|a| a.kind.same_team(self.me.kind))
            .map(|a| a.id)
            .collect();
        (mates.iter().position(|&i| i == self.me.id).unwrap_or(0), mates.len())
    }

    fn enemies(&self) -> impl Iterator<Item = &AgentState> {
        let me = self.me;
        self.state.agents.iter().filter(move |a| a.alive && !a.kind.same_team(me.kind))
    }

    fn nearest_enemy(&self) -> Option<&AgentState> {
        self.enemies()
            .min_by(|a, b| self.me.pos.dist(a.pos).total_cmp(&self.me.pos.dist(b.pos)).then(a.id.cmp(&b.id)))
    }

    fn nearest_shot(&self) -> Option<Action> {
        self.legal
            .iter()
            .filter_map(|a| match a {
                Action::Shoot(t) => Some(*t),
                _ => None,
            })
            .min_by(|a, b| {
                let pa = self.state.agents[a.0 as usize].pos;
                let pb = self.state.agents[b.0 as usize].pos;
                self.me.pos.dist(pa).total_cmp(&self.me.pos.dist(pb)).then(a.cmp(b))
            })
            .map(Action::Shoot)
    }

    /// Guards focus on the shootable attacker closest to the fort.
    fn threat_shot(&self) -> Option<Action> {
        let cfg = &self.state.config;
        self.legal
            .iter()
            .filter_map(|a| match a {
                Action::Shoot(t) => Some(*t),
                _ => None,
            })
            .min_by(|a, b| {
                let pa = self.state.agents[a.0 as usize].pos;
                let pb = self.state.agents[b.0 as usize].pos;
                cfg.dist_to_fort(pa).total_cmp(&cfg.dist_to_fort(pb)).then(a.cmp(b))
            })
            .map(Action::Shoot)
    }

    fn random_legal<R: Rng + ?Sized>(&self, rng: &mut R, allowed: impl Fn(Cell) -> bool) -> Action {
        let opts: Vec<Action> = self
            .legal
            .iter()
            .copied()
            .filter(|a| match a {
                Action::Move(d) => allowed(self.me.pos.offset(*d)),
                _ => true,
            })
            .collect();
        opts[rng.random_range(0..opts.len())]
    }

    fn free(&self, c: Cell) -> bool {
        self.state.config.in_bounds(c) && self.state.occupant(c).is_none()
    }

    /// Greedy move strictly reducing Euclidean distance to `target`.
    fn step_toward(&self, target: Cell, allowed: impl Fn(Cell) -> bool) -> Option<Action> {
        let here = self.me.pos.dist(target);
        Dir::ALL
            .iter()
            .map(|&d| (d, self.me.pos.offset(d)))
            .filter(|(_, c)| self.free(*c) && allowed(*c) && c.dist(target) < here - 1e-9)
            .min_by(|a, b| a.1.dist(target).total_cmp(&b.1.dist(target)))
            .map(|(d, _)| Action::Move(d))
    }

    fn turn_toward(&self, target: Cell) -> Option<Action> {
        let want = Dir::towards(target.x - self.me.pos.x, target.y - self.me.pos.y)?;
        if want == self.me.dir {
            None
        } else if want == self.me.dir.ccw() {
            Some(Action::RotateCcw)
        } else {
            Some(Action::RotateCw)
        }
    }

    fn in_range(&self, target: Cell) -> bool {
        self.me.pos.dist(target) <= self.state.config.shoot_range + 1e-9
    }

    // ---------------------------------------------------------------- guards

    fn within_radius(&self, c: Cell) -> bool {
        let cfg = &self.state.config;
        if self.spec.name == PolicyName::B220 && !self.in_front_band(c) {
            return false;
        }
        cfg.dist_to_fort(c) <= self.p().guard_radius + 1e-9
    }

    fn in_front_band(&self, c: Cell) -> bool {
        let cfg = &self.state.config;
        let xs = cfg.fort_cells.iter().map(|f| f.x);
        let (lo, hi) = (xs.clone().min().unwrap_or(0), xs.max().unwrap_or(0));
        c.y >= self.fort_row() - 2 && c.x >= lo - 3 && c.x <= hi + 3
    }

    fn station(&self) -> Cell {
        let (rank, n) = self.id_rank();
        let fc = self.fort_center();
        let cfg = &self.state.config;
        if !self.p().guards_spread || n <= 1 {
            return Cell::new(fc.x, fc.y - 1);
        }
        let r = (self.p().guard_radius * 0.6).max(2.0);
        // fan the guards over the half circle below the fort
        let t = std::f64::consts::PI * (rank as f64 + 1.0) / (n as f64 + 1.0);
        let x = (fc.x as f64 - r * t.cos()).round() as i32;
        let y = (fc.y as f64 - r * t.sin()).round() as i32;
        Cell::new(x.clamp(0, cfg.width - 1), y.clamp(0, cfg.height - 1))
    }

    fn guard<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        let p = self.p();
        if rng.random::<f64>() < p.guard_noise {
            return self.random_legal(rng, |c| self.within_radius(c) || !self.within_radius(self.me.pos));
        }
        if let Some(shot) = self.threat_shot() {
            if p.trigger >= 1.0 || rng.random::<f64>() < p.trigger {
                return shot;
            }
            return Action::Noop;
        }
        if p.guards_spread && self.state.step < 5 && !self.enemy_near(p.guard_radius) {
            if let Some(a) = self.spread_move(Dir::S) {
                return a;
            }
        }
        let cfg = &self.state.config;
        if cfg.dist_to_fort(self.me.pos) > p.guard_radius + 1e-9 {
            let here = cfg.dist_to_fort(self.me.pos);
            let back = Dir::ALL
                .iter()
                .map(|&d| (d, self.me.pos.offset(d)))
                .filter(|(_, c)| self.free(*c) && cfg.dist_to_fort(*c) < here - 1e-9)
                .min_by(|a, b| cfg.dist_to_fort(a.1).total_cmp(&cfg.dist_to_fort(b.1)));
            if let Some((d, _)) = back {
                return Action::Move(d);
            }
        }
        if let Some(t) = self.nearest_enemy() {
            let t = t.pos;
            if self.in_range(t) {
                if let Some(turn) = self.turn_toward(t) {
                    return turn;
                }
            }
            let watch = cfg.shoot_range + p.aggression * (p.guard_radius + 3.0);
            if self.me.pos.dist(t) <= watch {
                if let Some(step) = self.step_toward(t, |c| self.within_radius(c)) {
                    return step;
                }
            }
            if let Some(step) = self.step_toward(self.station(), |c| self.within_radius(c)) {
                return step;
            }
            if let Some(turn) = self.turn_toward(t) {
                return turn;
            }
            return Action::Noop;
        }
        self.step_toward(self.station(), |c| self.within_radius(c)).unwrap_or(Action::Noop)
    }

    fn enemy_near(&self, extra: f64) -> bool {
        let reach = self.state.config.shoot_range + extra;
        self.enemies().any(|e| self.me.pos.dist(e.pos) <= reach)
    }

    /// Opening fan-out: outermost agents step sideways, the rest step `forward`.
    fn spread_move(&self, forward: Dir) -> Option<Action> {
        let (rank, n) = self.team_rank();
        let side = if n > 1 && rank == 0 {
            Some(Dir::W)
        } else if n > 1 && rank == n - 1 {
            Some(Dir::E)
        } else {
            None
        };
        let cfg = &self.state.config;
        for d in side.into_iter().chain(std::iter::once(forward)) {
            let c = self.me.pos.offset(d);
            if cfg.in_bounds(c) && !cfg.is_fort(c) {
                return Some(Action::Move(d));
            }
        }
        None
    }

    // ------------------------------------------------------------- attackers

    fn attacker<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        let p = self.p();
        if rng.random::<f64>() < p.attacker_noise {
            return self.random_legal(rng, |_| true);
        }
        let fort = self.nearest_fort_cell();
        match p.attacker_mode {
            AttackerMode::Direct => self.charge(fort),
            AttackerMode::Lanes => {
                let (rank, n) = self.id_rank();
                let w = self.state.config.width;
                let lane = (((w - 1) as f64) * (rank as f64 + 1.0) / (n as f64 + 1.0)).round() as i32;
                let turn_row = self.fort_row() - 5;
                if self.me.pos.y < turn_row {
                    let target = Cell::new(lane, turn_row);
                    // into the lane first, then straight up
                    let pref = if self.me.pos.x != lane { Dir::towards(lane - self.me.pos.x, 0) } else { Some(Dir::N) };
                    if let Some(d) = pref {
                        if self.free(self.me.pos.offset(d)) {
                            return Action::Move(d);
                        }
                    }
                    return self.charge(target);
                }
                self.charge(fort)
            }
            AttackerMode::Frontal => {
                if let Some(shot) = self.nearest_shot() {
                    return shot;
                }
                if self.state.step < 5 && !self.enemy_near(0.0) {
                    if let Some(a) = self.spread_move(Dir::N) {
                        return a;
                    }
                }
                if let Some(g) = self.nearest_enemy() {
                    if self.in_range(g.pos) {
                        if let Some(turn) = self.turn_toward(g.pos) {
                            return turn;
                        }
                    }
                }
                if self.me.dir != Dir::N {
                    if let Some(turn) = self.turn_toward(self.me.pos.offset(Dir::N)) {
                        return turn;
                    }
                }
                self.charge(fort)
            }
            AttackerMode::Sneak => {
                let (rank, n) = self.id_rank();
                let cfg = &self.state.config;
                let top = self.fort_row();
                match rank % 3 {
                    // left wall, then along the top row
                    0 if n > 1 => self.via(Cell::new(0, top), fort),
                    1 if n > 1 => self.via(Cell::new(cfg.width - 1, top), fort),
                    _ => self.charge(fort),
                }
            }
            AttackerMode::Lure => {
                let (rank, n) = self.id_rank();
                if rank + 1 < n || n == 1 {
                    if let Some(shot) = self.nearest_shot() {
                        return shot;
                    }
                    if let Some(g) = self.nearest_enemy() {
                        if self.in_range(g.pos) {
                            if let Some(turn) = self.turn_toward(g.pos) {
                                return turn;
                            }
                        }
                        let g = g.pos;
                        return self.step_toward(g, |_| true).unwrap_or(Action::Noop);
                    }
                    return self.charge(fort);
                }
                if self.rear_may_go() {
                    self.charge(fort)
                } else {
                    let wait = Cell::new(self.me.pos.x, (self.fort_row() - 12).max(0));
                    self.step_toward(wait, |_| true).unwrap_or(Action::Noop)
                }
            }
        }
    }

    /// B1600 rear attacker leaves its waiting spot once a guard has been drawn out.
    fn rear_may_go(&self) -> bool {
        let cfg = &self.state.config;
        self.state.step >= self.p().patience
            || self
                .state
                .guards()
                .any(|g| !g.alive || cfg.dist_to_fort(g.pos) > self.p().lure_distance)
    }

    fn nearest_fort_cell(&self) -> Cell {
        *self
            .state
            .config
            .fort_cells
            .iter()
            .min_by(|a, b| self.me.pos.dist(**a).total_cmp(&self.me.pos.dist(**b)).then(a.cmp(b)))
            .expect("fort is nonempty")
    }

    /// Head for `target`, side-stepping when the greedy cell is taken.
    fn charge(&self, target: Cell) -> Action {
        if let Some(a) = self.step_toward(target, |_| true) {
            return a;
        }
        // blocked: any free move that does not increase the distance
        let here = self.me.pos.dist(target);
        Dir::ALL
            .iter()
            .find(|&&d| {
                let c = self.me.pos.offset(d);
                self.free(c) && c.dist(target) <= here + 1.0
            })
            .map(|&d| Action::Move(d))
            .unwrap_or(Action::Noop)
    }

    /// Go to `waypoint` (or at least its row and column) before heading to `goal`.
    fn via(&self, waypoint: Cell, goal: Cell) -> Action {
        let pos = self.me.pos;
        let on_path = pos.y >= waypoint.y || pos.x == waypoint.x;
        if pos.y >= waypoint.y {
            return self.charge(goal);
        }
        if on_path {
            return self.charge(Cell::new(pos.x, waypoint.y));
        }
        self.charge(Cell::new(waypoint.x, pos.y))
    }
}

/// Which guards can currently shoot `target`.
pub fn shooters_of(state: &WorldState, target: AgentId) -> Vec<AgentId> {
    let cfg = &state.config;
    let Ok(t) = state.agent(target) else { return Vec::new() };
    state
        .agents
        .iter()
        .filter(|a| a.alive && !a.kind.same_team(t.kind) && hit_test(cfg, a.pos, a.dir, t.pos))
        .map(|a| a.id)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{reset, step, GridConfig, JointAction};
    use std::sync::Arc;

    fn agent(id: u8, kind: AgentKind, x: i32, y: i32, dir: Dir) -> AgentState {
        AgentState { id: AgentId(id), kind, pos: Cell::new(x, y), dir, alive: true, shots_fired: 0, shots_hit: 0 }
    }

    fn world(agents: Vec<AgentState>) -> WorldState {
        WorldState { config: Arc::new(GridConfig::default()), agents, step: 10 }
    }

    fn quiet(name: PolicyName) -> PolicySpec {
        let mut s = PolicySpec::new(name);
        s.params.guard_noise = 0.0;
        s.params.attacker_noise = 0.0;
        s.params.trigger = 1.0;
        s
    }

    #[test]
    fn p1_far_guard_heads_back_to_fort() {
        let s = world(vec![
            agent(0, AgentKind::Guard, 9, 10, Dir::S),
            agent(1, AgentKind::Attacker, 2, 0, Dir::N),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = policy_action(&quiet(PolicyName::P1), &s, AgentId(0), &mut rng).unwrap();
        let Action::Move(d) = a else { panic!("expected a move, got {a:?}") };
        let cfg = &s.config;
        assert!(cfg.dist_to_fort(Cell::new(9, 10).offset(d)) < cfg.dist_to_fort(Cell::new(9, 10)));
    }

    #[test]
    fn p1_guard_shoots_attacker_in_arc() {
        let s = world(vec![
            agent(0, AgentKind::Guard, 9, 17, Dir::S),
            agent(1, AgentKind::Attacker, 9, 14, Dir::N),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = policy_action(&quiet(PolicyName::P1), &s, AgentId(0), &mut rng).unwrap();
        assert_eq!(a, Action::Shoot(AgentId(1)));
    }

    #[test]
    fn b1600_rear_attacker_rushes_when_guard_drawn_out() {
        // attackers are ids 1..=3, id 3 is the rear one
        let mut agents = vec![
            agent(0, AgentKind::Guard, 9, 6, Dir::S),
            agent(1, AgentKind::Attacker, 2, 3, Dir::N),
            agent(2, AgentKind::Attacker, 5, 3, Dir::N),
            agent(3, AgentKind::Attacker, 15, 7, Dir::N),
        ];
        let s = world(agents.clone());
        let spec = quiet(PolicyName::B1600);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = policy_action(&spec, &s, AgentId(3), &mut rng).unwrap();
        // hand oracle: guard at distance > lure_distance, so go straight for the nearest fort cell
        let cfg = &s.config;
        let Action::Move(d) = a else { panic!("expected a move, got {a:?}") };
        let from = Cell::new(15, 7);
        assert!(cfg.dist_to_fort(from.offset(d)) < cfg.dist_to_fort(from));
        // with the guard home the rear attacker keeps waiting
        agents[0].pos = Cell::new(9, 18);
        let s = world(agents);
        let a = policy_action(&spec, &s, AgentId(3), &mut rng).unwrap();
        assert!(!matches!(a, Action::Move(Dir::N)), "{a:?}");
    }

    #[test]
    fn mix_is_deterministic_and_uniform() {
        assert_eq!(make_mix(42), make_mix(42));
        let mut counts = [0usize; 4];
        for seed in 0..10_000u64 {
            let n = make_mix(seed).name;
            counts[PolicyName::BUILT_IN.iter().position(|&b| b == n).unwrap()] += 1;
        }
        for c in counts {
            let f = c as f64 / 10_000.0;
            assert!((0.23..=0.27).contains(&f), "{counts:?}");
        }
        assert_eq!(make_mix_from(&[], 1), Err(PolicyError::EmptyMix));
    }

    #[test]
    fn unresolved_mix_is_rejected() {
        let s = reset(&GridConfig::default(), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = policy_action(&PolicySpec::new(PolicyName::Mix), &s, AgentId(1), &mut rng);
        assert_eq!(r, Err(PolicyError::UnresolvedMix));
        assert_ne!(PolicySpec::new(PolicyName::Mix).resolve(3).name, PolicyName::Mix);
    }

    #[test]
    fn radius_ordering() {
        let r: Vec<f64> = PolicyName::BUILT_IN.iter().map(|&n| PolicyParams::defaults(n).guard_radius).collect();
        assert!(r.windows(2).all(|w| w[0] < w[1]), "{r:?}");
    }

    fn run_policy(name: PolicyName, seed: u64, steps: usize, noise: bool) -> Vec<WorldState> {
        let mut cfg = GridConfig::default();
        cfg.adhoc_guard = false;
        let spec = if noise { PolicySpec::new(name) } else { quiet(name) };
        let mut s = reset(&cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = vec![s.clone()];
        for _ in 0..steps {
            if s.is_terminal() {
                break;
            }
            let j: JointAction = s
                .alive()
                .map(|a| (a.id, policy_action(&spec, &s, a.id, &mut rng).unwrap()))
                .collect();
            s = step(&s, &j).unwrap().0;
            out.push(s.clone());
        }
        out
    }

    #[test]
    fn emitted_actions_are_legal_for_all_policies() {
        // policy_action debug-asserts legality; run every policy for a while
        for name in [PolicyName::P1, PolicyName::P2].into_iter().chain(PolicyName::BUILT_IN) {
            for seed in 0..5 {
                run_policy(name, seed, 100, true);
            }
        }
    }

    fn guard_ids(s: &WorldState) -> Vec<AgentId> {
        s.guards().map(|a| a.id).collect()
    }

    fn pairwise_ok(prev: &WorldState, next: &WorldState, ids: &[AgentId]) -> bool {
        for (k, &a) in ids.iter().enumerate() {
            for &b in &ids[k + 1..] {
                let d0 = prev.agents[a.0 as usize].pos.dist(prev.agents[b.0 as usize].pos);
                let d1 = next.agents[a.0 as usize].pos.dist(next.agents[b.0 as usize].pos);
                if d1 < d0 - 1e-9 {
                    return false;
                }
            }
        }
        true
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn p1_guards_stay_near_fort(seed in 0u64..10_000) {
            let run = run_policy(PolicyName::P1, seed, 100, true);
            let radius = PolicyParams::defaults(PolicyName::P1).guard_radius;
            let cfg = &run[0].config;
            for g in guard_ids(&run[0]) {
                let d: Vec<f64> = run.iter().map(|s| cfg.dist_to_fort(s.agents[g.0 as usize].pos)).collect();
                let mean = d.iter().sum::<f64>() / d.len() as f64;
                proptest::prop_assert!(mean <= radius + 1.0, "guard {g} mean {mean}");
            }
        }

        #[test]
        fn p2_teams_spread_in_opening(seed in 0u64..10_000) {
            let run = run_policy(PolicyName::P2, seed, 5, false);
            let cfg = run[0].config.clone();
            let guards = guard_ids(&run[0]);
            let attackers: Vec<AgentId> = run[0].attackers().map(|a| a.id).collect();
            for w in run.windows(2) {
                let engaged = w[0].guards().any(|g| w[0].attackers().any(|a| g.pos.dist(a.pos) <= cfg.shoot_range));
                if engaged {
                    break;
                }
                proptest::prop_assert!(pairwise_ok(&w[0], &w[1], &guards), "guards at step {}", w[0].step);
                proptest::prop_assert!(pairwise_ok(&w[0], &w[1], &attackers), "attackers at step {}", w[0].step);
            }
        }

        #[test]
        fn b220_guards_keep_to_the_band(seed in 0u64..10_000) {
            let run = run_policy(PolicyName::B220, seed, 100, true);
            let cfg = &run[0].config;
            let xs: Vec<i32> = cfg.fort_cells.iter().map(|c| c.x).collect();
            let (lo, hi) = (*xs.iter().min().unwrap(), *xs.iter().max().unwrap());
            let row = cfg.fort_cells[0].y;
            for s in &run {
                for g in s.guards() {
                    proptest::prop_assert!(g.pos.y >= row - 2 && g.pos.x >= lo - 3 && g.pos.x <= hi + 3, "{:?}", g.pos);
                }
            }
        }
    }
}
