//! Discrete-grid Fort Attack.
//!
//! Guards defend a strip of fort cells on the top edge against attackers spawning
//! in the bottom rows. All agents act simultaneously each tick; shots are resolved
//! against the pre-tick poses, then moves are resolved with a fixed conflict rule:
//! a contested cell goes to the lowest [`AgentId`], swaps and longer cycles hold,
//! and a mover blocked by a holder holds too. Dead agents keep their last pose but
//! no longer occupy their cell.

mod config;
mod dynamics;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use config::{parse_key_values, GridConfig};
pub use dynamics::{hit_test, legal_actions, reset, step, terminal};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EnvError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("agent {agent} targets unknown or invalid agent {target}")]
    BadTarget { agent: AgentId, target: AgentId },
    #[error("no action given for alive agent {0}")]
    MissingAction(AgentId),
    #[error("episode is already over")]
    Terminal,
}

#[derive(Copy, Clone, Debug, Hash, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u8);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Copy, Clone, Debug, Hash, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    pub fn dist(self, other: Cell) -> f64 {
        let dx = (self.x - other.x) as f64;
        let dy = (self.y - other.y) as f64;
        (dx * dx + dy * dy).sqrt()
    }

    pub fn manhattan(self, other: Cell) -> i32 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }

    pub fn offset(self, d: Dir) -> Cell {
        let (dx, dy) = d.delta();
        Cell::new(self.x + dx, self.y + dy)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Compass direction; `N` points towards increasing `y` (the fort side).
#[derive(Copy, Clone, Debug, Hash, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dir {
    N,
    E,
    S,
    W,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::N, Dir::E, Dir::S, Dir::W];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Dir::N => (0, 1),
            Dir::E => (1, 0),
            Dir::S => (0, -1),
            Dir::W => (-1, 0),
        }
    }

    pub fn cw(self) -> Dir {
        match self {
            Dir::N => Dir::E,
            Dir::E => Dir::S,
            Dir::S => Dir::W,
            Dir::W => Dir::N,
        }
    }

    pub fn ccw(self) -> Dir {
        match self {
            Dir::N => Dir::W,
            Dir::W => Dir::S,
            Dir::S => Dir::E,
            Dir::E => Dir::N,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Dir> {
        Dir::ALL.get(i).copied()
    }

    /// Left-right mirror image.
    pub fn mirror_x(self) -> Dir {
        match self {
            Dir::E => Dir::W,
            Dir::W => Dir::E,
            d => d,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dir::N => "n",
            Dir::E => "e",
            Dir::S => "s",
            Dir::W => "w",
        }
    }

    pub fn parse(s: &str) -> Option<Dir> {
        match s.to_ascii_lowercase().as_str() {
            "n" | "north" => Some(Dir::N),
            "e" | "east" => Some(Dir::E),
            "s" | "south" => Some(Dir::S),
            "w" | "west" => Some(Dir::W),
            _ => None,
        }
    }

    /// Cardinal direction closest to the vector (dx, dy); ties prefer the vertical axis.
    pub fn towards(dx: i32, dy: i32) -> Option<Dir> {
        if dx == 0 && dy == 0 {
            return None;
        }
        Some(if dy.abs() >= dx.abs() {
            if dy > 0 {
                Dir::N
            } else {
                Dir::S
            }
        } else if dx > 0 {
            Dir::E
        } else {
            Dir::W
        })
    }
}

#[derive(Copy, Clone, Debug, Hash, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    AdHocGuard,
    Guard,
    Attacker,
}

impl AgentKind {
    pub fn is_guard(self) -> bool {
        matches!(self, AgentKind::AdHocGuard | AgentKind::Guard)
    }

    pub fn same_team(self, other: AgentKind) -> bool {
        self.is_guard() == other.is_guard()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub kind: AgentKind,
    pub pos: Cell,
    pub dir: Dir,
    pub alive: bool,
    pub shots_fired: u32,
    pub shots_hit: u32,
}

/// The eight action kinds, in their canonical index order.
#[derive(Copy, Clone, Debug, Hash, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Noop,
    MoveN,
    MoveE,
    MoveS,
    MoveW,
    RotateCw,
    RotateCcw,
    Shoot,
}

impl ActionKind {
    pub const ALL: [ActionKind; 8] = [
        ActionKind::Noop,
        ActionKind::MoveN,
        ActionKind::MoveE,
        ActionKind::MoveS,
        ActionKind::MoveW,
        ActionKind::RotateCw,
        ActionKind::RotateCcw,
        ActionKind::Shoot,
    ];
    pub const COUNT: usize = 8;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ActionKind> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionKind::Noop => "noop",
            ActionKind::MoveN => "move_n",
            ActionKind::MoveE => "move_e",
            ActionKind::MoveS => "move_s",
            ActionKind::MoveW => "move_w",
            ActionKind::RotateCw => "rotate_cw",
            ActionKind::RotateCcw => "rotate_ccw",
            ActionKind::Shoot => "shoot",
        }
    }

    pub fn parse(s: &str) -> Option<ActionKind> {
        Self::ALL.iter().copied().find(|k| k.name() == s)
    }

    pub fn move_dir(self) -> Option<Dir> {
        match self {
            ActionKind::MoveN => Some(Dir::N),
            ActionKind::MoveE => Some(Dir::E),
            ActionKind::MoveS => Some(Dir::S),
            ActionKind::MoveW => Some(Dir::W),
            _ => None,
        }
    }
}

#[derive(Copy, Clone, Debug, Hash, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Noop,
    Move(Dir),
    RotateCw,
    RotateCcw,
    Shoot(AgentId),
}

impl Action {
    pub fn kind(self) -> ActionKind {
        match self {
            Action::Noop => ActionKind::Noop,
            Action::Move(Dir::N) => ActionKind::MoveN,
            Action::Move(Dir::E) => ActionKind::MoveE,
            Action::Move(Dir::S) => ActionKind::MoveS,
            Action::Move(Dir::W) => ActionKind::MoveW,
            Action::RotateCw => ActionKind::RotateCw,
            Action::RotateCcw => ActionKind::RotateCcw,
            Action::Shoot(_) => ActionKind::Shoot,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Shoot(t) => write!(f, "shoot({})", t.0),
            a => f.write_str(a.kind().name()),
        }
    }
}

/// Snapshot of an episode; the single source of truth per tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    #[serde(skip)]
    pub config: std::sync::Arc<GridConfig>,
    pub agents: Vec<AgentState>,
    pub step: u32,
}

impl WorldState {
    pub fn agent(&self, id: AgentId) -> Result<&AgentState, EnvError> {
        self.agents
            .get(id.0 as usize)
            .filter(|a| a.id == id)
            .ok_or(EnvError::UnknownAgent(id))
    }

    pub fn alive(&self) -> impl Iterator<Item = &AgentState> {
        self.agents.iter().filter(|a| a.alive)
    }

    pub fn guards(&self) -> impl Iterator<Item = &AgentState> {
        self.agents.iter().filter(|a| a.kind.is_guard())
    }

    pub fn attackers(&self) -> impl Iterator<Item = &AgentState> {
        self.agents.iter().filter(|a| a.kind == AgentKind::Attacker)
    }

    pub fn adhoc(&self) -> Option<&AgentState> {
        self.agents.iter().find(|a| a.kind == AgentKind::AdHocGuard)
    }

    /// Alive agent standing on `c`, if any.
    pub fn occupant(&self, c: Cell) -> Option<&AgentState> {
        self.agents.iter().find(|a| a.alive && a.pos == c)
    }

    pub fn is_terminal(&self) -> bool {
        terminal(self).is_some()
    }
}

#[derive(Copy, Clone, Debug, Hash, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    GuardsWinElimination,
    GuardsWinTimeout,
    AttackersWinFort,
    AttackersWinElimination,
}

impl Outcome {
    pub fn guards_win(self) -> bool {
        matches!(self, Outcome::GuardsWinElimination | Outcome::GuardsWinTimeout)
    }

    pub fn name(self) -> &'static str {
        match self {
            Outcome::GuardsWinElimination => "guards_win_elimination",
            Outcome::GuardsWinTimeout => "guards_win_timeout",
            Outcome::AttackersWinFort => "attackers_win_fort",
            Outcome::AttackersWinElimination => "attackers_win_elimination",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub outcome: Outcome,
    pub steps: u32,
    pub shots_fired: std::collections::BTreeMap<AgentId, u32>,
    pub shots_hit: std::collections::BTreeMap<AgentId, u32>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotEvent {
    pub shooter: AgentId,
    pub target: AgentId,
    /// The shot passed the hit test and was credited with the elimination.
    pub hit: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepEvent {
    Shot(ShotEvent),
    /// An action was supplied for an agent that was already dead.
    IgnoredDeadAction(AgentId),
    /// A move off the grid was supplied and treated as a no-op.
    OffGridMove(AgentId),
}

pub type JointAction = std::collections::BTreeMap<AgentId, Action>;
