//! The 39-value attribute vector describing a world state from the point of
//! view of one modeled agent.
//!
//! Layout: six agent blocks of six values each, then three global values.
//!
//! | block | agents |
//! |-------|--------|
//! | 0     | the modeled agent |
//! | 1-2   | its teammates, by id |
//! | 3-5   | its opponents, by id |
//!
//! Each block holds `x, y, distance to field center, polar angle around the
//! center (radians from north, positive towards east), orientation index,
//! distance to fort`. Missing agents are padded with [`PAD_BLOCK`]-style
//! sentinels: coordinates `-1`, both distances set to the field diagonal, angle
//! and orientation `0`. Extra agents beyond the slots are dropped.
//!
//! Globals: distance from the fort to the nearest alive attacker (diagonal when
//! none is alive), number of dead attackers, and the modeled agent's previous
//! action index.

use std::io::{BufRead, Write};

use crate::env::{Action, ActionKind, AgentId, AgentState, EnvError, WorldState};

pub const BLOCK: usize = 6;
pub const N_BLOCKS: usize = 6;
pub const N_TEAMMATES: usize = 2;
pub const N_OPPONENTS: usize = 3;
pub const N_FEATURES: usize = BLOCK * N_BLOCKS + 3;

pub const IDX_NEAREST_ATTACKER: usize = 36;
pub const IDX_DEAD_ATTACKERS: usize = 37;
pub const IDX_PREV_ACTION: usize = 38;

/// Offsets inside an agent block.
pub mod slot {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const DIST_CENTER: usize = 2;
    pub const ANGLE: usize = 3;
    pub const ORIENTATION: usize = 4;
    pub const DIST_FORT: usize = 5;
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    Continuous,
    /// Values are category indices in `0..n`.
    Categorical(usize),
}

pub fn feature_kind(index: usize) -> FeatureKind {
    if index == IDX_PREV_ACTION {
        FeatureKind::Categorical(ActionKind::COUNT)
    } else if index < BLOCK * N_BLOCKS && index % BLOCK == slot::ORIENTATION {
        FeatureKind::Categorical(4)
    } else {
        FeatureKind::Continuous
    }
}

pub fn feature_name(index: usize) -> String {
    if index < BLOCK * N_BLOCKS {
        let names = ["x", "y", "dist_center", "angle", "orientation", "dist_fort"];
        let who = match index / BLOCK {
            0 => "self".to_string(),
            b if b <= N_TEAMMATES => format!("mate{b}"),
            b => format!("opp{}", b - N_TEAMMATES),
        };
        format!("{who}_{}", names[index % BLOCK])
    } else {
        match index {
            IDX_NEAREST_ATTACKER => "nearest_attacker_fort_dist".into(),
            IDX_DEAD_ATTACKERS => "dead_attackers".into(),
            _ => "prev_action".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Compute the attribute vector of `state` for the agent `modeled`.
pub fn extract(state: &WorldState, modeled: AgentId, prev_action: Action) -> Result<FeatureVector, EnvError> {
    let me = state.agent(modeled)?;
    let cfg = &state.config;
    let diag = ((cfg.width * cfg.width + cfg.height * cfg.height) as f64).sqrt();
    let mut v = [0.0; N_FEATURES];

    let mates: Vec<&AgentState> = state
        .agents
        .iter()
        .filter(|a| a.id != modeled && a.kind.same_team(me.kind))
        .collect();
    let opps: Vec<&AgentState> = state.agents.iter().filter(|a| !a.kind.same_team(me.kind)).collect();

    let mut blocks: Vec<Option<&AgentState>> = vec![Some(me)];
    blocks.extend((0..N_TEAMMATES).map(|i| mates.get(i).copied()));
    blocks.extend((0..N_OPPONENTS).map(|i| opps.get(i).copied()));

    let (cx, cy) = cfg.center();
    for (b, agent) in blocks.into_iter().enumerate() {
        let o = b * BLOCK;
        match agent {
            Some(a) => {
                let dx = a.pos.x as f64 - cx;
                let dy = a.pos.y as f64 - cy;
                v[o + slot::X] = a.pos.x as f64;
                v[o + slot::Y] = a.pos.y as f64;
                v[o + slot::DIST_CENTER] = (dx * dx + dy * dy).sqrt();
                v[o + slot::ANGLE] = polar_angle(dx, dy);
                v[o + slot::ORIENTATION] = a.dir.index() as f64;
                v[o + slot::DIST_FORT] = cfg.dist_to_fort(a.pos);
            }
            None => {
                v[o + slot::X] = -1.0;
                v[o + slot::Y] = -1.0;
                v[o + slot::DIST_CENTER] = diag;
                v[o + slot::ANGLE] = 0.0;
                v[o + slot::ORIENTATION] = 0.0;
                v[o + slot::DIST_FORT] = diag;
            }
        }
    }
    v[IDX_NEAREST_ATTACKER] = state
        .attackers()
        .filter(|a| a.alive)
        .map(|a| cfg.dist_to_fort(a.pos))
        .fold(diag, f64::min);
    v[IDX_DEAD_ATTACKERS] = state.attackers().filter(|a| !a.alive).count() as f64;
    v[IDX_PREV_ACTION] = prev_action.kind().index() as f64;
    Ok(FeatureVector(v))
}

/// Angle of (dx, dy) measured from north, positive towards east; 0 at the origin.
pub fn polar_angle(dx: f64, dy: f64) -> f64 {
    if dx == 0.0 && dy == 0.0 {
        0.0
    } else {
        dx.atan2(dy)
    }
}

/// One training row: features plus the action the modeled agent took.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub features: FeatureVector,
    pub action: ActionKind,
}

pub fn csv_header() -> String {
    let mut cols: Vec<String> = (0..N_FEATURES).map(feature_name).collect();
    cols.push("label".into());
    cols.join(",")
}

pub fn write_csv<W: Write>(mut out: W, rows: &[Example]) -> std::io::Result<()> {
    writeln!(out, "{}", csv_header())?;
    for r in rows {
        let mut line = String::with_capacity(N_FEATURES * 8);
        for x in r.features.values() {
            line.push_str(&format!("{x},"));
        }
        line.push_str(r.action.name());
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(input: R) -> Result<Vec<Example>, String> {
    let mut rows = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if n == 0 || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != N_FEATURES + 1 {
            return Err(format!("line {}: expected {} columns, got {}", n + 1, N_FEATURES + 1, cols.len()));
        }
        let mut v = [0.0; N_FEATURES];
        for (i, c) in cols[..N_FEATURES].iter().enumerate() {
            v[i] = c.trim().parse().map_err(|_| format!("line {}: bad number `{c}`", n + 1))?;
        }
        let action = ActionKind::parse(cols[N_FEATURES].trim())
            .ok_or_else(|| format!("line {}: bad action `{}`", n + 1, cols[N_FEATURES]))?;
        rows.push(Example { features: FeatureVector(v), action });
    }
    Ok(rows)
}
