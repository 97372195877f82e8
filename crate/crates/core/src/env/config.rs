use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Cell, EnvError};

/// Static description of a Fort Attack arena.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub width: i32,
    pub height: i32,
    pub fort_cells: Vec<Cell>,
    /// Euclidean reach of a shot, in cells.
    pub shoot_range: f64,
    /// Full opening angle of the shooting cone, centered on the facing direction.
    pub shoot_arc_deg: f64,
    pub max_steps: u32,
    pub n_guards: usize,
    pub n_attackers: usize,
    /// Whether guard 0 is driven by the ad hoc agent rather than the team policy.
    pub adhoc_guard: bool,
    /// Number of bottom rows attackers may spawn in.
    pub spawn_band: i32,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self::with_size(20, 20)
    }
}

impl GridConfig {
    /// Default rules on a `width` x `height` grid with a 3-cell fort on the top edge.
    pub fn with_size(width: i32, height: i32) -> Self {
        let x0 = (width - 3) / 2;
        let fort_cells = (x0..x0 + 3).map(|x| Cell::new(x, height - 1)).collect();
        GridConfig {
            width,
            height,
            fort_cells,
            shoot_range: 5.0,
            shoot_arc_deg: 90.0,
            max_steps: 100,
            n_guards: 3,
            n_attackers: 3,
            adhoc_guard: true,
            spawn_band: 2,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::Config(m));
        if self.width < 5 || self.height < 5 {
            return bad(format!("grid must be at least 5x5, got {}x{}", self.width, self.height));
        }
        if self.fort_cells.is_empty() {
            return bad("fort_cells must not be empty".into());
        }
        if let Some(c) = self.fort_cells.iter().find(|c| !self.in_bounds(**c)) {
            return bad(format!("fort cell {c} is outside the grid"));
        }
        if !(self.shoot_range >= 1.0) {
            return bad(format!("shoot_range must be >= 1, got {}", self.shoot_range));
        }
        if !(self.shoot_arc_deg > 0.0 && self.shoot_arc_deg <= 360.0) {
            return bad(format!("shoot_arc_deg must be in (0, 360], got {}", self.shoot_arc_deg));
        }
        if self.max_steps < 1 {
            return bad("max_steps must be >= 1".into());
        }
        if self.n_guards + self.n_attackers > u8::MAX as usize {
            return bad("too many agents".into());
        }
        if self.spawn_band < 1 || self.spawn_band > self.height {
            return bad(format!("spawn_band must be in [1, height], got {}", self.spawn_band));
        }
        Ok(())
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && c.x < self.width && c.y < self.height
    }

    pub fn is_fort(&self, c: Cell) -> bool {
        self.fort_cells.contains(&c)
    }

    pub fn n_agents(&self) -> usize {
        self.n_guards + self.n_attackers
    }

    /// Geometric center of the field, in cell coordinates.
    pub fn center(&self) -> (f64, f64) {
        ((self.width - 1) as f64 / 2.0, (self.height - 1) as f64 / 2.0)
    }

    /// Euclidean distance from `c` to the nearest fort cell.
    pub fn dist_to_fort(&self, c: Cell) -> f64 {
        self.fort_cells
            .iter()
            .map(|f| c.dist(*f))
            .fold(f64::INFINITY, f64::min)
    }

    /// Cells 8-adjacent to the fort that are not fort cells themselves, in row-major order.
    pub fn guard_spawn_cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                let c = Cell::new(x, y);
                if self.is_fort(c) {
                    continue;
                }
                let adjacent = self
                    .fort_cells
                    .iter()
                    .any(|f| (f.x - x).abs() <= 1 && (f.y - y).abs() <= 1);
                if adjacent {
                    out.push(c);
                }
            }
        }
        out
    }

    /// Cells in the bottom `spawn_band` rows, excluding fort cells.
    pub fn attacker_spawn_cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for y in 0..self.spawn_band {
            for x in 0..self.width {
                let c = Cell::new(x, y);
                if !self.is_fort(c) {
                    out.push(c);
                }
            }
        }
        out
    }

    /// Parse a `key = value` document. Unknown keys are rejected, `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, EnvError> {
        let kv = parse_key_values(text).map_err(EnvError::Config)?;
        let mut cfg = GridConfig::default();
        // size first so the default fort follows it
        if let Some(v) = kv.get("width") {
            cfg.width = parse_num(v, "width")?;
        }
        if let Some(v) = kv.get("height") {
            cfg.height = parse_num(v, "height")?;
        }
        let sized = GridConfig::with_size(cfg.width, cfg.height);
        cfg.fort_cells = sized.fort_cells;
        for (k, v) in &kv {
            match k.as_str() {
                "width" | "height" => {}
                "fort" | "fort_cells" => {
                    cfg.fort_cells = parse_cells(v)?;
                }
                "shoot_range" => cfg.shoot_range = parse_num(v, k)?,
                "shoot_arc_deg" => cfg.shoot_arc_deg = parse_num(v, k)?,
                "max_steps" => cfg.max_steps = parse_num(v, k)?,
                "n_guards" => cfg.n_guards = parse_num(v, k)?,
                "n_attackers" => cfg.n_attackers = parse_num(v, k)?,
                "adhoc_guard" => cfg.adhoc_guard = parse_bool(v, k)?,
                "spawn_band" => cfg.spawn_band = parse_num(v, k)?,
                other => return Err(EnvError::Config(format!("unknown grid key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EnvError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Render as a `key = value` document accepted by [`GridConfig::parse`].
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let fort: Vec<String> = self.fort_cells.iter().map(|c| format!("{}:{}", c.x, c.y)).collect();
        let _ = writeln!(s, "width = {}", self.width);
        let _ = writeln!(s, "height = {}", self.height);
        let _ = writeln!(s, "fort = {}", fort.join(","));
        let _ = writeln!(s, "shoot_range = {}", self.shoot_range);
        let _ = writeln!(s, "shoot_arc_deg = {}", self.shoot_arc_deg);
        let _ = writeln!(s, "max_steps = {}", self.max_steps);
        let _ = writeln!(s, "n_guards = {}", self.n_guards);
        let _ = writeln!(s, "n_attackers = {}", self.n_attackers);
        let _ = writeln!(s, "adhoc_guard = {}", self.adhoc_guard);
        let _ = writeln!(s, "spawn_band = {}", self.spawn_band);
        s
    }
}

/// Shared `key = value` reader used by every config file in the crate.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", lineno + 1))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(format!("line {}: empty key", lineno + 1));
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(format!("line {}: duplicate key `{k}`", lineno + 1));
        }
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(v: &str, key: &str) -> Result<T, EnvError> {
    v.parse()
        .map_err(|_| EnvError::Config(format!("bad value `{v}` for `{key}`")))
}

fn parse_bool(v: &str, key: &str) -> Result<bool, EnvError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(EnvError::Config(format!("bad boolean `{v}` for `{key}`"))),
    }
}

fn parse_cells(v: &str) -> Result<Vec<Cell>, EnvError> {
    v.split(',')
        .map(|p| {
            let (x, y) = p
                .trim()
                .split_once(':')
                .ok_or_else(|| EnvError::Config(format!("bad cell `{p}`, expected x:y")))?;
            Ok(Cell::new(parse_num(x.trim(), "fort")?, parse_num(y.trim(), "fort")?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_fort_is_centered_on_top_edge() {
        let c = GridConfig::default();
        assert_eq!(c.fort_cells, vec![Cell::new(8, 19), Cell::new(9, 19), Cell::new(10, 19)]);
        c.validate().unwrap();
    }

    #[test]
    fn parse_round_trips() {
        let mut c = GridConfig::with_size(9, 7);
        c.shoot_range = 3.0;
        c.adhoc_guard = false;
        let back = GridConfig::parse(&c.to_key_values()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(GridConfig::parse("width = 4").is_err());
        assert!(GridConfig::parse("shoot_arc_deg = 0").is_err());
        assert!(GridConfig::parse("shoot_range = 0.5").is_err());
        assert!(GridConfig::parse("fort = 30:30").is_err());
        assert!(GridConfig::parse("colour = red").is_err());
        assert!(GridConfig::parse("max_steps = 0").is_err());
    }

    #[test]
    fn spawn_cells() {
        let c = GridConfig::default();
        assert_eq!(c.guard_spawn_cells().len(), 7);
        assert_eq!(c.attacker_spawn_cells().len(), 40);
    }
}
