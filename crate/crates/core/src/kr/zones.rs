//! Square zones over the grid and the per-tick choice of which zones are
//! reasoned about at cell level.

use serde::{Deserialize, Serialize};

use crate::env::{Cell, GridConfig};

pub const DEFAULT_ZONE_SIZE: i32 = 4;

pub type ZoneId = usize;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneGrid {
    pub size: i32,
    pub width: i32,
    pub height: i32,
    pub nx: i32,
    pub ny: i32,
}

impl ZoneGrid {
    pub fn new(grid: &GridConfig, size: i32) -> Self {
        let size = size.max(1);
        ZoneGrid {
            size,
            width: grid.width,
            height: grid.height,
            nx: (grid.width + size - 1) / size,
            ny: (grid.height + size - 1) / size,
        }
    }

    pub fn count(&self) -> usize {
        (self.nx * self.ny) as usize
    }

    pub fn zone_of(&self, c: Cell) -> ZoneId {
        ((c.y / self.size) * self.nx + c.x / self.size) as ZoneId
    }

    /// Column and row of a zone.
    pub fn coords(&self, z: ZoneId) -> (i32, i32) {
        (z as i32 % self.nx, z as i32 / self.nx)
    }

    pub fn cells(&self, z: ZoneId) -> impl Iterator<Item = Cell> + '_ {
        let (zx, zy) = self.coords(z);
        let (x0, y0) = (zx * self.size, zy * self.size);
        let (x1, y1) = ((x0 + self.size).min(self.width), (y0 + self.size).min(self.height));
        (y0..y1).flat_map(move |y| (x0..x1).map(move |x| Cell::new(x, y)))
    }

    /// Edge-sharing neighbours in N, E, S, W order.
    pub fn neighbours(&self, z: ZoneId) -> Vec<ZoneId> {
        let (zx, zy) = self.coords(z);
        [(0, 1), (1, 0), (0, -1), (-1, 0)]
            .iter()
            .map(|(dx, dy)| (zx + dx, zy + dy))
            .filter(|&(x, y)| x >= 0 && y >= 0 && x < self.nx && y < self.ny)
            .map(|(x, y)| (y * self.nx + x) as ZoneId)
            .collect()
    }

    pub fn fort_zones(&self, grid: &GridConfig) -> Vec<ZoneId> {
        let mut z: Vec<ZoneId> = grid.fort_cells.iter().map(|&c| self.zone_of(c)).collect();
        z.sort_unstable();
        z.dedup();
        z
    }

    /// Zones next to the fort that guards should cover: neighbours of fort
    /// zones that hold no fort cell themselves.
    pub fn guard_zones(&self, grid: &GridConfig) -> Vec<ZoneId> {
        let fort = self.fort_zones(grid);
        let mut out: Vec<ZoneId> = fort
            .iter()
            .flat_map(|&f| self.neighbours(f))
            .filter(|z| !fort.contains(z))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Distance from a cell to the nearest cell of a zone, in moves.
    pub fn moves_to(&self, c: Cell, z: ZoneId) -> i32 {
        let (zx, zy) = self.coords(z);
        let (x0, y0) = (zx * self.size, zy * self.size);
        let (x1, y1) = ((x0 + self.size).min(self.width) - 1, (y0 + self.size).min(self.height) - 1);
        let dx = if c.x < x0 { x0 - c.x } else if c.x > x1 { c.x - x1 } else { 0 };
        let dy = if c.y < y0 { y0 - c.y } else if c.y > y1 { c.y - y1 } else { 0 };
        dx + dy
    }
}

/// Which zones are represented at cell level.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Granularity {
    pub fine: Vec<bool>,
}

impl Granularity {
    pub fn all_fine(zones: &ZoneGrid) -> Self {
        Granularity { fine: vec![true; zones.count()] }
    }

    pub fn all_coarse(zones: &ZoneGrid) -> Self {
        Granularity { fine: vec![false; zones.count()] }
    }

    pub fn fine_zones(&self) -> Vec<ZoneId> {
        (0..self.fine.len()).filter(|&z| self.fine[z]).collect()
    }

    pub fn is_fine_cell(&self, zones: &ZoneGrid, c: Cell) -> bool {
        self.fine.get(zones.zone_of(c)).copied().unwrap_or(false)
    }
}

/// Fine zones for one decision: the ad hoc agent's zone and its neighbours,
/// the fort zones, and every zone holding a current or predicted attacker.
pub fn compute_relevance(
    zones: &ZoneGrid,
    grid: &GridConfig,
    adhoc: Cell,
    attackers: impl IntoIterator<Item = Cell>,
) -> Granularity {
    let mut g = Granularity::all_coarse(zones);
    let own = zones.zone_of(adhoc);
    g.fine[own] = true;
    for n in zones.neighbours(own) {
        g.fine[n] = true;
    }
    for z in zones.fort_zones(grid) {
        g.fine[z] = true;
    }
    for c in attackers {
        if c.x >= 0 && c.y >= 0 && c.x < zones.width && c.y < zones.height {
            g.fine[zones.zone_of(c)] = true;
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_25_zones_and_three_guard_zones() {
        let cfg = GridConfig::default();
        let z = ZoneGrid::new(&cfg, DEFAULT_ZONE_SIZE);
        assert_eq!(z.count(), 25);
        assert_eq!(z.fort_zones(&cfg), vec![22]);
        assert_eq!(z.guard_zones(&cfg), vec![17, 21, 23]);
        assert_eq!(z.cells(0).count(), 16);
        assert_eq!(z.moves_to(Cell::new(0, 0), 24), 16 + 16);
    }

    #[test]
    fn relevance_covers_agent_fort_and_attackers() {
        let cfg = GridConfig::default();
        let z = ZoneGrid::new(&cfg, DEFAULT_ZONE_SIZE);
        let g = compute_relevance(&z, &cfg, Cell::new(9, 10), [Cell::new(0, 0), Cell::new(19, 1)]);
        let mut want = vec![12, 17, 13, 7, 11, 22, 0, 4];
        want.sort_unstable();
        assert_eq!(g.fine_zones(), want);
        assert!(g.is_fine_cell(&z, Cell::new(3, 3)));
        assert!(!g.is_fine_cell(&z, Cell::new(5, 3)));
    }
}
