//! Macro-state partitions.

use crate::error::{RateError, Result};
use crate::geometry::{Lattice, Point};

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    /// Equal intervals of `[lo, hi]`; boundary points go to the right cell.
    Uniform { lo: f64, hi: f64 },
    /// Equal stripes along `u = x cos(theta) + y sin(theta)` spanning the box.
    Slanted { lo: [f64; 2], hi: [f64; 2], theta_deg: f64 },
    /// Committor level sets of width `epsilon`, stored per lattice site.
    LevelSets { epsilon: f64 },
    /// Arbitrary per-site assignment.
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellPartition {
    geometry: Geometry,
    n_cells: usize,
    /// Per-site assignment for site-based geometries.
    sites: Option<(Lattice, Vec<usize>)>,
}

impl CellPartition {
    pub fn uniform_1d(lo: f64, hi: f64, n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(RateError::invalid("a 1D partition needs at least two cells"));
        }
        if !(hi > lo) {
            return Err(RateError::invalid(format!("empty domain [{lo}, {hi}]")));
        }
        Ok(CellPartition {
            geometry: Geometry::Uniform { lo, hi },
            n_cells,
            sites: None,
        })
    }

    pub fn slanted_2d(lo: [f64; 2], hi: [f64; 2], n_cells: usize, theta_deg: f64) -> Result<Self> {
        if !(0.0..90.0).contains(&theta_deg) {
            return Err(RateError::invalid(format!(
                "slant angle {theta_deg} outside [0, 90): at 90 degrees the boundaries run parallel to the \
                 reaction coordinate and every cell straddles both basins, so lumping destroys the slow mode"
            )));
        }
        if n_cells < 1 || !(hi[0] > lo[0] && hi[1] > lo[1]) {
            return Err(RateError::invalid(
                "slanted partition needs a non-empty box and at least one cell",
            ));
        }
        Ok(CellPartition {
            geometry: Geometry::Slanted { lo, hi, theta_deg },
            n_cells,
            sites: None,
        })
    }

    /// Partition given by a cell index per lattice site. Indices must cover
    /// `0..n` with no gaps.
    pub fn from_sites(lattice: &Lattice, cells: Vec<usize>) -> Result<Self> {
        Self::site_based(lattice, cells, Geometry::Explicit)
    }

    fn site_based(lattice: &Lattice, cells: Vec<usize>, geometry: Geometry) -> Result<Self> {
        if cells.len() != lattice.len() {
            return Err(RateError::invalid(
                "cell assignment length differs from the lattice size",
            ));
        }
        let n_cells = cells.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; n_cells];
        cells.iter().for_each(|&c| seen[c] = true);
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(RateError::invalid(format!("cell {c} has no sites")));
        }
        Ok(CellPartition {
            geometry,
            n_cells,
            sites: Some((lattice.clone(), cells)),
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn assign(&self, p: Point) -> usize {
        let n = self.n_cells;
        let index = |t: f64| -> usize {
            if t <= 0.0 || t.is_nan() {
                0
            } else {
                (t as usize).min(n - 1)
            }
        };
        match &self.geometry {
            Geometry::Uniform { lo, hi } => index((p.x - lo) * n as f64 / (hi - lo)),
            Geometry::Slanted { lo, hi, theta_deg } => {
                let (s, c) = theta_deg.to_radians().sin_cos();
                let corners = [(lo[0], lo[1]), (lo[0], hi[1]), (hi[0], lo[1]), (hi[0], hi[1])];
                let us = corners.map(|(x, y)| x * c + y * s);
                let umin = us.iter().copied().fold(f64::INFINITY, f64::min);
                let umax = us.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                index((p.x * c + p.y * s - umin) * n as f64 / (umax - umin))
            }
            Geometry::LevelSets { .. } | Geometry::Explicit => {
                let (lattice, cells) = self.sites.as_ref().expect("site-based partition stores its sites");
                cells[lattice.nearest(p)]
            }
        }
    }

    /// Cell of every lattice site; fails if some cell receives no site.
    pub fn site_map(&self, lattice: &Lattice) -> Result<SiteMap> {
        let cells: Vec<usize> = match &self.sites {
            Some((own, cells)) if own == lattice => cells.clone(),
            _ => (0..lattice.len()).map(|s| self.assign(lattice.point(s))).collect(),
        };
        SiteMap::new(cells, self.n_cells)
    }
}

/// Resolved cell membership of fine states.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteMap {
    cells: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl SiteMap {
    pub fn new(cells: Vec<usize>, n_cells: usize) -> Result<Self> {
        let mut members = vec![Vec::new(); n_cells];
        for (s, &c) in cells.iter().enumerate() {
            if c >= n_cells {
                return Err(RateError::invalid(format!(
                    "site {s} assigned to cell {c} of {n_cells}"
                )));
            }
            members[c].push(s);
        }
        if let Some(c) = members.iter().position(|m| m.is_empty()) {
            return Err(RateError::invalid(format!("cell {c} contains no fine states")));
        }
        Ok(SiteMap { cells, members })
    }

    pub fn identity(n: usize) -> Self {
        SiteMap {
            cells: (0..n).collect(),
            members: (0..n).map(|i| vec![i]).collect(),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.members.len()
    }

    pub fn n_sites(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, site: usize) -> usize {
        self.cells[site]
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn members(&self, cell: usize) -> &[usize] {
        &self.members[cell]
    }
}

/// Level-set cells of a committor: cell `i` holds states with
/// `i eps <= pi < (i + 1) eps`. Empty levels are dropped and the remaining
/// indices compacted in increasing committor order.
pub fn optimal_cells(lattice: &Lattice, committor: &[f64], epsilon: f64) -> Result<CellPartition> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(RateError::invalid(format!("level width {epsilon} outside (0, 1]")));
    }
    if committor.len() != lattice.len() {
        return Err(RateError::invalid("committor length differs from the lattice size"));
    }
    if let Some(v) = committor.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(RateError::invalid(format!("committor value {v} outside [0, 1]")));
    }
    // A relative guard keeps values such as 0.3 / 0.1 = 2.9999999999999996 on
    // the level they represent.
    let raw: Vec<usize> = committor
        .iter()
        .map(|&p| (p / epsilon + 1e-9).floor() as usize)
        .collect();
    let top = raw.iter().copied().max().unwrap_or(0);
    let mut remap = vec![usize::MAX; top + 1];
    let mut next = 0;
    let mut used = vec![false; top + 1];
    raw.iter().for_each(|&r| used[r] = true);
    for (r, u) in used.iter().enumerate() {
        if *u {
            remap[r] = next;
            next += 1;
        }
    }
    let cells = raw.iter().map(|&r| remap[r]).collect();
    CellPartition::site_based(lattice, cells, Geometry::LevelSets { epsilon })
}
