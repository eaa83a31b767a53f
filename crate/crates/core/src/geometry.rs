//! Points, regular lattices and basin regions.

use crate::error::{RateError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn on_line(x: f64) -> Self {
        Point { x, y: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Regular grid of sites in one or two dimensions.
///
/// Site `(ix, iy)` sits at `origin + spacing * (ix, iy)` and has flat index
/// `ix * ny + iy`, so lattice neighbours are at most `ny` apart in index.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    origin: [f64; 2],
    spacing: f64,
    shape: [usize; 2],
    dims: usize,
}

impl Lattice {
    pub fn line(origin: f64, spacing: f64, n: usize) -> Result<Self> {
        Self::build([origin, 0.0], spacing, [n, 1], 1)
    }

    pub fn plane(origin: [f64; 2], spacing: f64, shape: [usize; 2]) -> Result<Self> {
        Self::build(origin, spacing, shape, 2)
    }

    /// Bins of width close to `dx` tiling `[lo, hi]`; sites are bin centres.
    pub fn bins(lo: f64, hi: f64, dx: f64) -> Result<Self> {
        check_interval(lo, hi, dx)?;
        let n = ((hi - lo) / dx).round().max(1.0) as usize;
        let h = (hi - lo) / n as f64;
        Self::line(lo + 0.5 * h, h, n)
    }

    /// Sites `lo, lo + dx, ..., hi` in every dimension (endpoints included).
    pub fn inclusive(lo: f64, hi: f64, dx: f64, dims: usize) -> Result<Self> {
        check_interval(lo, hi, dx)?;
        let n = ((hi - lo) / dx).round() as usize + 1;
        let h = (hi - lo) / (n - 1) as f64;
        match dims {
            1 => Self::line(lo, h, n),
            2 => Self::plane([lo, lo], h, [n, n]),
            _ => Err(RateError::invalid(format!("unsupported dimension {dims}"))),
        }
    }

    fn build(origin: [f64; 2], spacing: f64, shape: [usize; 2], dims: usize) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(RateError::invalid(format!(
                "lattice spacing must be positive, got {spacing}"
            )));
        }
        if shape[0] == 0 || shape[1] == 0 {
            return Err(RateError::invalid("lattice has no sites"));
        }
        Ok(Lattice {
            origin,
            spacing,
            shape,
            dims,
        })
    }

    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn coords(&self, site: usize) -> [usize; 2] {
        [site / self.shape[1], site % self.shape[1]]
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        ix * self.shape[1] + iy
    }

    pub fn point(&self, site: usize) -> Point {
        let [ix, iy] = self.coords(site);
        Point::new(
            self.origin[0] + self.spacing * ix as f64,
            self.origin[1] + self.spacing * iy as f64,
        )
    }

    /// Site whose position is closest to `p` (clamped to the lattice).
    pub fn nearest(&self, p: Point) -> usize {
        let ix = nearest_axis(p.x, self.origin[0], self.spacing, self.shape[0]);
        let iy = if self.dims == 1 {
            0
        } else {
            nearest_axis(p.y, self.origin[1], self.spacing, self.shape[1])
        };
        self.index(ix, iy)
    }

    /// Up to `2 * dims` lattice neighbours, in the order -x, +x, -y, +y.
    /// Missing neighbours (outside the lattice) are reported as `None`.
    pub fn neighbors(&self, site: usize) -> [Option<usize>; 4] {
        let [ix, iy] = self.coords(site);
        let mut out = [None; 4];
        if ix > 0 {
            out[0] = Some(self.index(ix - 1, iy));
        }
        if ix + 1 < self.shape[0] {
            out[1] = Some(self.index(ix + 1, iy));
        }
        if self.dims == 2 {
            if iy > 0 {
                out[2] = Some(self.index(ix, iy - 1));
            }
            if iy + 1 < self.shape[1] {
                out[3] = Some(self.index(ix, iy + 1));
            }
        }
        out
    }

    /// Edges `[a, b)` of the bin around a site on a one-dimensional lattice.
    pub fn bin_edges(&self, site: usize) -> (f64, f64) {
        let c = self.point(site).x;
        (c - 0.5 * self.spacing, c + 0.5 * self.spacing)
    }
}

fn check_interval(lo: f64, hi: f64, dx: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(RateError::invalid(format!("empty domain [{lo}, {hi}]")));
    }
    if !(dx > 0.0 && dx.is_finite()) {
        return Err(RateError::invalid(format!("grid spacing must be positive, got {dx}")));
    }
    Ok(())
}

fn nearest_axis(v: f64, origin: f64, h: f64, n: usize) -> usize {
    let k = ((v - origin) / h).round();
    if k <= 0.0 || k.is_nan() {
        0
    } else {
        (k as usize).min(n - 1)
    }
}

/// A basin or coarse region of configuration space.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    /// Closed interval `[lo, hi]` on the x axis.
    Interval { lo: f64, hi: f64 },
    /// Closed disc.
    Disc { center: Point, radius: f64 },
    /// Half space `x < threshold`.
    Below { threshold: f64 },
    /// Half space `x >= threshold`.
    AtOrAbove { threshold: f64 },
}

impl Region {
    pub fn contains(&self, p: Point) -> bool {
        match *self {
            Region::Interval { lo, hi } => p.x >= lo && p.x <= hi,
            Region::Disc { center, radius } => {
                let (dx, dy) = (p.x - center.x, p.y - center.y);
                dx * dx + dy * dy <= radius * radius
            }
            Region::Below { threshold } => p.x < threshold,
            Region::AtOrAbove { threshold } => p.x >= threshold,
        }
    }

    pub fn sites(&self, lattice: &Lattice) -> Vec<usize> {
        (0..lattice.len())
            .filter(|&s| self.contains(lattice.point(s)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_cover_domain() {
        let l = Lattice::bins(-10.0, 10.0, 0.03).unwrap();
        assert_eq!(l.len(), 667);
        let (a, _) = l.bin_edges(0);
        let (_, b) = l.bin_edges(l.len() - 1);
        assert!((a + 10.0).abs() < 1e-12 && (b - 10.0).abs() < 1e-12);
    }

    #[test]
    fn inclusive_plane_indexing() {
        let l = Lattice::inclusive(-1.0, 1.0, 0.01, 2).unwrap();
        assert_eq!(l.shape(), [201, 201]);
        let s = l.index(200, 100);
        let p = l.point(s);
        assert!((p.x - 1.0).abs() < 1e-12 && p.y.abs() < 1e-12);
        assert_eq!(l.nearest(p), s);
        assert_eq!(l.neighbors(s)[1], None);
        assert_eq!(l.neighbors(s)[0], Some(l.index(199, 100)));
    }

    #[test]
    fn region_ties() {
        let abar = Region::Below { threshold: 0.0 };
        let bbar = Region::AtOrAbove { threshold: 0.0 };
        assert!(!abar.contains(Point::on_line(0.0)));
        assert!(bbar.contains(Point::on_line(0.0)));
    }
}
