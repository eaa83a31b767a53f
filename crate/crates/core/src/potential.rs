//! Potential energy surfaces, including the three benchmark landscapes.

use crate::error::{RateError, Result};
use crate::geometry::Point;

pub trait Potential: Send + Sync {
    fn dim(&self) -> usize;
    fn energy(&self, p: Point) -> f64;

    /// Analytic gradient, if available. Otherwise a central difference is used.
    fn gradient(&self, p: Point) -> Point {
        let h = 1e-6;
        let gx = (self.energy(Point::new(p.x + h, p.y)) - self.energy(Point::new(p.x - h, p.y))) / (2.0 * h);
        let gy = if self.dim() > 1 {
            (self.energy(Point::new(p.x, p.y + h)) - self.energy(Point::new(p.x, p.y - h))) / (2.0 * h)
        } else {
            0.0
        };
        Point::new(gx, gy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    /// Tilted double well on [-10, 10].
    Bench1d,
    /// `exp(-x^2) + y^2` on [-1, 1]^2.
    Bench2d,
    /// Steep quartic double well on [0, 1].
    Fig1d,
    /// Zero potential in one dimension.
    Flat,
}

impl Benchmark {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "bench1d" => Ok(Benchmark::Bench1d),
            "bench2d" => Ok(Benchmark::Bench2d),
            "fig1d" => Ok(Benchmark::Fig1d),
            "flat" => Ok(Benchmark::Flat),
            _ => Err(RateError::invalid(format!(
                "unknown potential '{name}' (expected bench1d, bench2d, fig1d or flat)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Benchmark::Bench1d => "bench1d",
            Benchmark::Bench2d => "bench2d",
            Benchmark::Fig1d => "fig1d",
            Benchmark::Flat => "flat",
        }
    }
}

impl Potential for Benchmark {
    fn dim(&self) -> usize {
        match self {
            Benchmark::Bench2d => 2,
            _ => 1,
        }
    }

    fn energy(&self, p: Point) -> f64 {
        match self {
            Benchmark::Bench1d => {
                let x = p.x;
                let q = (x + 5.0) * (x - 5.0);
                q * q / 1000.0 + 3.0 * (-x * x / 10.0).exp() - x / 10.0
            }
            Benchmark::Bench2d => (-p.x * p.x).exp() + p.y * p.y,
            Benchmark::Fig1d => {
                let x = p.x;
                400.0 * (0.98 * (x - 0.2).powi(4) + (x - 0.8).powi(4) - 1.5 * (x - 0.5).powi(2))
            }
            Benchmark::Flat => 0.0,
        }
    }

    fn gradient(&self, p: Point) -> Point {
        match self {
            Benchmark::Bench1d => {
                let x = p.x;
                Point::on_line(4.0 * x * (x * x - 25.0) / 1000.0 - 0.6 * x * (-x * x / 10.0).exp() - 0.1)
            }
            Benchmark::Bench2d => Point::new(-2.0 * p.x * (-p.x * p.x).exp(), 2.0 * p.y),
            Benchmark::Fig1d => {
                let x = p.x;
                Point::on_line(400.0 * (3.92 * (x - 0.2).powi(3) + 4.0 * (x - 0.8).powi(3) - 3.0 * (x - 0.5)))
            }
            Benchmark::Flat => Point::default(),
        }
    }
}

/// Potential given by a closure.
pub struct FnPotential<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(Point) -> f64 + Send + Sync> FnPotential<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnPotential { dim, f }
    }
}

impl<F: Fn(Point) -> f64 + Send + Sync> Potential for FnPotential<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn energy(&self, p: Point) -> f64 {
        (self.f)(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bench1d_values() {
        let u = Benchmark::Bench1d;
        assert!((u.energy(Point::on_line(0.0)) - 3.625).abs() < 1e-12);
        assert!((u.energy(Point::on_line(5.0)) - (3.0 * (-2.5f64).exp() - 0.5)).abs() < 1e-12);
        assert!((u.gradient(Point::on_line(0.0)).x + 0.1).abs() < 1e-15);
    }

    #[test]
    fn bench2d_values() {
        let u = Benchmark::Bench2d;
        assert!((u.energy(Point::new(0.0, 0.0)) - 1.0).abs() < 1e-15);
        assert!((u.energy(Point::new(1.0, 1.0)) - ((-1.0f64).exp() + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn analytic_gradients_match_differences() {
        for b in [Benchmark::Bench1d, Benchmark::Bench2d, Benchmark::Fig1d] {
            for &(x, y) in &[(0.3, 0.2), (-0.7, 0.5), (0.9, -0.1)] {
                let p = Point::new(x, if b.dim() > 1 { y } else { 0.0 });
                let g = b.gradient(p);
                let f = FnPotential::new(b.dim(), |q| b.energy(q));
                let n = f.gradient(p);
                assert!((g.x - n.x).abs() < 1e-5 * (1.0 + g.x.abs()), "{b:?} {x}");
                assert!((g.y - n.y).abs() < 1e-5 * (1.0 + g.y.abs()), "{b:?} {y}");
            }
        }
    }
}
