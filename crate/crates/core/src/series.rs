//! Rate estimates indexed by lag or time, with CSV and `.dat` output.

use crate::error::{RateError, Result};
use crate::spectral::RateEstimate;
use std::io::{BufRead, Write};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    /// Lag (MSM, in steps) or simulated time (RTS).
    pub tau: f64,
    pub rate: RateEstimate,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RateSeries {
    pub points: Vec<RatePoint>,
}

const HEADER: [&str; 5] = ["tau", "rate_fwd", "rate_bwd", "stderr_fwd", "stderr_bwd"];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:e}"))
}

impl RateSeries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, tau: f64, rate: RateEstimate) {
        self.points.push(RatePoint { tau, rate });
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> Option<&RatePoint> {
        self.points.last()
    }

    fn rows(&self) -> impl Iterator<Item = [String; 5]> + '_ {
        self.points.iter().map(|p| {
            [
                format!("{}", p.tau),
                format!("{:e}", p.rate.forward),
                format!("{:e}", p.rate.backward),
                opt(p.rate.stderr_forward),
                opt(p.rate.stderr_backward),
            ]
        })
    }

    /// Comma separated with a header row; missing error bars are written as `nan`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", HEADER.join(","))?;
        for r in self.rows() {
            writeln!(w, "{}", r.join(","))?;
        }
        Ok(())
    }

    /// Whitespace separated columns for plotting tools, header as a `#` comment.
    pub fn write_dat<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# {}", HEADER.join(" "))?;
        for r in self.rows() {
            writeln!(w, "{}", r.join(" "))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut out = RateSeries::new();
        for (k, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if k == 0 {
                if line.split(',').map(str::trim).ne(HEADER) {
                    return Err(RateError::Parse(format!("unexpected rate series header: {line}")));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let f: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| RateError::Parse(format!("line {}: {e}", k + 1)))?;
            if f.len() != 5 {
                return Err(RateError::Parse(format!("line {}: expected 5 fields", k + 1)));
            }
            let some = |x: f64| (!x.is_nan()).then_some(x);
            out.push(
                f[0],
                RateEstimate {
                    forward: f[1],
                    backward: f[2],
                    stderr_forward: some(f[3]),
                    stderr_backward: some(f[4]),
                },
            );
        }
        Ok(out)
    }
}
