//! Line-based checkpoints of an ensemble. Floats are stored as bit patterns
//! so a resumed run continues bit-identically.

use super::ensemble::{ColorSpec, Ensemble, RtsParams, Walker};
use crate::dynamics::StateCodec;
use crate::error::{RateError, Result};
use crate::msm::SiteMap;
use crate::rng::{RngState, RngStream};
use std::io::{BufRead, Write};

const MAGIC: &str = "ratekit-rts-checkpoint 1";

fn bits(x: f64) -> String {
    format!("{:016x}", x.to_bits())
}

fn unbits(s: &str) -> Result<f64> {
    f64::decode(s)
}

fn parse_u64(s: &str, radix: u32) -> Result<u64> {
    u64::from_str_radix(s, radix).map_err(|e| RateError::Parse(format!("bad integer '{s}': {e}")))
}

pub fn write_checkpoint<S: StateCodec + Copy + Send + Sync, W: Write>(ens: &Ensemble<S>, mut w: W) -> Result<()> {
    let (_, colors, params, step, initial_mass) = ens.raw_parts();
    writeln!(w, "{MAGIC}")?;
    writeln!(
        w,
        "seed {} step {step} target {} cap {} colors {} mass {} walkers {}",
        params.seed,
        params.target,
        params.hard_cap,
        colors.n_colors(),
        bits(initial_mass),
        ens.walkers.len()
    )?;
    for wk in &ens.walkers {
        let st = wk.rng.state();
        let spare = st.spare.map_or_else(|| "-".to_string(), bits);
        writeln!(
            w,
            "{} {} {} {:016x} {} {}",
            wk.state.encode(),
            bits(wk.weight),
            wk.color,
            st.seed,
            st.counter,
            spare
        )?;
    }
    Ok(())
}

/// Restore an ensemble; the partition and colors are not stored and must
/// match the run that wrote the checkpoint.
pub fn read_checkpoint<S: StateCodec + Copy + Send + Sync, R: BufRead>(
    r: R,
    map: SiteMap,
    colors: ColorSpec,
) -> Result<Ensemble<S>> {
    let mut lines = r.lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| RateError::Parse("checkpoint truncated".into()))?
            .map_err(RateError::from)
    };
    if next()?.trim() != MAGIC {
        return Err(RateError::Parse(
            "not a ratekit checkpoint (or unsupported version)".into(),
        ));
    }
    let header = next()?;
    let f: Vec<&str> = header.split_whitespace().collect();
    let keys = ["seed", "step", "target", "cap", "colors", "mass", "walkers"];
    if f.len() != 14 || (0..7).any(|i| f[2 * i] != keys[i]) {
        return Err(RateError::Parse(format!("bad checkpoint header: {header}")));
    }
    let params = RtsParams {
        seed: parse_u64(f[1], 10)?,
        target: parse_u64(f[5], 10)? as usize,
        hard_cap: parse_u64(f[7], 10)? as usize,
    };
    let step = parse_u64(f[3], 10)?;
    if parse_u64(f[9], 10)? as usize != colors.n_colors() {
        return Err(RateError::Parse(
            "checkpoint color count differs from the configuration".into(),
        ));
    }
    let initial_mass = unbits(f[11])?;
    let count = parse_u64(f[13], 10)? as usize;
    let mut walkers = Vec::with_capacity(count);
    for k in 0..count {
        let line = next()?;
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 6 {
            return Err(RateError::Parse(format!("walker line {}: expected 6 fields", k + 1)));
        }
        let color = parse_u64(t[2], 10)? as usize;
        if color >= colors.n_colors() {
            return Err(RateError::Parse(format!(
                "walker line {}: color {color} out of range",
                k + 1
            )));
        }
        let spare = if t[5] == "-" { None } else { Some(unbits(t[5])?) };
        walkers.push(Walker {
            state: S::decode(t[0])?,
            weight: unbits(t[1])?,
            color,
            rng: RngStream::from_state(RngState {
                seed: parse_u64(t[3], 16)?,
                counter: parse_u64(t[4], 10)?,
                spare,
            }),
        });
    }
    Ok(Ensemble::from_raw_parts(
        walkers,
        map,
        colors,
        params,
        step,
        initial_mass,
    ))
}
