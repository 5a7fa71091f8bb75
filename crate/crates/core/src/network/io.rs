//! Ensemble persistence: CSV rows `trial,neuron,time,u` and a compact binary
//! layout with a 16-byte header (`NSIM`, version, n, T as little-endian u32)
//! followed by `(2n+1)(T+1)` little-endian f64 values, neuron-major.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::network::simulate::TrajectoryEnsemble;

pub const BINARY_MAGIC: &[u8; 4] = b"NSIM";
pub const BINARY_VERSION: u32 = 1;

pub fn write_csv<W: Write>(mut out: W, ensembles: &[(u64, &TrajectoryEnsemble)]) -> Result<()> {
    writeln!(out, "trial,neuron,time,u")?;
    for &(trial, ens) in ensembles {
        let n = ens.n() as i64;
        for pos in 0..ens.size() {
            for (t, u) in ens.trajectory(pos).iter().enumerate() {
                writeln!(out, "{trial},{},{t},{u}", pos as i64 - n)?;
            }
        }
    }
    Ok(())
}

/// Reads every trial back, in order of first appearance.
pub fn read_csv<R: BufRead>(input: R) -> Result<Vec<(u64, TrajectoryEnsemble)>> {
    let mut rows: Vec<(u64, Vec<(i64, usize, f64)>)> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != "trial,neuron,time,u" {
                return Err(Error::Format(format!("unexpected CSV header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Format(format!("line {}: expected 4 fields", i + 1)));
        }
        let parse_err = |what: &str| Error::Format(format!("line {}: bad {what}", i + 1));
        let trial: u64 = fields[0].parse().map_err(|_| parse_err("trial"))?;
        let neuron: i64 = fields[1].parse().map_err(|_| parse_err("neuron"))?;
        let time: usize = fields[2].parse().map_err(|_| parse_err("time"))?;
        let u: f64 = fields[3].parse().map_err(|_| parse_err("u"))?;
        match rows.iter_mut().find(|(t, _)| *t == trial) {
            Some((_, v)) => v.push((neuron, time, u)),
            None => rows.push((trial, vec![(neuron, time, u)])),
        }
    }
    rows.into_iter()
        .map(|(trial, entries)| {
            let n = entries.iter().map(|e| e.0.unsigned_abs()).max().unwrap_or(0) as usize;
            let horizon = entries.iter().map(|e| e.1).max().unwrap_or(0);
            let size = 2 * n + 1;
            if entries.len() != size * (horizon + 1) {
                return Err(Error::Format(format!("trial {trial} is incomplete")));
            }
            let mut u = vec![f64::NAN; size * (horizon + 1)];
            for (neuron, t, val) in entries {
                u[(neuron + n as i64) as usize * (horizon + 1) + t] = val;
            }
            if u.iter().any(|x| x.is_nan()) {
                return Err(Error::Format(format!("trial {trial} has duplicate rows")));
            }
            Ok((trial, TrajectoryEnsemble::from_potentials(n, horizon, trial, u)?))
        })
        .collect()
}

pub fn write_binary<W: Write>(mut out: W, ens: &TrajectoryEnsemble) -> Result<()> {
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&BINARY_VERSION.to_le_bytes())?;
    out.write_all(&(ens.n() as u32).to_le_bytes())?;
    out.write_all(&(ens.horizon() as u32).to_le_bytes())?;
    for u in ens.potentials() {
        out.write_all(&u.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut input: R) -> Result<TrajectoryEnsemble> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    if &header[..4] != BINARY_MAGIC {
        return Err(Error::Format("missing NSIM magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
    if word(4) != BINARY_VERSION {
        return Err(Error::Format(format!("unsupported binary version {}", word(4))));
    }
    let n = word(8) as usize;
    let horizon = word(12) as usize;
    let count = (2 * n + 1) * (horizon + 1);
    let mut bytes = vec![0u8; count * 8];
    input.read_exact(&mut bytes)?;
    let u = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    TrajectoryEnsemble::from_potentials(n, horizon, 0, u)
}
