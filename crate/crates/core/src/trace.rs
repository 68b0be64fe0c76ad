//! Binary trace file.
//!
//! All integers and floats are little-endian. Layout, version 1:
//!
//! ```text
//! magic    8 bytes  "PBCGTRC\0"
//! version  u32
//! p        u32      number of taxa
//! chains   u32
//! per chain:
//!   seed     u64
//!   draws    u64
//!   per draw:
//!     sigma_sq f64   NaN unless the phylo variant
//!     v0_sq    f64
//!     gamma    f64   NaN unless the dist variant
//!     edges    ceil(p(p-1)/16) bytes, upper triangle row by row, LSB first
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{num_pairs, Adjacency};
use crate::sampler::ChainTrace;

pub const MAGIC: &[u8; 8] = b"PBCGTRC\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceDraw {
    pub sigma_sq: f64,
    pub v0_sq: f64,
    pub gamma: f64,
    pub edges: Adjacency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceChain {
    pub seed: u64,
    pub draws: Vec<TraceDraw>,
}

pub fn write_trace(path: &Path, p: usize, traces: &[ChainTrace]) -> Result<()> {
    let mut w = crate::io::create(path)?;
    let io_err = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io_err)?;
    for v in [VERSION, p as u32, traces.len() as u32] {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    let width = num_pairs(p).div_ceil(8);
    for t in traces {
        w.write_all(&t.seed.to_le_bytes()).map_err(io_err)?;
        w.write_all(&(t.retained as u64).to_le_bytes()).map_err(io_err)?;
        for d in 0..t.retained {
            let s = t.sigma_sq.get(d).copied().unwrap_or(f64::NAN);
            let g = t.gamma.get(d).copied().unwrap_or(f64::NAN);
            for v in [s, t.v0_sq[d], g] {
                w.write_all(&v.to_le_bytes()).map_err(io_err)?;
            }
            debug_assert_eq!(t.edges[d].len(), width);
            w.write_all(&t.edges[d]).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn read_trace(path: &Path) -> Result<(usize, Vec<TraceChain>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_trace(&bytes).map_err(|e| match e {
        Error::InvalidInput(m) => Error::invalid(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_trace(mut bytes: &[u8]) -> Result<(usize, Vec<TraceChain>)> {
    let truncated = |_| Error::invalid("trace file is truncated");
    let mut magic = [0u8; 8];
    bytes.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::invalid("not a trace file (bad magic)"));
    }
    let mut u32_buf = [0u8; 4];
    let mut next_u32 = |b: &mut &[u8]| -> Result<u32> {
        b.read_exact(&mut u32_buf).map_err(truncated)?;
        Ok(u32::from_le_bytes(u32_buf))
    };
    let version = next_u32(&mut bytes)?;
    if version != VERSION {
        return Err(Error::invalid(format!("unsupported trace version {version}")));
    }
    let p = next_u32(&mut bytes)? as usize;
    let chains = next_u32(&mut bytes)? as usize;
    let width = num_pairs(p).div_ceil(8);
    let mut b8 = [0u8; 8];
    let mut out = Vec::with_capacity(chains);
    for _ in 0..chains {
        bytes.read_exact(&mut b8).map_err(truncated)?;
        let seed = u64::from_le_bytes(b8);
        bytes.read_exact(&mut b8).map_err(truncated)?;
        let n = u64::from_le_bytes(b8) as usize;
        let mut draws = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let mut vals = [0.0; 3];
            for v in &mut vals {
                bytes.read_exact(&mut b8).map_err(truncated)?;
                *v = f64::from_le_bytes(b8);
            }
            let mut packed = vec![0u8; width];
            bytes.read_exact(&mut packed).map_err(truncated)?;
            draws.push(TraceDraw {
                sigma_sq: vals[0],
                v0_sq: vals[1],
                gamma: vals[2],
                edges: Adjacency::unpack(p, &packed)?,
            });
        }
        out.push(TraceChain { seed, draws });
    }
    if !bytes.is_empty() {
        return Err(Error::invalid("trailing bytes after trace"));
    }
    Ok((p, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn roundtrip() {
        let p = 5;
        let e1 = Adjacency::from_edges(p, &[(0, 1), (3, 4)]).unwrap();
        let e2 = Adjacency::complete(p);
        let trace = ChainTrace {
            seed: 77,
            retained: 2,
            edges: vec![e1.pack(), e2.pack()],
            sigma_sq: vec![1.5, 2.5],
            v0_sq: vec![0.01, 0.02],
            gamma: vec![],
            omega_tracked: vec![],
            omega_trace: vec![],
            edge_sum: DMatrix::zeros(p, p),
            omega_sum: DMatrix::zeros(p, p),
            position_sum: None,
            dist_acceptance: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        write_trace(&path, p, &[trace]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 8 + 12 + 16 + 2 * (24 + 2));
        let (p2, chains) = read_trace(&path).unwrap();
        assert_eq!(p2, p);
        assert_eq!(chains[0].seed, 77);
        assert_eq!(chains[0].draws[0].edges, e1);
        assert_eq!(chains[0].draws[1].edges, e2);
        assert_eq!(chains[0].draws[1].sigma_sq, 2.5);
        assert!(chains[0].draws[0].gamma.is_nan());
        assert!(parse_trace(&bytes[..bytes.len() - 1]).is_err());
        assert!(parse_trace(b"NOTATRACE").is_err());
    }
}
