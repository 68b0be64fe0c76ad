//! Symmetric binary adjacency with an empty diagonal.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Adjacency {
    p: usize,
    bits: Vec<bool>,
}

impl Adjacency {
    pub fn empty(p: usize) -> Self {
        Self { p, bits: vec![false; p * p] }
    }

    pub fn complete(p: usize) -> Self {
        let mut a = Self::empty(p);
        for (j, k) in upper_pairs(p) {
            a.set(j, k, true);
        }
        a
    }

    pub fn from_edges(p: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut a = Self::empty(p);
        for &(j, k) in edges {
            if j >= p || k >= p || j == k {
                return Err(Error::invalid(format!("invalid edge ({j}, {k}) for {p} nodes")));
            }
            a.set(j, k, true);
        }
        Ok(a)
    }

    /// Nonzero off-diagonal entries of a (symmetric) matrix become edges.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let p = m.nrows();
        if m.ncols() != p {
            return Err(Error::invalid("adjacency matrix must be square"));
        }
        let mut a = Self::empty(p);
        for (j, k) in upper_pairs(p) {
            if m[(j, k)] != m[(k, j)] {
                return Err(Error::invalid(format!("adjacency matrix is not symmetric at ({j}, {k})")));
            }
            a.set(j, k, m[(j, k)] != 0.0);
        }
        Ok(a)
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p, self.p, |j, k| if self.get(j, k) { 1.0 } else { 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> bool {
        self.bits[j * self.p + k]
    }

    #[inline]
    pub fn set(&mut self, j: usize, k: usize, value: bool) {
        if j == k {
            return;
        }
        self.bits[j * self.p + k] = value;
        self.bits[k * self.p + j] = value;
    }

    pub fn edge_count(&self) -> usize {
        upper_pairs(self.p).filter(|&(j, k)| self.get(j, k)).count()
    }

    pub fn degree(&self, j: usize) -> usize {
        (0..self.p).filter(|&k| self.get(j, k)).count()
    }

    pub fn neighbors(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.p).filter(move |&k| self.get(j, k))
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        upper_pairs(self.p).filter(|&(j, k)| self.get(j, k)).collect()
    }

    pub fn complement(&self) -> Self {
        let mut a = Self::empty(self.p);
        for (j, k) in upper_pairs(self.p) {
            a.set(j, k, !self.get(j, k));
        }
        a
    }

    /// Relabel nodes: node `j` of `self` becomes node `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut a = Self::empty(self.p);
        for (j, k) in self.edges() {
            a.set(perm[j], perm[k], true);
        }
        a
    }

    /// Upper triangle, row by row, packed 8 pairs per byte (LSB first).
    pub fn pack(&self) -> Vec<u8> {
        let pairs = num_pairs(self.p);
        let mut out = vec![0u8; pairs.div_ceil(8)];
        for (idx, (j, k)) in upper_pairs(self.p).enumerate() {
            if self.get(j, k) {
                out[idx / 8] |= 1 << (idx % 8);
            }
        }
        out
    }

    pub fn unpack(p: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != num_pairs(p).div_ceil(8) {
            return Err(Error::invalid("packed adjacency has the wrong length"));
        }
        let mut a = Self::empty(p);
        for (idx, (j, k)) in upper_pairs(p).enumerate() {
            a.set(j, k, bytes[idx / 8] >> (idx % 8) & 1 == 1);
        }
        Ok(a)
    }
}

pub fn num_pairs(p: usize) -> usize {
    p * p.saturating_sub(1) / 2
}

/// `(j, k)` with `j < k`, row by row.
pub fn upper_pairs(p: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..p).flat_map(move |j| (j + 1..p).map(move |k| (j, k)))
}
