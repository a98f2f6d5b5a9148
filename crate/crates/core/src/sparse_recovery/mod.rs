//! Greedy block-sparse recovery.
//!
//! [`bomp`] selects whole sections by correlation energy and re-fits every
//! selected section jointly by least squares. [`mbomp`] recovers blocks that
//! need not sit on a multiple of the block length by solving the problem
//! under each of the `L` cyclic column shifts, where some shift aligns any
//! given block. [`omp`] is the scalar special case of [`bomp`].

mod basis;
mod bomp;
mod ls;
mod mbomp;

pub(crate) use basis::Basis;
pub use bomp::{bomp, bomp_fast_residual, bomp_refine, bomp_with_beam, omp};
pub use ls::{ls_estimate, solve_least_squares, LsFit};
pub use mbomp::{aligned_candidates, mbomp, mbomp_with_beam, shift_columns, shift_vector};

use nalgebra::{DMatrixView, DVectorView};

use crate::error::{bail, Result};
use crate::C64;

/// A run of `len` consecutive positions starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Block {
    pub start: usize,
    pub len: usize,
}

impl Block {
    pub fn new(start: usize, len: usize) -> Self {
        Self { start, len }
    }

    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn overlaps(&self, other: &Block) -> bool {
        self.start < other.end() && other.start < self.end()
    }
}

/// Disjoint blocks inside a vector of `length` positions, sorted by start.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Support {
    blocks: Vec<Block>,
    length: usize,
}

impl Support {
    pub fn new(mut blocks: Vec<Block>, length: usize) -> Result<Self> {
        blocks.sort();
        if blocks.iter().any(|b| b.len == 0 || b.end() > length) {
            bail!(
                InvalidParameter,
                "blocks {blocks:?} do not fit in length {length}"
            );
        }
        if blocks.windows(2).any(|w| w[0].overlaps(&w[1])) {
            bail!(InvalidParameter, "blocks {blocks:?} overlap");
        }
        Ok(Self { blocks, length })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn starts(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.start).collect()
    }

    /// Covered positions in ascending order.
    pub fn positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.blocks.iter().flat_map(|b| b.start..b.end())
    }
}

/// Output of a recovery kernel. `values` follow [`Support::positions`].
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub support: Support,
    pub values: Vec<C64>,
    pub residual: Vec<C64>,
    pub residual_norm2: f64,
    /// Residual energy after each greedy iteration.
    pub residual_history: Vec<f64>,
}

impl RecoveryResult {
    /// The recovered sparse vector over the full column range.
    pub fn dense_values(&self) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.support.length()];
        for (p, &v) in self.support.positions().zip(&self.values) {
            out[p] = v;
        }
        out
    }
}

/// `|a_cᴴ r|²` for every column `c`.
pub(crate) fn column_correlations(a: DMatrixView<'_, C64>, r: &[C64]) -> Vec<f64> {
    let r = DVectorView::from_slice(r, r.len());
    a.ad_mul(&r).iter().map(|c| c.norm_sqr()).collect()
}

/// Least-squares fit of `y` on the union of `blocks`, columns in block order.
pub fn fit_blocks(y: &[C64], a: DMatrixView<'_, C64>, blocks: &[Block]) -> Result<LsFit> {
    let m = a.nrows();
    let total: usize = blocks.iter().map(|b| b.len).sum();
    let mut data = Vec::with_capacity(m * total);
    for b in blocks {
        for col in b.start..b.end() {
            data.extend(a.column(col).iter());
        }
    }
    ls::solve_column_major(data, m, total, y)
}
