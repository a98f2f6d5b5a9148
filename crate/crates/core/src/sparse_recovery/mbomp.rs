//! Multi-path block OMP for blocks at arbitrary offsets.
//!
//! Cyclically shifting the columns of `Ψ` and the entries of `c` by the same
//! amount leaves `Ψc` unchanged. Under shift `l` the aligned blocks of the
//! shifted problem (starts `0, L, 2L, ..` with no tail wrap) correspond to
//! original blocks starting at `l, L+l, 2L+l, ..`, so over `l = 0..L-1` every
//! valid start is aligned in exactly one problem. The kernel never builds
//! the shifted matrices: it runs each shifted problem directly on the
//! original columns through [`aligned_candidates`].
//!
//! With `K = 1` this is exactly `L` single-shift BOMP problems followed by a
//! minimum-residual choice. For `K ≥ 2` the blocks of one codeword may align
//! under different shifts, so the search is a tree: each path is seeded by
//! one shift's best block, every extension tries the best block of each
//! shift, and at most `beam` paths survive each level.

use std::collections::HashSet;

use nalgebra::{DMatrix, DMatrixView};

use super::{column_correlations, fit_blocks, Block, LsFit, RecoveryResult, Support};
use crate::combinadics::placement_count;
use crate::error::{bail, Result};
use crate::C64;

/// Column-shifted copy: column `j` of the result is column `(j + l) mod D`.
pub fn shift_columns(a: DMatrixView<'_, C64>, l: isize) -> DMatrix<C64> {
    let d = a.ncols() as isize;
    DMatrix::from_fn(a.nrows(), a.ncols(), |r, j| {
        a[(r, (j as isize + l).rem_euclid(d) as usize)]
    })
}

/// Cyclic vector shift: entry `j` moves to `(j + l) mod D`.
pub fn shift_vector(c: &[C64], l: isize) -> Vec<C64> {
    let d = c.len() as isize;
    let mut out = vec![C64::new(0.0, 0.0); c.len()];
    for (j, &v) in c.iter().enumerate() {
        out[(j as isize + l).rem_euclid(d) as usize] = v;
    }
    out
}

/// Original-coordinate blocks that are aligned in the problem shifted by `shift`.
pub fn aligned_candidates(d: usize, l: usize, shift: usize) -> Vec<Block> {
    (0..)
        .map(|i| i * l)
        .take_while(|&a| a + l <= d)
        .map(|a| a + shift)
        .filter(|&start| start + l <= d)
        .map(|start| Block::new(start, l))
        .collect()
}

#[derive(Debug, Clone)]
struct Path {
    blocks: Vec<Block>,
    fit: LsFit,
    history: Vec<f64>,
}

impl Path {
    fn key(&self) -> (f64, Vec<usize>) {
        (
            self.fit.residual_norm2,
            self.blocks.iter().map(|b| b.start).collect(),
        )
    }
}

/// Strongest non-overlapping candidate by `‖Ψ_bᴴ r‖²`, ties to the lowest start.
fn best_block(corr: &[f64], candidates: &[Block], taken: &[Block]) -> Option<Block> {
    let mut best: Option<(Block, f64)> = None;
    for b in candidates {
        if taken.iter().any(|t| t.overlaps(b)) {
            continue;
        }
        let energy: f64 = corr[b.start..b.end()].iter().sum();
        if best.is_none_or(|(_, e)| energy > e) {
            best = Some((*b, energy));
        }
    }
    best.map(|(b, _)| b)
}

fn order_paths(a: &Path, b: &Path) -> std::cmp::Ordering {
    let (ra, sa) = a.key();
    let (rb, sb) = b.key();
    ra.total_cmp(&rb).then_with(|| sa.cmp(&sb))
}

/// [`mbomp_with_beam`] with a beam of `L` paths.
pub fn mbomp(
    y: &[C64],
    a: DMatrixView<'_, C64>,
    block_len: usize,
    sparsity: usize,
) -> Result<RecoveryResult> {
    mbomp_with_beam(y, a, block_len, sparsity, block_len)
}

/// Recovers `sparsity` non-overlapping blocks of `block_len` columns of the
/// `M×D` matrix `a`, keeping up to `beam` candidate paths per level.
pub fn mbomp_with_beam(
    y: &[C64],
    a: DMatrixView<'_, C64>,
    block_len: usize,
    sparsity: usize,
    beam: usize,
) -> Result<RecoveryResult> {
    let (m, d) = a.shape();
    if y.len() != m {
        bail!(
            InvalidParameter,
            "observation length {} != {m} rows",
            y.len()
        );
    }
    placement_count(d, sparsity, block_len)?;
    let beam = beam.max(1);
    let shifts: Vec<Vec<Block>> = (0..block_len)
        .map(|l| aligned_candidates(d, block_len, l))
        .collect();

    let y_norm2: f64 = y.iter().map(|z| z.norm_sqr()).sum();
    let mut paths = vec![Path {
        blocks: Vec::new(),
        fit: LsFit {
            values: Vec::new(),
            residual: y.to_vec(),
            residual_norm2: y_norm2,
        },
        history: Vec::new(),
    }];
    for _ in 0..sparsity {
        let mut seen = HashSet::new();
        let mut next = Vec::new();
        for path in &paths {
            let corr = column_correlations(a, &path.fit.residual);
            for candidates in &shifts {
                let Some(block) = best_block(&corr, candidates, &path.blocks) else {
                    continue;
                };
                let mut blocks = path.blocks.clone();
                blocks.push(block);
                blocks.sort();
                if !seen.insert(blocks.clone()) {
                    continue;
                }
                // A rank-deficient candidate only removes this path.
                if let Ok(fit) = fit_blocks(y, a, &blocks) {
                    let mut history = path.history.clone();
                    history.push(fit.residual_norm2);
                    next.push(Path {
                        blocks,
                        fit,
                        history,
                    });
                }
            }
        }
        if next.is_empty() {
            bail!(DecodeFailure, "no admissible block candidates remain");
        }
        next.sort_by(order_paths);
        next.truncate(beam);
        paths = next;
    }

    let best = paths
        .into_iter()
        .next()
        .expect("non-empty after the last level");
    Ok(RecoveryResult {
        support: Support::new(best.blocks, d)?,
        values: best.fit.values,
        residual: best.fit.residual,
        residual_norm2: best.fit.residual_norm2,
        residual_history: best.history,
    })
}
