use nalgebra::DMatrixView;

use std::collections::HashSet;

use super::{column_correlations, fit_blocks, Basis, Block, RecoveryResult, Support};
use crate::error::{bail, Result};
use crate::C64;

/// Relative gap below which two correlation energies count as tied.
const TIE_TOL: f64 = 1e-9;

/// Residual energy, relative to `‖y‖²`, treated as an exact fit.
const EXACT_FIT: f64 = 1e-24;

/// Block OMP over `n_sections = N / section_len` uniform sections.
///
/// Each iteration picks the unselected section with the largest correlation
/// energy `‖A_iᴴ r‖²` (exact ties go to the lowest residual), re-fits all selected
/// sections by least squares and updates the residual.
pub fn bomp(
    y: &[C64],
    a: DMatrixView<'_, C64>,
    section_len: usize,
    sparsity: usize,
) -> Result<RecoveryResult> {
    bomp_with_beam(y, a, section_len, sparsity, 1)
}

fn norm2(r: &[C64]) -> f64 {
    r.iter().map(|z| z.norm_sqr()).sum()
}

/// Ranks unselected sections by correlation energy with `r`, strongest first
/// (stable, so equal energies keep index order).
fn rank_sections(
    a: DMatrixView<'_, C64>,
    r: &[C64],
    section_len: usize,
    selected: &[usize],
) -> Vec<(usize, f64)> {
    let corr = column_correlations(a, r);
    let mut ranked: Vec<(usize, f64)> = (0..a.ncols() / section_len)
        .filter(|i| !selected.contains(i))
        .map(|i| (i, corr[i * section_len..(i + 1) * section_len].iter().sum()))
        .collect();
    ranked.sort_by(|x, y| y.1.total_cmp(&x.1));
    ranked
}

/// Number of leading candidates to try when `want` are requested: candidates
/// tied with the last admitted energy are all tried, so ties are settled by
/// residual rather than by index.
fn admitted(ranked: &[(usize, f64)], want: usize) -> usize {
    match ranked.get(want.max(1) - 1) {
        Some(&(_, cut)) => {
            let tol = TIE_TOL * cut.max(f64::MIN_POSITIVE);
            ranked.iter().take_while(|c| c.1 >= cut - tol).count()
        }
        None => ranked.len(),
    }
}

/// Exact least-squares solution on `sections`, packaged as a result.
fn finish(
    y: &[C64],
    a: DMatrixView<'_, C64>,
    section_len: usize,
    sections: &[usize],
    history: Vec<f64>,
) -> Result<RecoveryResult> {
    let blocks: Vec<Block> = sections
        .iter()
        .map(|&i| Block::new(i * section_len, section_len))
        .collect();
    let fit = fit_blocks(y, a, &blocks)?;
    Ok(RecoveryResult {
        support: Support::new(blocks, a.ncols())?,
        values: fit.values,
        residual: fit.residual,
        residual_norm2: fit.residual_norm2,
        residual_history: history,
    })
}

#[derive(Debug, Clone)]
struct Path {
    sections: Vec<usize>,
    basis: Basis,
    residual: Vec<C64>,
    residual_norm2: f64,
    history: Vec<f64>,
}

/// [`bomp`] as a tree search: every path is extended by its `beam` strongest
/// unselected sections, and the `beam` lowest-residual section sets survive
/// each level (ties to the lexicographically smaller set). `beam = 1` is
/// plain BOMP.
pub fn bomp_with_beam(
    y: &[C64],
    a: DMatrixView<'_, C64>,
    section_len: usize,
    sparsity: usize,
    beam: usize,
) -> Result<RecoveryResult> {
    let (m, n) = a.shape();
    if y.len() != m {
        bail!(
            InvalidParameter,
            "observation length {} != {m} rows",
            y.len()
        );
    }
    if section_len == 0 || n % section_len != 0 {
        bail!(
            InvalidParameter,
            "section length {section_len} does not divide N={n}"
        );
    }
    let n_sections = n / section_len;
    if sparsity == 0 || sparsity > n_sections {
        bail!(
            InvalidParameter,
            "sparsity {sparsity} must be in 1..={n_sections}"
        );
    }
    let beam = beam.max(1);

    let mut paths = vec![Path {
        sections: Vec::new(),
        basis: Basis::empty(m),
        residual: y.to_vec(),
        residual_norm2: norm2(y),
        history: Vec::new(),
    }];
    for level in 0..sparsity {
        let mut seen = HashSet::new();
        let mut next = Vec::new();
        for path in &paths {
            let ranked = rank_sections(a, &path.residual, section_len, &path.sections);
            for &(i, _) in &ranked[..admitted(&ranked, beam)] {
                let mut sections = path.sections.clone();
                sections.push(i);
                sections.sort_unstable();
                if !seen.insert(sections.clone()) {
                    continue;
                }
                let Some(basis) = path
                    .basis
                    .extend(a, Block::new(i * section_len, section_len))
                else {
                    continue;
                };
                let mut residual = path.residual.clone();
                basis.project_out(path.basis.cols(), &mut residual);
                let residual_norm2 = norm2(&residual);
                let mut history = path.history.clone();
                history.push(residual_norm2);
                next.push(Path {
                    sections,
                    basis,
                    residual,
                    residual_norm2,
                    history,
                });
            }
        }
        if next.is_empty() {
            bail!(
                Singular,
                "every candidate section is rank deficient at level {level}"
            );
        }
        next.sort_by(|p, q| {
            p.residual_norm2
                .total_cmp(&q.residual_norm2)
                .then_with(|| p.sections.cmp(&q.sections))
        });
        next.truncate(beam);
        paths = next;
    }

    let best = paths.swap_remove(0);
    finish(y, a, section_len, &best.sections, best.history)
}

/// Local search around a section-level solution: each selected section in
/// turn is dropped, the remaining sections are re-fitted, and the
/// `candidates` unselected sections best correlated with that residual are
/// tried in its place. A replacement is kept only if the joint residual
/// drops; at most `sweeps` passes are made.
pub fn bomp_refine(
    y: &[C64],
    a: DMatrixView<'_, C64>,
    section_len: usize,
    start: RecoveryResult,
    candidates: usize,
    sweeps: usize,
) -> Result<RecoveryResult> {
    let n = a.ncols();
    if section_len == 0
        || !n.is_multiple_of(section_len)
        || start.support.length() != n
        || y.len() != a.nrows()
    {
        bail!(
            InvalidParameter,
            "section length {section_len} does not match the {n}-column solution"
        );
    }
    let block = |i: usize| Block::new(i * section_len, section_len);
    let mut sections: Vec<usize> = start
        .support
        .starts()
        .iter()
        .map(|s| s / section_len)
        .collect();
    let blocks: Vec<Block> = sections.iter().map(|&i| block(i)).collect();
    let Some((_, r)) = Basis::residual_of(a, y, &blocks) else {
        return Ok(start);
    };
    let mut current = norm2(&r);
    if current <= EXACT_FIT * norm2(y) {
        return Ok(start);
    }
    let mut history = start.residual_history.clone();
    let mut changed_any = false;
    for _ in 0..sweeps {
        let mut changed = false;
        for slot in 0..sections.len() {
            let rest: Vec<Block> = sections
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != slot)
                .map(|(_, &s)| block(s))
                .collect();
            let Some((basis, partial)) = Basis::residual_of(a, y, &rest) else {
                continue;
            };
            let ranked = rank_sections(a, &partial, section_len, &sections);
            for &(i, _) in &ranked[..admitted(&ranked, candidates)] {
                let Some(grown) = basis.extend(a, block(i)) else {
                    continue;
                };
                let mut r = partial.clone();
                grown.project_out(basis.cols(), &mut r);
                let r2 = norm2(&r);
                if r2 < current {
                    sections[slot] = i;
                    current = r2;
                    history.push(r2);
                    changed = true;
                    break;
                }
            }
        }
        changed_any |= changed;
        if !changed {
            break;
        }
    }
    if !changed_any {
        return Ok(start);
    }
    sections.sort_unstable();
    finish(y, a, section_len, &sections, history)
}

/// Plain OMP: [`bomp`] with unit sections.
pub fn omp(y: &[C64], a: DMatrixView<'_, C64>, sparsity: usize) -> Result<RecoveryResult> {
    bomp(y, a, 1, sparsity)
}

/// Residual update `r - A_i A_iᴴ r` for a selected sub-matrix with
/// orthonormal columns, skipping the least-squares re-fit. The decoder hits
/// this case when `M = D`; the identity itself only needs orthonormality.
///
/// The orthonormality precondition is verified in debug builds only.
pub fn bomp_fast_residual(r_prev: &[C64], a_selected: DMatrixView<'_, C64>) -> Result<Vec<C64>> {
    let (m, d) = a_selected.shape();
    if r_prev.len() != m {
        bail!(
            InvalidParameter,
            "residual length {} != {m} rows",
            r_prev.len()
        );
    }
    if cfg!(debug_assertions) {
        let gram = a_selected.adjoint() * a_selected;
        let off = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| {
                (gram[(i, j)]
                    - if i == j {
                        C64::new(1.0, 0.0)
                    } else {
                        C64::new(0.0, 0.0)
                    })
                .norm()
            })
            .fold(0.0, f64::max);
        if off > 1e-9 {
            bail!(
                InvalidParameter,
                "selected columns are not orthonormal (deviation {off:e})"
            );
        }
    }
    let proj: Vec<C64> = (0..d)
        .map(|c| {
            a_selected
                .column(c)
                .iter()
                .zip(r_prev)
                .map(|(a, r)| a.conj() * r)
                .sum()
        })
        .collect();
    let mut out = r_prev.to_vec();
    for (c, p) in proj.iter().enumerate() {
        for (o, a) in out.iter_mut().zip(a_selected.column(c).iter()) {
            *o -= a * p;
        }
    }
    Ok(out)
}
