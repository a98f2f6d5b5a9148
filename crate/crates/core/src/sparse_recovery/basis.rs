use nalgebra::DMatrixView;

use super::Block;
use crate::C64;

/// Relative column norm below which an extension counts as rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Norm ratio below which a Gram-Schmidt pass is repeated.
const REORTH_RATIO: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Orthonormal basis of the span of the selected columns, grown one block at
/// a time so candidate extensions cost `O(M·k·D)` instead of a fresh QR.
#[derive(Debug, Clone)]
pub(crate) struct Basis {
    m: usize,
    q: Vec<C64>,
    scale: f64,
}

impl Basis {
    pub(crate) fn empty(m: usize) -> Self {
        Self {
            m,
            q: Vec::new(),
            scale: 0.0,
        }
    }

    pub(crate) fn cols(&self) -> usize {
        self.q.len() / self.m
    }

    /// Appends the columns of `block`; `None` when they are numerically
    /// dependent on the span (same rule as the least-squares solver).
    pub(crate) fn extend(&self, a: DMatrixView<'_, C64>, block: Block) -> Option<Basis> {
        let m = self.m;
        let mut next = self.clone();
        next.q.reserve(m * block.len);
        for col in block.start..block.end() {
            let mut v: Vec<C64> = a.column(col).iter().copied().collect();
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            next.scale = next.scale.max(norm);
            // Gram-Schmidt, repeated once when cancellation is heavy.
            let mut before = norm;
            let mut rest = norm;
            for _ in 0..2 {
                for q in next.q.chunks_exact(m) {
                    let c: C64 = q.iter().zip(&v).map(|(q, v)| q.conj() * v).sum();
                    v.iter_mut().zip(q).for_each(|(v, q)| *v -= q * c);
                }
                rest = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if rest >= REORTH_RATIO * before {
                    break;
                }
                before = rest;
            }
            if rest <= RANK_TOL * next.scale.max(f64::MIN_POSITIVE) {
                return None;
            }
            next.q.extend(v.iter().map(|z| z / rest));
        }
        Some(next)
    }

    /// Removes from `r` its component along the basis columns from `first` on.
    pub(crate) fn project_out(&self, first: usize, r: &mut [C64]) {
        for q in self.q.chunks_exact(self.m).skip(first) {
            let c: C64 = q.iter().zip(r.iter()).map(|(q, r)| q.conj() * r).sum();
            r.iter_mut().zip(q).for_each(|(r, q)| *r -= q * c);
        }
    }

    /// Basis of `blocks` and the residual of `y` against it.
    pub(crate) fn residual_of(
        a: DMatrixView<'_, C64>,
        y: &[C64],
        blocks: &[Block],
    ) -> Option<(Basis, Vec<C64>)> {
        let mut basis = Basis::empty(a.nrows());
        for &b in blocks {
            basis = basis.extend(a, b)?;
        }
        let mut r = y.to_vec();
        basis.project_out(0, &mut r);
        Some((basis, r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::complex_gaussian;
    use crate::sparse_recovery::fit_blocks;
    use nalgebra::DMatrix;
    use rand::SeedableRng;

    #[test]
    fn residual_matches_least_squares() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(20, 30, |_, _| complex_gaussian(&mut rng, 1.0));
        let y: Vec<C64> = (0..20).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let blocks = [Block::new(2, 3), Block::new(11, 4), Block::new(25, 5)];
        let (basis, r) = Basis::residual_of(a.as_view(), &y, &blocks).unwrap();
        let fit = fit_blocks(&y, a.as_view(), &blocks).unwrap();
        assert_eq!(basis.cols(), 12);
        let gap = r
            .iter()
            .zip(&fit.residual)
            .map(|(p, q)| (p - q).norm())
            .fold(0.0, f64::max);
        assert!(gap < 1e-12, "{gap}");
    }

    #[test]
    fn dependent_columns_are_rejected() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut a = DMatrix::from_fn(8, 6, |_, _| complex_gaussian(&mut rng, 1.0));
        let copy = a.column(1) * C64::new(0.5, -2.0);
        a.set_column(4, &copy);
        let basis = Basis::empty(8)
            .extend(a.as_view(), Block::new(0, 2))
            .unwrap();
        assert!(basis.extend(a.as_view(), Block::new(4, 1)).is_none());
        assert!(basis.extend(a.as_view(), Block::new(2, 2)).is_some());
    }
}
