use nalgebra::DMatrixView;

use crate::error::{bail, Result};
use crate::C64;

/// Relative threshold on `|R_jj|` below which a column is treated as dependent.
const RANK_TOL: f64 = 1e-10;

/// Least-squares fit of `y` on the columns of a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LsFit {
    pub values: Vec<C64>,
    pub residual: Vec<C64>,
    pub residual_norm2: f64,
}

/// Solves `min ‖y - A v‖²` by Householder QR.
pub fn solve_least_squares(a: DMatrixView<'_, C64>, y: &[C64]) -> Result<LsFit> {
    let (m, k) = a.shape();
    let mut data = Vec::with_capacity(m * k);
    for c in 0..k {
        data.extend(a.column(c).iter());
    }
    solve_column_major(data, m, k, y)
}

/// [`solve_least_squares`] on an owned column-major `m×k` buffer.
pub(crate) fn solve_column_major(a: Vec<C64>, m: usize, k: usize, y: &[C64]) -> Result<LsFit> {
    if y.len() != m {
        bail!(
            InvalidParameter,
            "observation length {} != {m} rows",
            y.len()
        );
    }
    if k > m {
        bail!(Singular, "{k} columns exceed {m} rows");
    }
    let norm = |x: &[C64]| x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut r = a.clone();
    let mut qty = y.to_vec();
    let scale = (0..k)
        .map(|j| norm(&a[j * m..(j + 1) * m]))
        .fold(0.0, f64::max);
    let mut v = Vec::with_capacity(m);

    for j in 0..k {
        let x = &r[j * m + j..(j + 1) * m];
        let xnorm = norm(x);
        if xnorm <= RANK_TOL * scale.max(f64::MIN_POSITIVE) {
            bail!(
                Singular,
                "column {j} is linearly dependent on the preceding ones"
            );
        }
        let head = x[0];
        let phase = if head.norm() > 0.0 {
            head / head.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        // v = x - alpha e1 with alpha = -phase‖x‖, applied as H = I - 2 v vᴴ / ‖v‖².
        v.clear();
        v.extend_from_slice(x);
        v[0] += phase * xnorm;
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let reflect = |x: &mut [C64]| {
            let dot: C64 = v.iter().zip(x.iter()).map(|(vi, xi)| vi.conj() * xi).sum();
            let f = dot * (2.0 / vnorm2);
            x.iter_mut().zip(&v).for_each(|(xi, vi)| *xi -= vi * f);
        };
        for c in j..k {
            reflect(&mut r[c * m + j..(c + 1) * m]);
        }
        reflect(&mut qty[j..]);
    }

    let mut values = vec![C64::new(0.0, 0.0); k];
    for j in (0..k).rev() {
        let mut acc = qty[j];
        for c in j + 1..k {
            acc -= r[c * m + j] * values[c];
        }
        values[j] = acc / r[j * m + j];
    }

    let mut residual = y.to_vec();
    for (c, &val) in values.iter().enumerate() {
        residual
            .iter_mut()
            .zip(&a[c * m..(c + 1) * m])
            .for_each(|(ri, &aic)| *ri -= aic * val);
    }
    let residual_norm2 = residual.iter().map(|z| z.norm_sqr()).sum();
    Ok(LsFit {
        values,
        residual,
        residual_norm2,
    })
}

/// Least-squares coefficients `argmin_v ‖y - A v‖²` for a full-column-rank `A`.
pub fn ls_estimate(y: &[C64], a_support: DMatrixView<'_, C64>) -> Result<Vec<C64>> {
    Ok(solve_least_squares(a_support, y)?.values)
}
