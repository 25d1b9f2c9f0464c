use crate::error::{Error, Result};
use crate::linalg::Matrix;

const GS_TOL: f64 = 1e-10;
const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 60;
const JACOBI_MAX_DIM: usize = 512;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormal basis for the column span of `a` (modified Gram–Schmidt with
/// one reorthogonalization pass).
///
/// Fails with [`Error::Degenerate`] naming the first column whose norm after
/// projection is at most `1e-10`.
pub fn gram_schmidt(a: &Matrix) -> Result<Matrix> {
    let (m, n) = a.shape();
    if n > m {
        return Err(Error::shape(
            "gram_schmidt",
            format!("need cols <= rows, got {m}x{n}"),
        ));
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let mut v = a.column(j);
        for _pass in 0..2 {
            for q in &basis {
                let r = dot(q, &v);
                v.iter_mut().zip(q).for_each(|(x, &qi)| *x -= r * qi);
            }
        }
        let norm = dot(&v, &v).sqrt();
        // also catches NaN
        if norm.is_nan() || norm <= GS_TOL {
            return Err(Error::Degenerate {
                op: "gram_schmidt",
                column: j,
                norm,
            });
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    Ok(Matrix::from_fn(m, n, |i, j| basis[j][i]))
}

/// Thin SVD `a = u·diag(s)·vᵀ` with `s` descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

/// Singular values of `a`, descending, by one-sided Jacobi.
pub fn jacobi_svd(a: &Matrix) -> Result<Vec<f64>> {
    Ok(jacobi_svd_full(a)?.s)
}

/// One-sided (Hestenes) Jacobi SVD. Oracle-scale only: `min(rows, cols) <= 512`.
pub fn jacobi_svd_full(a: &Matrix) -> Result<Svd> {
    let (m, n) = a.shape();
    if m.min(n) > JACOBI_MAX_DIM {
        return Err(Error::shape(
            "jacobi_svd",
            format!("min dimension {} exceeds {JACOBI_MAX_DIM}", m.min(n)),
        ));
    }
    if !a.is_finite() {
        return Err(Error::numerical("jacobi_svd", "non-finite input"));
    }
    if m < n {
        let t = jacobi_tall(&a.transpose())?;
        return Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }
    jacobi_tall(a)
}

fn jacobi_tall(a: &Matrix) -> Result<Svd> {
    let (m, n) = a.shape();
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut converged = n < 2;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::numerical(
            "jacobi_svd",
            format!("no convergence after {JACOBI_MAX_SWEEPS} sweeps"),
        ));
    }

    let norms: Vec<f64> = w.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let u = Matrix::from_fn(m, n, |i, k| {
        let j = order[k];
        if norms[j] > 0.0 {
            w[j][i] / norms[j]
        } else {
            0.0
        }
    });
    let vm = Matrix::from_fn(n, n, |i, k| v[order[k]][i]);
    Ok(Svd { u, s, v: vm })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{matmul, spectral_norm_estimate, Rng};

    fn gram_error(q: &Matrix) -> f64 {
        let g = matmul(&q.transpose(), q).unwrap();
        g.max_abs_diff(&Matrix::identity(q.cols()))
    }

    #[test]
    fn gs_orthonormal_input_is_kept() {
        let q = Matrix::from_rows(&[[0.6, 0.8], [0.8, -0.6], [0.0, 0.0]]);
        let out = gram_schmidt(&q).unwrap();
        for j in 0..2 {
            let sign = if out[(0, j)] * q[(0, j)] >= 0.0 {
                1.0
            } else {
                -1.0
            };
            for i in 0..3 {
                assert!((out[(i, j)] - sign * q[(i, j)]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn gs_hand_example() {
        let a = Matrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]);
        let q = gram_schmidt(&a).unwrap();
        assert!(q.max_abs_diff(&Matrix::identity(2)) <= 1e-15);
    }

    #[test]
    fn gs_random_tall() {
        let mut rng = Rng::new(3, 0);
        let a = Matrix::gaussian(40, 8, &mut rng);
        let q = gram_schmidt(&a).unwrap();
        assert!(gram_error(&q) <= 1e-10);
        // span preserved: projecting a onto span(q) reproduces a
        let proj = matmul(&q, &matmul(&q.transpose(), &a).unwrap()).unwrap();
        assert!(proj.max_abs_diff(&a) <= 1e-10);
    }

    #[test]
    fn gs_rank_deficient_names_column() {
        let a = Matrix::from_rows(&[[1.0, 2.0, 0.0], [1.0, 2.0, 1.0], [0.0, 0.0, 1.0]]);
        match gram_schmidt(&a) {
            Err(Error::Degenerate { column, .. }) => assert_eq!(column, 1),
            other => panic!("expected degenerate error, got {other:?}"),
        }
    }

    #[test]
    fn svd_diag() {
        let s = jacobi_svd(&Matrix::from_diag(&[2.0, 5.0, 1.0])).unwrap();
        assert_eq!(s, vec![5.0, 2.0, 1.0]);
    }

    #[test]
    fn svd_rank_one() {
        let u = [1.0, 2.0, 2.0];
        let v = [3.0, 4.0];
        let a = Matrix::from_fn(3, 2, |i, j| u[i] * v[j]);
        let s = jacobi_svd(&a).unwrap();
        assert!((s[0] - 15.0).abs() <= 1e-12);
        assert!(s[1].abs() <= 1e-12);
    }

    #[test]
    fn svd_frobenius_identity() {
        let mut rng = Rng::new(5, 5);
        let a = Matrix::gaussian(20, 12, &mut rng);
        let s = jacobi_svd(&a).unwrap();
        let sum: f64 = s.iter().map(|x| x * x).sum();
        let f2 = a.frobenius_norm().powi(2);
        assert!(((sum - f2) / f2).abs() <= 1e-9);
    }

    #[test]
    fn svd_reconstructs() {
        let mut rng = Rng::new(6, 1);
        for (m, n) in [(9, 4), (4, 9), (6, 6)] {
            let a = Matrix::gaussian(m, n, &mut rng);
            let svd = jacobi_svd_full(&a).unwrap();
            let us = Matrix::from_fn(m, svd.s.len(), |i, j| svd.u[(i, j)] * svd.s[j]);
            let back = matmul(&us, &svd.v.transpose()).unwrap();
            assert!(back.max_abs_diff(&a) <= 1e-12, "{m}x{n}");
        }
    }

    #[test]
    fn spectral_estimate_agrees_with_svd() {
        let mut rng = Rng::new(8, 8);
        // Gaussian spectra are crowded at the top: bound only
        let a = Matrix::<f64>::gaussian(50, 30, &mut rng);
        let top = jacobi_svd(&a).unwrap()[0];
        let est = spectral_norm_estimate(&a, 100, &mut rng);
        assert!(est <= top + 1e-9);
        assert!(est >= 0.99 * top);

        // separated spectrum: σ = 10, 5, 2.5, ...
        let u = gram_schmidt(&Matrix::gaussian(50, 30, &mut rng)).unwrap();
        let v = gram_schmidt(&Matrix::gaussian(30, 30, &mut rng)).unwrap();
        let s: Vec<f64> = (0..30).map(|i| 10.0 * 0.5f64.powi(i)).collect();
        let a = matmul(&matmul(&u, &Matrix::from_diag(&s)).unwrap(), &v.transpose()).unwrap();
        let top = jacobi_svd(&a).unwrap()[0];
        let est = spectral_norm_estimate(&a, 100, &mut rng);
        assert!(est <= top + 1e-9);
        assert!((top - est) / top <= 1e-6, "est {est} top {top}");
    }

    #[test]
    fn spectral_estimate_orthonormal() {
        let mut rng = Rng::new(1, 9);
        let q = gram_schmidt(&Matrix::gaussian(10, 10, &mut rng)).unwrap();
        assert!((spectral_norm_estimate(&q, 100, &mut rng) - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn svd_rejects_non_finite() {
        let a = Matrix::from_rows(&[[f64::NAN, 1.0]]);
        assert!(matches!(jacobi_svd(&a), Err(Error::Numerical { .. })));
    }
}
