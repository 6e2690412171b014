//! Small dense symmetric solves for the IRLS normal equations.

use ndarray::{Array1, Array2};

/// Cholesky factor (lower triangular) of a symmetric positive definite
/// matrix, or None if the matrix is not numerically PD.
pub(crate) fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Some(l)
}

/// Solve L L^T x = b given the lower Cholesky factor.
pub(crate) fn cholesky_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solve a symmetric system, escalating a ridge jitter if the matrix is not
/// PD. Returns the solution and whether jitter was needed.
pub(crate) fn solve_spd_with_jitter(
    a: &Array2<f64>,
    b: &Array1<f64>,
) -> Option<(Array1<f64>, bool)> {
    if let Some(l) = cholesky(a) {
        return Some((cholesky_solve(&l, b), false));
    }
    let mut jitter = 1e-8;
    for _ in 0..3 {
        let mut aj = a.clone();
        for i in 0..aj.nrows() {
            aj[(i, i)] += jitter;
        }
        if let Some(l) = cholesky(&aj) {
            return Some((cholesky_solve(&l, b), true));
        }
        jitter *= 100.0;
    }
    None
}
