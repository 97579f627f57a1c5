//! Small dense helpers shared by the solvers.

use ndarray::{Array1, Array2, ArrayView2};

/// Largest eigenvalue of `DᵀD` (the squared spectral norm of `D`) by power iteration.
///
/// Runs at most `max_iters` iterations and stops early once the estimate changes
/// by less than `rel_tol` relative.
pub fn spectral_norm_sq(d: ArrayView2<'_, f64>, max_iters: usize, rel_tol: f64) -> f64 {
    let gram = d.t().dot(&d);
    gram_top_eigenvalue(&gram, max_iters, rel_tol)
}

pub fn gram_top_eigenvalue(gram: &Array2<f64>, max_iters: usize, rel_tol: f64) -> f64 {
    let k = gram.nrows();
    if k == 0 {
        return 0.0;
    }
    // Slightly uneven start so it is unlikely to be orthogonal to the top eigenvector.
    let mut v: Array1<f64> = Array1::from_shape_fn(k, |i| 1.0 + (i as f64 + 1.0).sqrt() * 1e-3);
    let n = v.dot(&v).sqrt();
    v /= n;
    let mut estimate = 0.0;
    for _ in 0..max_iters.max(1) {
        let w = gram.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        let done = (next - estimate).abs() <= rel_tol * next.abs();
        estimate = next;
        if done {
            break;
        }
    }
    // Rayleigh quotient never exceeds the true eigenvalue; the diagonal gives a
    // floor that is exact for orthogonal columns.
    let diag_max = gram.diag().iter().cloned().fold(0.0_f64, f64::max);
    estimate.max(diag_max)
}

/// Smallest `l` of the form `estimate * (1 + 1e-9) * growth^m` for which `l I - G`
/// has a Cholesky factor, so `l` bounds the top eigenvalue of the symmetric `gram`.
pub fn certified_top_bound(gram: &Array2<f64>, estimate: f64) -> f64 {
    let k = gram.nrows();
    let scale = gram.diag().iter().cloned().fold(0.0_f64, f64::max);
    if k == 0 || scale == 0.0 {
        return 0.0;
    }
    let mut l = estimate.max(scale) * (1.0 + 1e-9);
    let mut growth = 1e-6;
    while !shifted_is_positive_definite(gram, l) {
        l *= 1.0 + growth;
        growth = (growth * 10.0).min(1.0);
    }
    l
}

fn shifted_is_positive_definite(gram: &Array2<f64>, l: f64) -> bool {
    let k = gram.nrows();
    let mut f = Array2::<f64>::zeros((k, k));
    for j in 0..k {
        let mut d = l - gram[[j, j]];
        for p in 0..j {
            d -= f[[j, p]] * f[[j, p]];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        f[[j, j]] = d;
        for i in j + 1..k {
            let mut v = -gram[[i, j]];
            for p in 0..j {
                v -= f[[i, p]] * f[[j, p]];
            }
            f[[i, j]] = v / d;
        }
    }
    true
}

pub fn frobenius_sq(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// Sum of row-wise Euclidean norms.
pub fn l21_norm(a: ArrayView2<'_, f64>) -> f64 {
    a.rows().into_iter().map(|r| r.dot(&r).sqrt()).sum()
}

pub fn l1_norm(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

pub fn max_row_norm(a: ArrayView2<'_, f64>) -> f64 {
    a.rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .fold(0.0, f64::max)
}

pub fn all_finite(a: ArrayView2<'_, f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_has_unit_norm() {
        let eye = Array2::<f64>::eye(5);
        assert!((spectral_norm_sq(eye.view(), 30, 1e-10) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_matrix() {
        let d = array![[3.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        let l = spectral_norm_sq(d.view(), 30, 1e-10);
        assert!((l - 9.0).abs() < 1e-9);
    }

    #[test]
    fn norms() {
        let a = array![[3.0, 4.0], [0.0, -1.0]];
        assert_eq!(l21_norm(a.view()), 6.0);
        assert_eq!(l1_norm(a.view()), 8.0);
        assert_eq!(frobenius_sq(a.view()), 26.0);
        assert_eq!(max_row_norm(a.view()), 5.0);
    }

    #[test]
    fn certified_bound_covers_low_estimates() {
        let g = array![[2.0, 1.0], [1.0, 2.0]];
        let tight = certified_top_bound(&g, 3.0);
        assert!(tight >= 3.0 && tight < 3.0 * (1.0 + 1e-8));
        let loose = certified_top_bound(&g, 2.5);
        assert!(loose >= 3.0 && loose < 6.0);
        assert_eq!(certified_top_bound(&Array2::zeros((3, 3)), 0.0), 0.0);
    }
}
