//! Small dense helpers on top of `ndarray`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

/// Matrix of i.i.d. standard normal entries.
pub fn gaussian<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Orthogonal factor of a Householder QR decomposition of a square matrix,
/// with column signs fixed so that `R` has a non-negative diagonal.
///
/// Applied to a Gaussian matrix this yields a Haar-distributed rotation.
pub fn qr_orthogonal(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "qr_orthogonal expects a square matrix");
    let mut r = a.clone();
    let mut q = Array2::<f64>::eye(n);

    for j in 0..n {
        let norm = r.slice(ndarray::s![j.., j]).dot(&r.slice(ndarray::s![j.., j])).sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[[j, j]] > 0.0 { -norm } else { norm };
        let mut v: Array1<f64> = r.slice(ndarray::s![j.., j]).to_owned();
        v[0] -= alpha;
        let vnorm2 = v.dot(&v);
        if vnorm2 == 0.0 {
            continue;
        }
        // r[j.., :] -= 2 v (v^T r[j.., :]) / (v^T v)
        for c in 0..n {
            let mut s = 0.0;
            for (i, vi) in v.iter().enumerate() {
                s += vi * r[[j + i, c]];
            }
            let f = 2.0 * s / vnorm2;
            for (i, vi) in v.iter().enumerate() {
                r[[j + i, c]] -= f * vi;
            }
        }
        // q[:, j..] -= 2 (q[:, j..] v) v^T / (v^T v)
        for row in 0..n {
            let mut s = 0.0;
            for (i, vi) in v.iter().enumerate() {
                s += q[[row, j + i]] * vi;
            }
            let f = 2.0 * s / vnorm2;
            for (i, vi) in v.iter().enumerate() {
                q[[row, j + i]] -= f * vi;
            }
        }
    }

    for j in 0..n {
        if r[[j, j]] < 0.0 {
            q.column_mut(j).mapv_inplace(|x| -x);
        }
    }
    q
}

/// Euclidean norm of every row.
pub fn row_norms(m: ArrayView2<f64>) -> Array1<f64> {
    m.map_axis(Axis(1), |r| r.dot(&r).sqrt())
}

/// Copy of `m` with every row scaled to unit length. Zero rows stay zero.
pub fn normalize_rows(m: ArrayView2<f64>) -> Array2<f64> {
    let mut out = m.to_owned();
    for mut row in out.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row.mapv_inplace(|x| x / n);
        }
    }
    out
}

/// `||A^T A - I||_F`.
pub fn orthogonality_defect(a: ArrayView2<f64>) -> f64 {
    let g = a.t().dot(&a);
    let mut s = 0.0;
    for ((i, j), v) in g.indexed_iter() {
        let d = if i == j { v - 1.0 } else { *v };
        s += d * d;
    }
    s.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn qr_of_gaussian_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 5, 50] {
            let q = qr_orthogonal(&gaussian(n, n, &mut rng));
            assert!(orthogonality_defect(q.view()) < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn qr_reconstructs_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = gaussian(6, 6, &mut rng);
        let q = qr_orthogonal(&a);
        // R = Q^T A must be upper triangular with a non-negative diagonal.
        let r = q.t().dot(&a);
        for i in 0..6 {
            assert!(r[[i, i]] >= 0.0);
            for j in 0..i {
                assert!(r[[i, j]].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalize_keeps_zero_rows() {
        let m = ndarray::array![[3.0, 4.0], [0.0, 0.0]];
        let n = normalize_rows(m.view());
        assert_eq!(n, ndarray::array![[0.6, 0.8], [0.0, 0.0]]);
    }
}
