//! Thin wrappers over faer factorizations, exchanged as nalgebra matrices,
//! with the ordering guarantees the truncation code relies on.

use faer::Mat;
use nalgebra::{DMatrix, DMatrixView};

use crate::mps::TruncationParams;

/// Thin SVD `a = u * diag(s) * vt` with singular values in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub vt: DMatrix<f64>,
}

fn to_faer(a: DMatrixView<'_, f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Deterministic thin SVD. Singular values are sorted descending with ties
/// resolved in favour of the lower original column index. Non-finite input
/// or a failed factorization yields all-NaN factors.
pub fn svd(a: DMatrixView<'_, f64>) -> Svd {
    let (rows, cols) = a.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Svd {
            u: DMatrix::zeros(rows, 0),
            s: Vec::new(),
            vt: DMatrix::zeros(0, cols),
        };
    }
    let nan = || Svd {
        u: DMatrix::from_element(rows, k, f64::NAN),
        s: vec![f64::NAN; k],
        vt: DMatrix::from_element(k, cols, f64::NAN),
    };
    // non-finite input propagates as NaN factors for the caller to detect
    if a.iter().any(|v| !v.is_finite()) {
        return nan();
    }
    let Ok(f) = to_faer(a).thin_svd() else {
        return nan();
    };
    let (u_raw, v_raw, s_raw) = (f.U(), f.V(), f.S().column_vector());
    let mut order: Vec<usize> = (0..k).collect();
    // stable sort keeps earlier indices first among equal values
    order.sort_by(|&i, &j| s_raw[j].total_cmp(&s_raw[i]));
    let u = DMatrix::from_fn(rows, k, |i, c| u_raw[(i, order[c])]);
    let vt = DMatrix::from_fn(k, cols, |r, j| v_raw[(j, order[r])]);
    let s = order.iter().map(|&c| s_raw[c].max(0.0)).collect();
    Svd { u, s, vt }
}

/// Number of singular values retained under `params`: values with
/// `s <= eps * s[0]` are dropped, at most `chi_max` are kept, and at least one
/// always survives.
pub fn retained_rank(s: &[f64], params: &TruncationParams) -> usize {
    if s.is_empty() {
        return 0;
    }
    let threshold = params.eps_svd * s[0];
    let above = s.iter().take_while(|&&v| v > threshold).count();
    above.min(params.chi_max).max(1)
}

/// Thin QR with `q` of shape `(rows, min(rows, cols))`.
pub fn qr(a: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let f = to_faer(a.as_view()).qr();
    let (q, r) = (f.compute_thin_Q(), f.thin_R());
    (
        DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)]),
        DMatrix::from_fn(r.nrows(), r.ncols(), |i, j| r[(i, j)]),
    )
}

/// Frobenius norm of the discarded tail `s[keep..]`.
pub fn tail_weight(s: &[f64], keep: usize) -> f64 {
    s[keep.min(s.len())..].iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svd_reconstructs_and_sorts() {
        let a = DMatrix::from_row_slice(3, 4, &[
            1.0, 2.0, 0.0, -1.0, //
            0.5, -3.0, 2.0, 1.0, //
            4.0, 0.0, 1.0, 0.0,
        ]);
        let f = svd(a.as_view());
        assert!(f.s.windows(2).all(|w| w[0] >= w[1]));
        let rebuilt = &f.u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(f.s.clone())) * &f.vt;
        assert!((rebuilt - a).norm() < 1e-12);
    }

    #[test]
    fn svd_of_wide_and_tall_agree() {
        let a = DMatrix::from_fn(5, 2, |i, j| (i as f64 + 1.0).powi(j as i32 + 1));
        let s1 = svd(a.as_view()).s;
        let s2 = svd(a.transpose().as_view()).s;
        for (x, y) in s1.iter().zip(&s2) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn svd_of_non_finite_input_is_nan() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, f64::INFINITY, 0.0, 1.0]);
        let f = svd(a.as_view());
        assert!(f.s.iter().all(|v| v.is_nan()));
        assert_eq!(retained_rank(&f.s, &TruncationParams::exact()), 1);
    }

    #[test]
    fn retained_rank_rules() {
        let s = [1.0, 0.1, 0.01, 1e-15];
        let p = |chi, eps| TruncationParams::new(chi, eps).unwrap();
        assert_eq!(retained_rank(&s, &p(usize::MAX, 0.0)), 4);
        assert_eq!(retained_rank(&s, &p(usize::MAX, 1e-12)), 3);
        assert_eq!(retained_rank(&s, &p(2, 0.0)), 2);
        assert_eq!(retained_rank(&s, &p(usize::MAX, 0.05)), 2);
        // never drops everything
        assert_eq!(retained_rank(&[0.0, 0.0], &p(usize::MAX, 0.5)), 1);
    }

    #[test]
    fn qr_is_thin_and_orthonormal() {
        let a = DMatrix::from_fn(6, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let (q, r) = qr(a.clone());
        assert_eq!(q.shape(), (6, 3));
        assert!((q.transpose() * &q - DMatrix::identity(3, 3)).norm() < 1e-12);
        assert!((q * r - a).norm() < 1e-12);
    }
}
