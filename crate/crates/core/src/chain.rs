//! Order-3 site tensors and the sweeps shared by states and operators.
//!
//! A [`Core`] with shape `(left, phys, right)` is stored column-major with the
//! left bond index fastest, so the left unfolding `(left * phys, right)` and
//! the right unfolding `(left, phys * right)` are both plain reinterpretations
//! of the same buffer.

use nalgebra::{DMatrix, DMatrixView};

use crate::linalg::{qr, retained_rank, svd, tail_weight};
use crate::mps::TruncationParams;

#[derive(Debug, Clone, PartialEq)]
pub struct Core {
    left: usize,
    phys: usize,
    right: usize,
    data: Vec<f64>,
}

impl Core {
    pub fn zeros(left: usize, phys: usize, right: usize) -> Self {
        Self { left, phys, right, data: vec![0.0; left * phys * right] }
    }

    pub fn from_data(left: usize, phys: usize, right: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), left * phys * right, "core buffer size");
        Self { left, phys, right, data }
    }

    /// Builds a core from per-physical-index `(left, right)` slices.
    pub fn from_slices(slices: &[DMatrix<f64>]) -> Self {
        let (left, right) = slices[0].shape();
        let phys = slices.len();
        let mut core = Self::zeros(left, phys, right);
        for (s, m) in slices.iter().enumerate() {
            debug_assert_eq!(m.shape(), (left, right));
            for b in 0..right {
                for a in 0..left {
                    core.data[a + left * (s + phys * b)] = m[(a, b)];
                }
            }
        }
        core
    }

    pub fn left(&self) -> usize {
        self.left
    }

    pub fn phys(&self) -> usize {
        self.phys
    }

    pub fn right(&self) -> usize {
        self.right
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.left, self.phys, self.right)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, a: usize, s: usize, b: usize) -> f64 {
        self.data[a + self.left * (s + self.phys * b)]
    }

    #[inline]
    pub fn set(&mut self, a: usize, s: usize, b: usize, v: f64) {
        self.data[a + self.left * (s + self.phys * b)] = v;
    }

    pub fn left_unfolding(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.data, self.left * self.phys, self.right)
    }

    pub fn right_unfolding(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.data, self.left, self.phys * self.right)
    }

    fn from_left_unfolding(m: DMatrix<f64>, left: usize, phys: usize) -> Self {
        let right = m.ncols();
        debug_assert_eq!(m.nrows(), left * phys);
        Self { left, phys, right, data: m.data.into() }
    }

    fn from_right_unfolding(m: DMatrix<f64>, phys: usize, right: usize) -> Self {
        let left = m.nrows();
        debug_assert_eq!(m.ncols(), phys * right);
        Self { left, phys, right, data: m.data.into() }
    }

    /// The `(left, right)` matrix for a fixed physical index.
    pub fn slice(&self, s: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.left, self.right, |a, b| self.get(a, s, b))
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    /// `m * self` contracted over the left bond.
    pub fn absorb_left(&self, m: &DMatrix<f64>) -> Self {
        let out = m * self.right_unfolding();
        Self::from_right_unfolding(out, self.phys, self.right)
    }

    /// `self * m` contracted over the right bond.
    pub fn absorb_right(&self, m: &DMatrix<f64>) -> Self {
        let out = self.left_unfolding() * m;
        Self::from_left_unfolding(out, self.left, self.phys)
    }

    /// Deviation of the left unfolding from having orthonormal columns.
    pub fn left_isometry_defect(&self) -> f64 {
        let g = self.left_unfolding();
        let gram = g.transpose() * g;
        (gram - DMatrix::identity(self.right, self.right)).amax()
    }

    /// Deviation of the right unfolding from having orthonormal rows.
    pub fn right_isometry_defect(&self) -> f64 {
        let g = self.right_unfolding();
        let gram = g * g.transpose();
        (gram - DMatrix::identity(self.left, self.left)).amax()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Left-orthogonalizes sites `0..stop` with QR, pushing the remainder into
/// site `stop`.
pub fn left_orthogonalize(cores: &mut [Core], stop: usize) {
    for i in 0..stop {
        let (left, phys) = (cores[i].left, cores[i].phys);
        let (q, r) = qr(cores[i].left_unfolding().into_owned());
        cores[i] = Core::from_left_unfolding(q, left, phys);
        cores[i + 1] = cores[i + 1].absorb_left(&r);
    }
}

/// Right-orthogonalizes sites `start+1..n` with QR of the transposed right
/// unfolding, pushing the remainder into site `start`.
pub fn right_orthogonalize(cores: &mut [Core], start: usize) {
    for i in (start + 1..cores.len()).rev() {
        let (phys, right) = (cores[i].phys, cores[i].right);
        let (q, r) = qr(cores[i].right_unfolding().transpose());
        cores[i] = Core::from_right_unfolding(q.transpose(), phys, right);
        cores[i - 1] = cores[i - 1].absorb_right(&r.transpose());
    }
}

/// Outcome of a right-to-left SVD truncation sweep.
#[derive(Debug, Clone, Default)]
pub struct SweepReport {
    /// Sum of squared discarded singular values over all bonds.
    pub discarded_sq: f64,
    /// Retained singular values of bond (0, 1), when n > 1.
    pub first_bond_spectrum: Option<Vec<f64>>,
}

/// Right-to-left SVD sweep. Assumes sites `0..n-1` are left-orthonormal so
/// that every local truncation acts at the orthogonality center. Leaves the
/// chain right-canonical with the center at site 0.
pub fn right_truncation_sweep(cores: &mut [Core], params: &TruncationParams) -> SweepReport {
    let mut report = SweepReport::default();
    for i in (1..cores.len()).rev() {
        let (phys, right) = (cores[i].phys, cores[i].right);
        let f = svd(cores[i].right_unfolding());
        let keep = retained_rank(&f.s, params);
        let tail = tail_weight(&f.s, keep);
        report.discarded_sq += tail * tail;
        let vt = f.vt.rows(0, keep).into_owned();
        let mut us = f.u.columns(0, keep).into_owned();
        for (j, mut col) in us.column_iter_mut().enumerate() {
            col *= f.s[j];
        }
        cores[i] = Core::from_right_unfolding(vt, phys, right);
        cores[i - 1] = cores[i - 1].absorb_right(&us);
        if i == 1 {
            report.first_bond_spectrum = Some(f.s[..keep].to_vec());
        }
    }
    report
}

/// Full compression: QR sweep left to right, then SVD truncation right to left.
pub fn compress(cores: &mut [Core], params: &TruncationParams) -> SweepReport {
    let n = cores.len();
    if n > 1 {
        left_orthogonalize(cores, n - 1);
    }
    right_truncation_sweep(cores, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unfoldings_share_layout() {
        let data: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let c = Core::from_data(2, 3, 2, data);
        let l = c.left_unfolding();
        let r = c.right_unfolding();
        for a in 0..2 {
            for s in 0..3 {
                for b in 0..2 {
                    assert_eq!(l[(a + 2 * s, b)], c.get(a, s, b));
                    assert_eq!(r[(a, s + 3 * b)], c.get(a, s, b));
                }
            }
        }
    }

    #[test]
    fn slices_round_trip() {
        let c = Core::from_data(2, 2, 3, (0..12).map(|v| v as f64 * 0.5).collect());
        let slices: Vec<_> = (0..2).map(|s| c.slice(s)).collect();
        assert_eq!(Core::from_slices(&slices), c);
    }
}
