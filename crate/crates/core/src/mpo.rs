//! Matrix product operators: arithmetic, application to states and analytic
//! construction of shift and centered finite-difference operators.
//!
//! Operator cores are stored as [`Core`]s with a fused physical index
//! `p = s + d * s'`, where `s` is the output (row) digit and `s'` the input
//! (column) digit. This lets operators reuse the state sweeps unchanged.

use nalgebra::DMatrix;

use crate::chain::Core;
use crate::error::{Error, Result};
use crate::mps::{Mps, TruncationParams};
use crate::tensorization::{tensor_digits, Boundary, DenseTensor, GridSpec, Layout};

/// Default cap on N for operator densification.
pub const DENSE_OPERATOR_CAP: usize = 1 << 10;

/// Threshold used when compressing operators assembled from exact pieces:
/// drops only singular values at roundoff level relative to the bond's
/// largest one.
pub const OPERATOR_EPS: f64 = 1e-13;

pub fn operator_exact() -> TruncationParams {
    TruncationParams { chi_max: usize::MAX, eps_svd: OPERATOR_EPS }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mpo {
    d: usize,
    cores: Vec<Core>,
}

impl Mpo {
    /// `cores` must have fused physical dimension `d * d`.
    pub fn from_cores(d: usize, cores: Vec<Core>) -> Result<Self> {
        if cores.iter().any(|c| c.phys() != d * d) {
            return Err(Error::Shape(format!("operator cores need physical dimension {}", d * d)));
        }
        // reuse the chain validation
        let chain = Mps::from_cores(cores)?;
        Ok(Self { d, cores: chain.into_cores() })
    }

    fn from_chain(d: usize, chain: Mps) -> Self {
        Self { d, cores: chain.into_cores() }
    }

    fn as_chain(&self) -> Mps {
        Mps::from_cores(self.cores.clone()).expect("valid operator chain")
    }

    pub fn identity(n: usize, d: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Shape("identity needs n >= 1".into()));
        }
        Ok(Self { d, cores: vec![identity_core(d, 1); n] })
    }

    pub fn n(&self) -> usize {
        self.cores.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn cores(&self) -> &[Core] {
        &self.cores
    }

    /// `W_i[a, s, s', b]`.
    pub fn entry(&self, site: usize, a: usize, s: usize, s_in: usize, b: usize) -> f64 {
        self.cores[site].get(a, s + self.d * s_in, b)
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        std::iter::once(1)
            .chain(self.cores.iter().map(|c| c.right()))
            .collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// `sum_i R_{i-1} d^2 R_i`.
    pub fn num_params(&self) -> usize {
        self.cores.iter().map(|c| c.data().len()).sum()
    }

    fn check_compatible(&self, n: usize, d: usize) -> Result<()> {
        if self.n() != n || self.d != d {
            return Err(Error::Shape(format!(
                "operator on {} sites (d = {}) vs {n} sites (d = {d})",
                self.n(),
                self.d
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        other.check_compatible(self.n(), self.d)?;
        Ok(Self::from_chain(self.d, self.as_chain().add(&other.as_chain())?))
    }

    pub fn scale(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.cores[0].scale(alpha);
        out
    }

    /// Two-sweep truncation of the operator chain.
    pub fn compress(&self, params: &TruncationParams) -> Self {
        Self::from_chain(self.d, self.as_chain().truncate(params).0)
    }

    /// MPO-MPS contraction; output bond dimensions are `R_i * D_i`. No
    /// truncation happens here.
    pub fn apply(&self, x: &Mps) -> Result<Mps> {
        self.check_compatible(x.n(), x.d())?;
        let d = self.d;
        let cores = self
            .cores
            .iter()
            .zip(x.cores())
            .map(|(w, a)| {
                let a_slices: Vec<DMatrix<f64>> = (0..d).map(|s| a.slice(s)).collect();
                let slices: Vec<DMatrix<f64>> = (0..d)
                    .map(|s| {
                        let mut acc = DMatrix::zeros(w.left() * a.left(), w.right() * a.right());
                        for (s_in, a_s) in a_slices.iter().enumerate() {
                            let w_slice = w.slice(s + d * s_in);
                            if w_slice.iter().any(|&v| v != 0.0) {
                                acc += w_slice.kronecker(a_s);
                            }
                        }
                        acc
                    })
                    .collect();
                Core::from_slices(&slices)
            })
            .collect();
        Mps::from_cores(cores)
    }

    /// TT-SVD of an N x N matrix given in grid indexing, with row and column
    /// digits fused per site according to `layout`.
    pub fn from_dense(m: &DMatrix<f64>, layout: &Layout, params: &TruncationParams) -> Result<Self> {
        let (d, n) = (layout.d(), layout.n());
        let total = layout.total_points();
        if m.shape() != (total, total) {
            return Err(Error::Shape(format!(
                "matrix is {:?}, layout expects {total} x {total}",
                m.shape()
            )));
        }
        let cap = DENSE_OPERATOR_CAP;
        if total > cap {
            return Err(Error::Capacity { what: "dense operator", needed: total, cap });
        }
        let perm = layout.grid_to_tensor();
        let dd = d * d;
        let mut data = vec![0.0; total * total];
        for (row, &t_row) in perm.iter().enumerate() {
            let out_digits = tensor_digits(t_row, d, n);
            for (col, &t_col) in perm.iter().enumerate() {
                let in_digits = tensor_digits(t_col, d, n);
                let idx = out_digits
                    .iter()
                    .zip(&in_digits)
                    .fold(0, |acc, (&s, &s_in)| acc * dd + s + d * s_in);
                data[idx] = m[(row, col)];
            }
        }
        let chain = Mps::from_dense(&DenseTensor::new(dd, n, data)?, params)?;
        Ok(Self::from_chain(d, chain))
    }

    /// Dense matrix indexed by big-endian site digits.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let (d, n) = (self.d, self.n());
        let total = d.pow(n as u32);
        let cap = DENSE_OPERATOR_CAP;
        if total > cap {
            return Err(Error::Capacity { what: "dense operator", needed: total, cap });
        }
        let t = self.as_chain().to_dense_capped(usize::MAX)?;
        let mut m = DMatrix::zeros(total, total);
        for (idx, &v) in t.data.iter().enumerate() {
            let (mut row, mut col) = (0, 0);
            for p in tensor_digits(idx, d * d, n) {
                row = row * d + p % d;
                col = col * d + p / d;
            }
            m[(row, col)] = v;
        }
        Ok(m)
    }

    /// Dense matrix indexed by flat grid positions under `layout`.
    pub fn to_dense_grid(&self, layout: &Layout) -> Result<DMatrix<f64>> {
        let m = self.to_dense()?;
        let perm = layout.grid_to_tensor();
        let total = perm.len();
        if m.nrows() != total {
            return Err(Error::Shape("layout does not match operator size".into()));
        }
        Ok(DMatrix::from_fn(total, total, |i, j| m[(perm[i], perm[j])]))
    }

    /// Index shift `S[i, i + offset] = 1` on a binary chain of `n` sites,
    /// wrapping for periodic boundaries and truncated for open ones. Built
    /// from carry-propagation cores of bond dimension at most 2.
    pub fn shift(n: usize, d: usize, offset: i32, boundary: Boundary) -> Result<Self> {
        if d != 2 {
            return Err(Error::Unsupported(format!(
                "analytic shift needs d = 2 (got {d}); use Mpo::from_dense"
            )));
        }
        if offset != 1 && offset != -1 {
            return Err(Error::Unsupported(format!("shift offset {offset} (only +-1)")));
        }
        if n == 0 {
            return Err(Error::Shape("shift needs n >= 1".into()));
        }
        // The right bond carries the incoming carry from less significant
        // digits, the left bond the outgoing one.
        let site = |carry_in: usize| -> [(usize, usize, usize); 2] {
            let mut out = [(0, 0, 0); 2];
            for (s, slot) in out.iter_mut().enumerate() {
                let v = s as i32 + offset * carry_in as i32;
                let s_in = v.rem_euclid(2);
                let carry_out = ((v - s_in) / 2).unsigned_abs() as usize;
                *slot = (s, s_in as usize, carry_out);
            }
            out
        };
        let cores = (0..n)
            .map(|i| {
                let first = i == 0;
                let last = i + 1 == n;
                let left = if first { 1 } else { 2 };
                let right = if last { 1 } else { 2 };
                let mut c = Core::zeros(left, 4, right);
                for b in 0..right {
                    let carry_in = if last { 1 } else { b };
                    for (s, s_in, carry_out) in site(carry_in) {
                        let a = if first {
                            if boundary == Boundary::DirichletZero && carry_out != 0 {
                                continue;
                            }
                            0
                        } else {
                            carry_out
                        };
                        c.set(a, s + 2 * s_in, b, 1.0);
                    }
                }
                c
            })
            .collect();
        let out = Self::from_cores(2, cores)?;
        debug_assert!(out.max_bond() <= 2);
        Ok(out)
    }

    /// Embeds a one-axis operator into the full chain of `layout`, acting as
    /// the identity on every other axis.
    pub fn lift_to_axis(&self, axis: usize, layout: &Layout) -> Result<Self> {
        let k = *layout.axis_digits().get(axis).ok_or_else(|| {
            Error::Shape(format!("axis {axis} not present in layout"))
        })?;
        if k != self.n() || layout.d() != self.d {
            return Err(Error::Shape(format!(
                "operator has {} sites (d = {}), axis {axis} has {k} digits (d = {})",
                self.n(),
                self.d,
                layout.d()
            )));
        }
        let mut next = 0usize;
        let mut cores = Vec::with_capacity(layout.n());
        for sd in layout.ordering() {
            if sd.axis == axis {
                if sd.significance + next + 1 != k {
                    return Err(Error::Shape(
                        "axis digits must appear most significant first".into(),
                    ));
                }
                cores.push(self.cores[next].clone());
                next += 1;
            } else {
                let bond = if next < k { self.cores[next].left() } else { 1 };
                cores.push(identity_core(self.d, bond));
            }
        }
        Self::from_cores(self.d, cores)
    }
}

/// `W[a, s, s', b] = delta(a, b) delta(s, s')`.
fn identity_core(d: usize, bond: usize) -> Core {
    let mut c = Core::zeros(bond, d * d, bond);
    for a in 0..bond {
        for s in 0..d {
            c.set(a, s + d * s, a, 1.0);
        }
    }
    c
}

fn shift_pair(n: usize, boundary: Boundary) -> Result<(Mpo, Mpo)> {
    Ok((Mpo::shift(n, 2, 1, boundary)?, Mpo::shift(n, 2, -1, boundary)?))
}

/// Centered first difference `(S+ - S-) / (2h)` on a binary chain.
pub fn first_difference(n: usize, h: f64, boundary: Boundary) -> Result<Mpo> {
    let (plus, minus) = shift_pair(n, boundary)?;
    Ok(plus
        .add(&minus.scale(-1.0))?
        .scale(0.5 / h)
        .compress(&operator_exact()))
}

/// Centered second difference `(S+ - 2I + S-) / h^2` on a binary chain.
pub fn second_difference(n: usize, h: f64, boundary: Boundary) -> Result<Mpo> {
    let (plus, minus) = shift_pair(n, boundary)?;
    Ok(plus
        .add(&minus)?
        .add(&Mpo::identity(n, 2)?.scale(-2.0))?
        .scale(1.0 / (h * h))
        .compress(&operator_exact()))
}

fn require_1d(grid: &GridSpec) -> Result<()> {
    if grid.spatial_dim() != 1 {
        return Err(Error::Config(format!(
            "expected a 1D grid, got {} dimensions",
            grid.spatial_dim()
        )));
    }
    Ok(())
}

pub fn d1_mpo(grid: &GridSpec) -> Result<Mpo> {
    require_1d(grid)?;
    first_difference(grid.n(), grid.h(0), grid.boundary())
}

pub fn d2_mpo(grid: &GridSpec) -> Result<Mpo> {
    require_1d(grid)?;
    second_difference(grid.n(), grid.h(0), grid.boundary())
}

/// Per-axis first difference on the full chain of `layout`.
pub fn axis_first_difference(grid: &GridSpec, axis: usize, layout: &Layout) -> Result<Mpo> {
    first_difference(grid.digits(axis), grid.h(axis), grid.boundary())?.lift_to_axis(axis, layout)
}

/// Per-axis second difference on the full chain of `layout`.
pub fn axis_second_difference(grid: &GridSpec, axis: usize, layout: &Layout) -> Result<Mpo> {
    second_difference(grid.digits(axis), grid.h(axis), grid.boundary())?.lift_to_axis(axis, layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorization::{decode, encode, LayoutVariant};
    use crate::test_support::*;

    fn seq(n: usize) -> Layout {
        Layout::new(LayoutVariant::Sequential, 2, &[n]).unwrap()
    }

    fn shift_matrix(nn: usize, offset: i64, periodic: bool) -> DMatrix<f64> {
        DMatrix::from_fn(nn, nn, |i, j| {
            let target = i as i64 + offset;
            let hit = if periodic {
                target.rem_euclid(nn as i64) as usize == j
            } else {
                target >= 0 && target < nn as i64 && target as usize == j
            };
            if hit { 1.0 } else { 0.0 }
        })
    }

    fn apply_dense(o: &Mpo, x: &Mps) -> Vec<f64> {
        o.apply(x).unwrap().to_dense().unwrap().data
    }

    #[test]
    fn identity_behaviour() {
        let id = Mpo::identity(3, 2).unwrap();
        assert_eq!(id.to_dense().unwrap(), DMatrix::identity(8, 8));
        let mut rng = rng(10);
        let x = random_mps(&mut rng, 2, 3, 2);
        assert!(rel_err(&apply_dense(&id, &x), &x.to_dense().unwrap().data) < 1e-12);
        let zero = id.add(&id.scale(-1.0)).unwrap();
        assert!(apply_dense(&zero, &x).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn shift_matches_permutation() {
        for n in 1..=6 {
            let nn = 1 << n;
            for (offset, periodic) in [(1, true), (-1, true), (1, false), (-1, false)] {
                let bc = if periodic { Boundary::Periodic } else { Boundary::DirichletZero };
                let s = Mpo::shift(n, 2, offset as i32, bc).unwrap();
                assert!(s.max_bond() <= 2);
                assert_eq!(s.to_dense().unwrap(), shift_matrix(nn, offset, periodic), "n={n} offset={offset} periodic={periodic}");
            }
        }
        let open = Mpo::shift(3, 2, 1, Boundary::DirichletZero).unwrap().to_dense().unwrap();
        assert!(open.row(7).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shifts_are_inverse_when_periodic() {
        let plus = Mpo::shift(4, 2, 1, Boundary::Periodic).unwrap().to_dense().unwrap();
        let minus = Mpo::shift(4, 2, -1, Boundary::Periodic).unwrap().to_dense().unwrap();
        assert_eq!(plus * minus, DMatrix::identity(16, 16));
    }

    #[test]
    fn shift_rejects_other_d() {
        assert!(matches!(Mpo::shift(3, 3, 1, Boundary::Periodic), Err(Error::Unsupported(_))));
    }

    #[test]
    fn open_second_difference_is_tridiagonal() {
        let grid = GridSpec::unit(2, &[16], Boundary::DirichletZero).unwrap();
        let h = grid.h(0);
        let m = d2_mpo(&grid).unwrap().to_dense().unwrap();
        let expected = DMatrix::from_fn(16, 16, |i, j| match i.abs_diff(j) {
            0 => -2.0 / (h * h),
            1 => 1.0 / (h * h),
            _ => 0.0,
        });
        assert!((m - expected).amax() <= 1e-12 / (h * h));
    }

    #[test]
    fn periodic_second_difference_kills_constants() {
        let grid = GridSpec::unit(2, &[256], Boundary::Periodic).unwrap();
        let ones = Mps::ones(2, 8).unwrap();
        let out = apply_dense(&d2_mpo(&grid).unwrap(), &ones);
        assert!(out.iter().all(|v| v.abs() < 1e-10 * grid.h(0).powi(-2)));
    }

    #[test]
    fn diagonal_from_dense_acts_as_hadamard() {
        let mut rng = rng(11);
        let v = random_vec(&mut rng, 32);
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(v.clone()));
        let op = Mpo::from_dense(&diag, &seq(5), &TruncationParams::exact()).unwrap();
        assert!((op.to_dense().unwrap() - &diag).amax() < 1e-12);
        let x = random_mps(&mut rng, 2, 5, 3);
        let vm = Mps::from_vector(v, 2, 5, &TruncationParams::exact()).unwrap();
        let via_op = apply_dense(&op, &x);
        let via_had = x.hadamard(&vm).unwrap().to_dense().unwrap().data;
        assert!(rel_err(&via_op, &via_had) < 1e-12);
    }

    #[test]
    fn dense_round_trip_random_matrix() {
        let mut rng = rng(12);
        let m = DMatrix::from_vec(64, 64, random_vec(&mut rng, 64 * 64));
        let op = Mpo::from_dense(&m, &seq(6), &TruncationParams::exact()).unwrap();
        assert!((op.to_dense().unwrap() - m).amax() <= 1e-12);
    }

    #[test]
    fn add_matches_dense_sum() {
        let mut rng = rng(13);
        let a = DMatrix::from_vec(64, 64, random_vec(&mut rng, 4096));
        let b = shift_matrix(64, 1, true);
        let lay = seq(6);
        let oa = Mpo::from_dense(&a, &lay, &TruncationParams::exact()).unwrap();
        let ob = Mpo::shift(6, 2, 1, Boundary::Periodic).unwrap();
        let sum = oa.add(&ob).unwrap().to_dense().unwrap();
        assert!((sum - (a + b)).amax() < 1e-12);
    }

    #[test]
    fn compress_exact_preserves_operator() {
        let grid = GridSpec::unit(2, &[64], Boundary::Periodic).unwrap();
        let (p, m) = shift_pair(6, Boundary::Periodic).unwrap();
        let raw = p.add(&m.scale(-1.0)).unwrap();
        let c = raw.compress(&TruncationParams::exact());
        assert!((c.to_dense().unwrap() - raw.to_dense().unwrap()).amax() < 1e-12);
        let d1 = d1_mpo(&grid).unwrap();
        assert!(d1.max_bond() <= raw.max_bond());
    }

    #[test]
    fn apply_bond_profile_is_product() {
        let mut rng = rng(14);
        let x = random_mps(&mut rng, 2, 6, 3);
        let op = Mpo::shift(6, 2, 1, Boundary::Periodic).unwrap();
        let y = op.apply(&x).unwrap();
        let expected: Vec<usize> = op
            .bond_dims()
            .iter()
            .zip(x.bond_dims())
            .map(|(r, d)| r * d)
            .collect();
        assert_eq!(y.bond_dims(), expected);
    }

    #[test]
    fn first_difference_on_sine_is_second_order() {
        let grid = GridSpec::unit(2, &[512], Boundary::Periodic).unwrap();
        let lay = seq(9);
        let u = grid.sample(|x| (2.0 * std::f64::consts::PI * x[0]).sin());
        let x = Mps::from_dense(&encode(&u, &lay).unwrap(), &TruncationParams::exact()).unwrap();
        let du = decode(
            &d1_mpo(&grid).unwrap().apply(&x).unwrap().to_dense().unwrap(),
            &lay,
        )
        .unwrap();
        // dense stencil product
        let h = grid.h(0);
        let nn = u.len();
        let stencil: Vec<f64> = (0..nn)
            .map(|i| (u[(i + 1) % nn] - u[(i + nn - 1) % nn]) / (2.0 * h))
            .collect();
        assert!(max_abs_diff(&du, &stencil) < 1e-10);
        // truncation error of the centered stencil: (2pi)^3 h^2 / 6 * |cos|
        let exact = grid.sample(|x| 2.0 * std::f64::consts::PI * (2.0 * std::f64::consts::PI * x[0]).cos());
        let c = (2.0 * std::f64::consts::PI).powi(3) / 6.0;
        assert!(max_abs_diff(&du, &exact) <= c * h * h * 1.0001);
    }

    #[test]
    fn lift_identity_and_null_space() {
        let lay = Layout::new(LayoutVariant::Interleaved, 2, &[2, 2]).unwrap();
        let id = Mpo::identity(2, 2).unwrap().lift_to_axis(0, &lay).unwrap();
        assert_eq!(id.to_dense().unwrap(), DMatrix::identity(16, 16));

        let grid = GridSpec::unit(2, &[4, 4], Boundary::Periodic).unwrap();
        let d2x = axis_second_difference(&grid, 0, &lay).unwrap();
        // constant along x, varying along y
        let u = grid.sample(|p| 1.0 + p[1] * p[1]);
        let x = Mps::from_dense(&encode(&u, &lay).unwrap(), &TruncationParams::exact()).unwrap();
        let out = d2x.apply(&x).unwrap().to_dense().unwrap().data;
        assert!(out.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn lift_rejects_mismatched_chain() {
        let lay = Layout::new(LayoutVariant::Interleaved, 2, &[3, 3]).unwrap();
        let op = Mpo::identity(2, 2).unwrap();
        assert!(matches!(op.lift_to_axis(0, &lay), Err(Error::Shape(_))));
    }
}
