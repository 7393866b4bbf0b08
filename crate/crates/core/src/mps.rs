//! Matrix product states: TT-SVD construction, canonical forms, truncation
//! and the elementwise algebra needed for compressed time stepping.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chain::{self, Core};
use crate::error::{Error, Result};
use crate::linalg::{qr, retained_rank, svd, tail_weight};
use crate::tensorization::DenseTensor;

/// Default cap on the number of entries `to_dense` will materialize.
pub const DENSE_CAP: usize = 1 << 20;

/// Bond cap and relative singular-value threshold of the truncation
/// projection. `chi_max == usize::MAX` means no cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationParams {
    pub chi_max: usize,
    pub eps_svd: f64,
}

impl TruncationParams {
    pub fn new(chi_max: usize, eps_svd: f64) -> Result<Self> {
        if chi_max < 1 {
            return Err(Error::Config("chi_max must be >= 1".into()));
        }
        if !(eps_svd >= 0.0) {
            return Err(Error::Config(format!("eps_svd = {eps_svd} must be >= 0")));
        }
        Ok(Self { chi_max, eps_svd })
    }

    /// No cap and no threshold: only exactly-zero singular values are dropped.
    pub const fn exact() -> Self {
        Self { chi_max: usize::MAX, eps_svd: 0.0 }
    }

    pub fn is_uncapped(&self) -> bool {
        self.chi_max == usize::MAX
    }
}

/// Chain of order-3 cores `(D_{i-1}, d, D_i)` with `D_0 = D_n = 1`.
///
/// Sites are 0-based. When `center` is set, every site left of it is
/// left-orthonormal and every site right of it is right-orthonormal. The
/// cores always carry the full tensor; `center_singular_values` records the
/// Schmidt spectrum of bond `(center, center + 1)` without it being divided
/// out of the center core.
#[derive(Debug, Clone, PartialEq)]
pub struct Mps {
    d: usize,
    cores: Vec<Core>,
    center: Option<usize>,
    center_singular_values: Option<Vec<f64>>,
}

impl Mps {
    pub fn from_cores(cores: Vec<Core>) -> Result<Self> {
        if cores.is_empty() {
            return Err(Error::Shape("an MPS needs at least one site".into()));
        }
        let d = cores[0].phys();
        if cores[0].left() != 1 || cores[cores.len() - 1].right() != 1 {
            return Err(Error::Shape("boundary bond dimensions must be 1".into()));
        }
        for (i, w) in cores.windows(2).enumerate() {
            if w[0].right() != w[1].left() {
                return Err(Error::Shape(format!(
                    "bond {} mismatch: {} vs {}",
                    i + 1,
                    w[0].right(),
                    w[1].left()
                )));
            }
        }
        if cores.iter().any(|c| c.phys() != d) {
            return Err(Error::Shape("non-uniform physical dimension".into()));
        }
        Ok(Self { d, cores, center: None, center_singular_values: None })
    }

    /// Product state built from one local vector per site.
    pub fn product(vectors: &[Vec<f64>]) -> Result<Self> {
        let cores = vectors
            .iter()
            .map(|v| Core::from_data(1, v.len(), 1, v.clone()))
            .collect();
        Self::from_cores(cores)
    }

    /// Computational basis state with the given site digits.
    pub fn basis(d: usize, digits: &[usize]) -> Result<Self> {
        let vectors: Vec<Vec<f64>> = digits
            .iter()
            .map(|&s| {
                let mut v = vec![0.0; d];
                v[s] = 1.0;
                v
            })
            .collect();
        Self::product(&vectors)
    }

    pub fn ones(d: usize, n: usize) -> Result<Self> {
        Self::product(&vec![vec![1.0; d]; n])
    }

    pub fn zero(d: usize, n: usize) -> Result<Self> {
        let mut m = Self::ones(d, n)?;
        m.cores[0].scale(0.0);
        Ok(m)
    }

    /// TT-SVD: sequential left-to-right SVDs of the unfoldings, truncated per
    /// `params`.
    pub fn from_dense(t: &DenseTensor, params: &TruncationParams) -> Result<Self> {
        Ok(Self::from_dense_with_weight(t, params)?.0)
    }

    /// [`Mps::from_dense`] that also returns the discarded weight.
    pub fn from_dense_with_weight(t: &DenseTensor, params: &TruncationParams) -> Result<(Self, f64)> {
        let (d, n) = (t.d, t.n);
        if n == 0 || t.data.len() != d.pow(n as u32) {
            return Err(Error::Shape(format!(
                "tensor data has {} entries, not {d}^{n}",
                t.data.len()
            )));
        }
        let mut cores = Vec::with_capacity(n);
        let mut discarded_sq = 0.0;
        // remainder, row-major (rank, rest) with `rest` big-endian over the remaining sites
        let mut rem = t.data.clone();
        let mut rank = 1usize;
        let mut rest = t.data.len();
        for _ in 0..n - 1 {
            rest /= d;
            let rows = rank * d;
            let m = DMatrix::from_row_slice(rows, rest, &rem);
            let f = svd(m.as_view());
            let keep = retained_rank(&f.s, params);
            let tail = tail_weight(&f.s, keep);
            discarded_sq += tail * tail;
            let mut core = Core::zeros(rank, d, keep);
            for a in 0..rank {
                for s in 0..d {
                    for b in 0..keep {
                        core.set(a, s, b, f.u[(a * d + s, b)]);
                    }
                }
            }
            cores.push(core);
            let mut next = vec![0.0; keep * rest];
            for b in 0..keep {
                let sv = f.s[b];
                for c in 0..rest {
                    next[b * rest + c] = sv * f.vt[(b, c)];
                }
            }
            rem = next;
            rank = keep;
        }
        let mut last = Core::zeros(rank, d, 1);
        for a in 0..rank {
            for s in 0..d {
                last.set(a, s, 0, rem[a * d + s]);
            }
        }
        cores.push(last);
        let mut out = Self::from_cores(cores)?;
        out.center = Some(n - 1);
        Ok((out, discarded_sq.sqrt()))
    }

    pub fn from_vector(data: Vec<f64>, d: usize, n: usize, params: &TruncationParams) -> Result<Self> {
        Self::from_dense(&DenseTensor::new(d, n, data)?, params)
    }

    pub fn to_dense(&self) -> Result<DenseTensor> {
        self.to_dense_capped(DENSE_CAP)
    }

    /// Contracts the chain into a dense tensor, refusing if it would hold
    /// more than `cap` entries.
    pub fn to_dense_capped(&self, cap: usize) -> Result<DenseTensor> {
        let n = self.n();
        let needed = self
            .d
            .checked_pow(n as u32)
            .filter(|&v| v <= cap)
            .ok_or(Error::Capacity {
                what: "dense MPS",
                needed: self.d.saturating_pow(n as u32),
                cap,
            })?;
        // running contraction as a (prefix, bond) matrix, prefix big-endian
        let mut acc = DMatrix::from_element(1, 1, 1.0);
        for core in &self.cores {
            let (l, p, r) = core.shape();
            let prefix = acc.nrows();
            let mut next = DMatrix::zeros(prefix * p, r);
            for s in 0..p {
                let prod = &acc * core.slice(s);
                for row in 0..prefix {
                    for b in 0..r {
                        next[(row * p + s, b)] = prod[(row, b)];
                    }
                }
            }
            debug_assert_eq!(l, acc.ncols());
            acc = next;
        }
        debug_assert_eq!(acc.nrows(), needed);
        DenseTensor::new(self.d, n, acc.column(0).iter().copied().collect())
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

    pub fn into_cores(self) -> Vec<Core> {
        self.cores
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    pub fn center_singular_values(&self) -> Option<&[f64]> {
        self.center_singular_values.as_deref()
    }

    /// `(D_0, ..., D_n)`.
    pub fn bond_dims(&self) -> Vec<usize> {
        std::iter::once(1)
            .chain(self.cores.iter().map(|c| c.right()))
            .collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn num_params(&self) -> usize {
        self.cores.iter().map(|c| c.data().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.cores.iter().all(Core::is_finite)
    }

    /// Mixed-canonical form centered at site `k` (0-based).
    pub fn canonicalize(&self, k: usize) -> Result<Self> {
        let n = self.n();
        if k >= n {
            return Err(Error::Range(format!("center {k} outside 0..{n}")));
        }
        let mut cores = self.cores.clone();
        chain::left_orthogonalize(&mut cores, k);
        chain::right_orthogonalize(&mut cores, k);
        let spectrum = (k + 1 < n).then(|| svd(cores[k].left_unfolding()).s);
        Ok(Self {
            d: self.d,
            cores,
            center: Some(k),
            center_singular_values: spectrum,
        })
    }

    /// Canonicalization sweep followed by SVD truncation at every bond.
    /// Returns the truncated state (center at site 0) and the discarded
    /// weight `sqrt(sum of squared discarded singular values)`.
    pub fn truncate(&self, params: &TruncationParams) -> (Self, f64) {
        let mut cores = self.cores.clone();
        let report = chain::compress(&mut cores, params);
        (
            Self {
                d: self.d,
                cores,
                center: Some(0),
                center_singular_values: report.first_bond_spectrum,
            },
            report.discarded_sq.sqrt(),
        )
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.n() != other.n() || self.d != other.d {
            return Err(Error::Shape(format!(
                "MPS of {} sites (d = {}) vs {} sites (d = {})",
                self.n(),
                self.d,
                other.n(),
                other.d
            )));
        }
        Ok(())
    }

    /// Euclidean inner product of the represented tensors.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        let mut env = DMatrix::from_element(1, 1, 1.0);
        for (a, b) in self.cores.iter().zip(&other.cores) {
            let mut next = DMatrix::zeros(a.right(), b.right());
            for s in 0..self.d {
                next += a.slice(s).transpose() * &env * b.slice(s);
            }
            env = next;
        }
        Ok(env[(0, 0)])
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).expect("self-compatible").max(0.0).sqrt()
    }

    pub fn scale(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        let site = out.center.unwrap_or(0);
        out.cores[site].scale(alpha);
        if let Some(sv) = out.center_singular_values.as_mut() {
            sv.iter_mut().for_each(|v| *v *= alpha.abs());
        }
        out
    }

    /// Direct-sum representation of the entrywise sum.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let n = self.n();
        if n == 1 {
            let mut core = self.cores[0].clone();
            core.data_mut()
                .iter_mut()
                .zip(other.cores[0].data())
                .for_each(|(x, y)| *x += y);
            return Self::from_cores(vec![core]);
        }
        let cores = self
            .cores
            .iter()
            .zip(&other.cores)
            .enumerate()
            .map(|(i, (a, b))| {
                let first = i == 0;
                let last = i == n - 1;
                let left = if first { 1 } else { a.left() + b.left() };
                let right = if last { 1 } else { a.right() + b.right() };
                let mut c = Core::zeros(left, self.d, right);
                let (boff_l, boff_r) = (
                    if first { 0 } else { a.left() },
                    if last { 0 } else { a.right() },
                );
                for s in 0..self.d {
                    for x in 0..a.right() {
                        for y in 0..a.left() {
                            c.set(y, s, x, a.get(y, s, x));
                        }
                    }
                    for x in 0..b.right() {
                        for y in 0..b.left() {
                            c.set(boff_l + y, s, boff_r + x, b.get(y, s, x));
                        }
                    }
                }
                c
            })
            .collect();
        Self::from_cores(cores)
    }

    /// Entrywise product; bond dimensions multiply.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let cores = self
            .cores
            .iter()
            .zip(&other.cores)
            .map(|(a, b)| {
                let slices: Vec<DMatrix<f64>> = (0..self.d)
                    .map(|s| a.slice(s).kronecker(&b.slice(s)))
                    .collect();
                Core::from_slices(&slices)
            })
            .collect();
        Self::from_cores(cores)
    }

    /// Entrywise product followed by truncation, equal to
    /// `self.hadamard(other)?.truncate(params)` up to roundoff. The product
    /// cores are never formed: each one is contracted with the remainder of
    /// the previous QR step, so the left bonds stay at most `d` times the
    /// previous left bond instead of growing to the product of both inputs.
    pub fn hadamard_truncated(&self, other: &Self, params: &TruncationParams) -> Result<(Self, f64)> {
        self.check_compatible(other)?;
        let (d, n) = (self.d, self.n());
        let mut cores = Vec::with_capacity(n);
        // remainder R[r, a, b] over the two input bonds, stored at (r + k * b, a)
        let mut carry = DMatrix::from_element(1, 1, 1.0);
        let mut k = 1usize;
        for (i, (a, b)) in self.cores.iter().zip(&other.cores).enumerate() {
            let (ra, rb) = (a.right(), b.right());
            let mut unf = DMatrix::zeros(k * d, ra * rb);
            for s in 0..d {
                let y = &carry * a.slice(s);
                let yp = DMatrix::from_fn(k * ra, b.left(), |row, bb| y[(row % k + k * bb, row / k)]);
                let z = yp * b.slice(s);
                for bp in 0..rb {
                    for ap in 0..ra {
                        for r in 0..k {
                            unf[(r + k * s, ap + ra * bp)] = z[(r + k * ap, bp)];
                        }
                    }
                }
            }
            if i + 1 == n {
                cores.push(Core::from_data(k, d, 1, unf.data.into()));
            } else {
                let (q, rem) = qr(unf);
                let kn = q.ncols();
                cores.push(Core::from_data(k, d, kn, q.data.into()));
                carry = DMatrix::from_fn(kn * rb, ra, |row, ap| rem[(row % kn, ap + ra * (row / kn))]);
                k = kn;
            }
        }
        let report = chain::right_truncation_sweep(&mut cores, params);
        Ok((
            Self {
                d,
                cores,
                center: Some(0),
                center_singular_values: report.first_bond_spectrum,
            },
            report.discarded_sq.sqrt(),
        ))
    }

    /// Largest deviation from orthonormality over the left-canonical sites
    /// (before the center) and right-canonical sites (after it).
    pub fn isometry_defect(&self) -> Option<f64> {
        let k = self.center?;
        let left = self.cores[..k].iter().map(Core::left_isometry_defect);
        let right = self.cores[k + 1..].iter().map(Core::right_isometry_defect);
        Some(left.chain(right).fold(0.0, f64::max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::*;
    use proptest::prelude::*;

    fn exact() -> TruncationParams {
        TruncationParams::exact()
    }

    fn dense_vec(m: &Mps) -> Vec<f64> {
        m.to_dense().unwrap().data
    }

    #[test]
    fn rank_one_tensor_has_unit_bonds() {
        let vs: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0 + i as f64, 0.5 - i as f64]).collect();
        let prod = Mps::product(&vs).unwrap();
        let t = prod.to_dense().unwrap();
        let m = Mps::from_dense(&t, &TruncationParams::new(usize::MAX, 1e-12).unwrap()).unwrap();
        assert!(m.bond_dims().iter().all(|&b| b == 1));
        assert!(rel_err(&dense_vec(&m), &t.data) < 1e-12);
    }

    #[test]
    fn random_tensor_respects_rank_bound() {
        let mut rng = rng(1);
        let t = DenseTensor::new(2, 9, random_vec(&mut rng, 512)).unwrap();
        let m = Mps::from_dense(&t, &exact()).unwrap();
        assert!(m.max_bond() <= 16);
        for (i, &b) in m.bond_dims().iter().enumerate() {
            assert!(b <= 2usize.pow(i.min(9 - i) as u32));
        }
        assert!(rel_err(&dense_vec(&m), &t.data) < 1e-12);
    }

    #[test]
    fn single_site_dense() {
        let m = Mps::product(&[vec![3.0, -1.0, 2.0]]).unwrap();
        assert_eq!(dense_vec(&m), vec![3.0, -1.0, 2.0]);
    }

    #[test]
    fn two_site_hand_contraction() {
        let a = Core::from_slices(&[
            DMatrix::from_row_slice(1, 2, &[1.0, 2.0]),
            DMatrix::from_row_slice(1, 2, &[-1.0, 0.5]),
        ]);
        let b = Core::from_slices(&[
            DMatrix::from_row_slice(2, 1, &[3.0, 4.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, -2.0]),
        ]);
        let m = Mps::from_cores(vec![a, b]).unwrap();
        // psi[s1, s2] = A^{s1} B^{s2}
        assert_eq!(dense_vec(&m), vec![11.0, -4.0, -1.0, -1.0]);
    }

    #[test]
    fn dense_cap_is_enforced() {
        let m = Mps::ones(2, 12).unwrap();
        assert!(matches!(m.to_dense_capped(1 << 10), Err(Error::Capacity { .. })));
    }

    #[test]
    fn canonical_center_last_concentrates_norm() {
        let mut rng = rng(2);
        let m = random_mps(&mut rng, 2, 7, 4);
        let c = m.canonicalize(6).unwrap();
        let last = c.cores()[6].data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((last - m.norm()).abs() < 1e-12 * m.norm());
        assert!(c.center_singular_values().is_none());
    }

    #[test]
    fn canonicalize_is_idempotent() {
        let mut rng = rng(3);
        let m = random_mps(&mut rng, 2, 6, 3).canonicalize(2).unwrap();
        let again = m.canonicalize(2).unwrap();
        assert!(rel_err(&dense_vec(&again), &dense_vec(&m)) < 1e-12);
        assert!(again.isometry_defect().unwrap() < 1e-10);
    }

    #[test]
    fn canonicalize_out_of_range() {
        assert!(matches!(Mps::ones(2, 3).unwrap().canonicalize(3), Err(Error::Range(_))));
    }

    #[test]
    fn truncate_exact_is_noop() {
        let mut rng = rng(4);
        let m = random_mps(&mut rng, 2, 8, 5);
        let (t, w) = m.truncate(&exact());
        assert!(rel_err(&dense_vec(&t), &dense_vec(&m)) < 1e-12);
        assert!(w < 1e-12 * m.norm());
    }

    #[test]
    fn two_site_eckart_young() {
        let x = matrix_with_spectrum(&[1.0, 0.1, 0.01], 3, 3, 5);
        let t = DenseTensor::new(3, 2, x.transpose().as_slice().to_vec()).unwrap();
        let m = Mps::from_dense(&t, &exact()).unwrap();
        let (tr, w) = m.truncate(&TruncationParams::new(2, 0.0).unwrap());
        assert_eq!(tr.max_bond(), 2);
        let err = rel_err(&dense_vec(&tr), &t.data) * t.frobenius_norm();
        assert!((err - 0.01).abs() < 1e-12);
        assert!((w - 0.01).abs() < 1e-12);
    }

    #[test]
    fn inner_products() {
        let z = Mps::basis(2, &[0; 5]).unwrap();
        let o = Mps::basis(2, &[1; 5]).unwrap();
        assert_eq!(z.inner(&o).unwrap(), 0.0);
        let mut rng = rng(5);
        let m = random_mps(&mut rng, 2, 6, 3);
        let unit = m.scale(1.0 / m.norm());
        assert!((unit.inner(&unit).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(z.inner(&Mps::ones(2, 4).unwrap()), Err(Error::Shape(_))));
    }

    #[test]
    fn add_and_scale() {
        let mut rng = rng(6);
        let a = random_mps(&mut rng, 2, 6, 3);
        let b = random_mps(&mut rng, 2, 6, 2);
        let zero = a.add(&a.scale(-1.0)).unwrap();
        assert!(dense_vec(&zero).iter().all(|v| v.abs() < 1e-12));
        let doubled = dense_vec(&a.scale(2.0));
        for (x, y) in doubled.iter().zip(dense_vec(&a)) {
            assert_eq!(*x, 2.0 * y);
        }
        let s = a.add(&b).unwrap();
        let (da, db) = (a.bond_dims(), b.bond_dims());
        let ds = s.bond_dims();
        assert_eq!(ds[0], 1);
        assert_eq!(ds[6], 1);
        for i in 1..6 {
            assert_eq!(ds[i], da[i] + db[i]);
        }
    }

    #[test]
    fn hadamard_identity_and_mask() {
        let mut rng = rng(7);
        let x = random_mps(&mut rng, 2, 5, 3);
        let h = x.hadamard(&Mps::ones(2, 5).unwrap()).unwrap();
        assert_eq!(h.bond_dims(), x.bond_dims());
        assert!(rel_err(&dense_vec(&h), &dense_vec(&x)) < 1e-15);

        let mut mask = vec![1.0; 32];
        mask[0] = 0.0;
        mask[31] = 0.0;
        let mask = Mps::from_vector(mask, 2, 5, &exact()).unwrap();
        let hm = dense_vec(&x.hadamard(&mask).unwrap());
        let dx = dense_vec(&x);
        assert!(hm[0].abs() < 1e-14 && hm[31].abs() < 1e-14);
        for i in 1..31 {
            assert!((hm[i] - dx[i]).abs() < 1e-12 * dx[i].abs().max(1.0));
        }
    }

    #[test]
    fn fused_hadamard_matches_dense_product() {
        let mut rng = rng(11);
        let a = random_mps(&mut rng, 2, 8, 5);
        let b = random_mps(&mut rng, 2, 8, 4);
        let expected: Vec<f64> = dense_vec(&a).iter().zip(dense_vec(&b)).map(|(x, y)| x * y).collect();
        let (h, w) = a.hadamard_truncated(&b, &exact()).unwrap();
        assert!(rel_err(&dense_vec(&h), &expected) <= 1e-12);
        assert!(w <= 1e-12 * h.norm());
        assert!(h.isometry_defect().unwrap() <= 1e-10);
        let capped = TruncationParams::new(3, 0.0).unwrap();
        let (hc, wc) = a.hadamard_truncated(&b, &capped).unwrap();
        let (reference, wr) = a.hadamard(&b).unwrap().truncate(&capped);
        assert!(hc.max_bond() <= 3);
        assert!(rel_err(&dense_vec(&hc), &dense_vec(&reference)) <= 1e-10);
        assert!((wc - wr).abs() <= 1e-10 * wr.max(1.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn round_trip_random_tensors(n in 1usize..=10, seed in any::<u64>()) {
            let mut rng = rng(seed);
            let t = DenseTensor::new(2, n, random_vec(&mut rng, 1 << n)).unwrap();
            let m = Mps::from_dense(&t, &exact()).unwrap();
            prop_assert!(rel_err(&dense_vec(&m), &t.data) <= 1e-12);
            for (i, &b) in m.bond_dims().iter().enumerate() {
                prop_assert!(b <= 2usize.pow(i.min(n - i) as u32));
            }
        }

        #[test]
        fn gauge_invariance(n in 2usize..=7, k_frac in 0.0f64..1.0, seed in any::<u64>()) {
            let mut rng = rng(seed);
            let m = random_mps(&mut rng, 2, n, 4);
            let k = ((n as f64) * k_frac) as usize;
            let c = m.canonicalize(k.min(n - 1)).unwrap();
            prop_assert!(rel_err(&dense_vec(&c), &dense_vec(&m)) <= 1e-12);
            prop_assert!(c.isometry_defect().unwrap() <= 1e-10);
        }

        #[test]
        fn inner_is_bilinear_and_triangle_holds(seed in any::<u64>(), alpha in -3.0f64..3.0) {
            let mut rng = rng(seed);
            let a = random_mps(&mut rng, 2, 5, 3);
            let b = random_mps(&mut rng, 2, 5, 2);
            let c = random_mps(&mut rng, 2, 5, 2);
            let lhs = a.scale(alpha).add(&b).unwrap().inner(&c).unwrap();
            let rhs = alpha * a.inner(&c).unwrap() + b.inner(&c).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
            prop_assert!(a.add(&b).unwrap().norm() <= a.norm() + b.norm() + 1e-10);
        }
    }
}
