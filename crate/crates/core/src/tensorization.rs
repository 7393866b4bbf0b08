//! Grids, base-d index encodings and the reshaping maps between flat grid
//! vectors and digit-indexed tensors.
//!
//! Digits are big-endian: the most significant digit of an axis coordinate
//! comes first on the chain. Flat grid vectors of 2D fields are stored
//! row-major with the x coordinate as the row index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    DirichletZero,
    Periodic,
}

impl Boundary {
    pub fn tag(self) -> &'static str {
        match self {
            Boundary::DirichletZero => "dirichlet_zero",
            Boundary::Periodic => "periodic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub points: usize,
    pub lower: f64,
    pub upper: f64,
}

/// Uniform tensor-product grid whose per-axis point counts are powers of `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    d: usize,
    axes: Vec<Axis>,
    boundary: Boundary,
}

fn digit_count(points: usize, d: usize) -> Option<usize> {
    let mut k = 0;
    let mut p = 1usize;
    while p < points {
        p = p.checked_mul(d)?;
        k += 1;
    }
    (p == points && k >= 1).then_some(k)
}

impl GridSpec {
    pub fn new(d: usize, axes: Vec<Axis>, boundary: Boundary) -> Result<Self> {
        if d < 2 {
            return Err(Error::Config(format!("local dimension d = {d} must be >= 2")));
        }
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::Config(format!(
                "spatial dimension {} not supported (1 or 2)",
                axes.len()
            )));
        }
        for (i, a) in axes.iter().enumerate() {
            if digit_count(a.points, d).is_none() {
                return Err(Error::Config(format!(
                    "axis {i}: {} points is not a power of d = {d}",
                    a.points
                )));
            }
            if !(a.upper > a.lower) {
                return Err(Error::Config(format!(
                    "axis {i}: extent [{}, {}] is empty",
                    a.lower, a.upper
                )));
            }
        }
        Ok(Self { d, axes, boundary })
    }

    /// Unit-interval (or unit-square) grid with `points` per axis.
    pub fn unit(d: usize, points: &[usize], boundary: Boundary) -> Result<Self> {
        let axes = points
            .iter()
            .map(|&points| Axis { points, lower: 0.0, upper: 1.0 })
            .collect();
        Self::new(d, axes, boundary)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn spatial_dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn points(&self, axis: usize) -> usize {
        self.axes[axis].points
    }

    pub fn digits(&self, axis: usize) -> usize {
        digit_count(self.axes[axis].points, self.d).expect("validated at construction")
    }

    /// Chain length n with `total_points() == d^n`.
    pub fn n(&self) -> usize {
        (0..self.spatial_dim()).map(|a| self.digits(a)).sum()
    }

    pub fn total_points(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn h(&self, axis: usize) -> f64 {
        let a = &self.axes[axis];
        let len = a.upper - a.lower;
        match self.boundary {
            Boundary::Periodic => len / a.points as f64,
            Boundary::DirichletZero => len / (a.points - 1) as f64,
        }
    }

    pub fn min_h(&self) -> f64 {
        (0..self.spatial_dim())
            .map(|a| self.h(a))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn coordinates(&self, axis: usize) -> Vec<f64> {
        let a = &self.axes[axis];
        let h = self.h(axis);
        (0..a.points).map(|j| a.lower + j as f64 * h).collect()
    }

    /// Row-major flat index of a multi-index.
    pub fn flat_index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.axes)
            .fold(0, |acc, (&c, a)| acc * a.points + c)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.spatial_dim()];
        for (slot, a) in out.iter_mut().zip(&self.axes).rev() {
            *slot = flat % a.points;
            flat /= a.points;
        }
        out
    }

    /// Samples `f` at every grid node, returning the flat row-major vector.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let coords: Vec<Vec<f64>> = (0..self.spatial_dim()).map(|a| self.coordinates(a)).collect();
        let mut point = vec![0.0; self.spatial_dim()];
        (0..self.total_points())
            .map(|flat| {
                for (axis, c) in self.multi_index(flat).into_iter().enumerate() {
                    point[axis] = coords[axis][c];
                }
                f(&point)
            })
            .collect()
    }

    /// 0/1 vector that is zero on every boundary node.
    pub fn boundary_mask(&self) -> Vec<f64> {
        (0..self.total_points())
            .map(|flat| {
                let on_edge = self
                    .multi_index(flat)
                    .iter()
                    .zip(&self.axes)
                    .any(|(&c, a)| c == 0 || c + 1 == a.points);
                if on_edge { 0.0 } else { 1.0 }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutVariant {
    Sequential,
    Interleaved,
}

impl LayoutVariant {
    pub fn tag(self) -> &'static str {
        match self {
            LayoutVariant::Sequential => "sequential",
            LayoutVariant::Interleaved => "interleaved",
        }
    }
}

/// Which digit of which axis a chain site carries. `significance` 0 is the
/// least significant digit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteDigit {
    pub axis: usize,
    pub significance: usize,
}

/// Assignment of grid-coordinate digits to chain sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    d: usize,
    axis_digits: Vec<usize>,
    variant: LayoutVariant,
    ordering: Vec<SiteDigit>,
}

impl Layout {
    pub fn new(variant: LayoutVariant, d: usize, axis_digits: &[usize]) -> Result<Self> {
        let ordering = match variant {
            LayoutVariant::Sequential => axis_digits
                .iter()
                .enumerate()
                .flat_map(|(axis, &k)| (0..k).rev().map(move |significance| SiteDigit { axis, significance }))
                .collect(),
            LayoutVariant::Interleaved => {
                let k = axis_digits[0];
                if axis_digits.iter().any(|&a| a != k) {
                    return Err(Error::Config(format!(
                        "interleaved layout needs equal digit counts per axis, got {axis_digits:?}"
                    )));
                }
                (0..k)
                    .rev()
                    .flat_map(|significance| {
                        (0..axis_digits.len()).map(move |axis| SiteDigit { axis, significance })
                    })
                    .collect()
            }
        };
        Self::from_ordering(variant, d, axis_digits, ordering)
    }

    /// Validates that `ordering` is a bijection onto all (axis, significance) pairs.
    pub fn from_ordering(
        variant: LayoutVariant,
        d: usize,
        axis_digits: &[usize],
        ordering: Vec<SiteDigit>,
    ) -> Result<Self> {
        let n: usize = axis_digits.iter().sum();
        if ordering.len() != n {
            return Err(Error::Shape(format!(
                "layout has {} sites, expected {n}",
                ordering.len()
            )));
        }
        let mut seen: Vec<Vec<bool>> = axis_digits.iter().map(|&k| vec![false; k]).collect();
        for sd in &ordering {
            let slot = seen
                .get_mut(sd.axis)
                .and_then(|v| v.get_mut(sd.significance))
                .ok_or_else(|| Error::Shape(format!("layout site {sd:?} outside the grid digits")))?;
            if *slot {
                return Err(Error::Shape(format!("layout assigns {sd:?} twice")));
            }
            *slot = true;
        }
        Ok(Self {
            d,
            axis_digits: axis_digits.to_vec(),
            variant,
            ordering,
        })
    }

    pub fn for_grid(grid: &GridSpec, variant: LayoutVariant) -> Result<Self> {
        let digits: Vec<usize> = (0..grid.spatial_dim()).map(|a| grid.digits(a)).collect();
        Self::new(variant, grid.d(), &digits)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.ordering.len()
    }

    pub fn variant(&self) -> LayoutVariant {
        self.variant
    }

    pub fn ordering(&self) -> &[SiteDigit] {
        &self.ordering
    }

    pub fn axis_digits(&self) -> &[usize] {
        &self.axis_digits
    }

    pub fn total_points(&self) -> usize {
        self.d.pow(self.n() as u32)
    }

    fn axis_points(&self, axis: usize) -> usize {
        self.d.pow(self.axis_digits[axis] as u32)
    }

    /// Site-ordered digits of the grid point with per-axis `coords`.
    pub fn index_to_digits(&self, coords: &[usize]) -> Result<Vec<usize>> {
        if coords.len() != self.axis_digits.len() {
            return Err(Error::Range(format!(
                "expected {} coordinates, got {}",
                self.axis_digits.len(),
                coords.len()
            )));
        }
        for (axis, &c) in coords.iter().enumerate() {
            if c >= self.axis_points(axis) {
                return Err(Error::Range(format!(
                    "coordinate {c} on axis {axis} outside 0..{}",
                    self.axis_points(axis)
                )));
            }
        }
        Ok(self
            .ordering
            .iter()
            .map(|sd| (coords[sd.axis] / self.d.pow(sd.significance as u32)) % self.d)
            .collect())
    }

    pub fn digits_to_index(&self, digits: &[usize]) -> Result<Vec<usize>> {
        if digits.len() != self.n() {
            return Err(Error::Range(format!(
                "expected {} digits, got {}",
                self.n(),
                digits.len()
            )));
        }
        let mut coords = vec![0usize; self.axis_digits.len()];
        for (sd, &s) in self.ordering.iter().zip(digits) {
            if s >= self.d {
                return Err(Error::Range(format!("digit {s} outside 0..{}", self.d)));
            }
            coords[sd.axis] += s * self.d.pow(sd.significance as u32);
        }
        Ok(coords)
    }

    fn flat_from_coords(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .enumerate()
            .fold(0, |acc, (axis, &c)| acc * self.axis_points(axis) + c)
    }

    /// `perm[flat] = tensor index`, where the tensor index reads the site
    /// digits as a big-endian base-d number.
    pub fn grid_to_tensor(&self) -> Vec<usize> {
        let total = self.total_points();
        let mut perm = vec![0usize; total];
        for t in 0..total {
            let digits = tensor_digits(t, self.d, self.n());
            let coords = self.digits_to_index(&digits).expect("in range");
            perm[self.flat_from_coords(&coords)] = t;
        }
        perm
    }
}

/// Big-endian base-d digits of a tensor index.
pub fn tensor_digits(mut t: usize, d: usize, n: usize) -> Vec<usize> {
    let mut out = vec![0usize; n];
    for slot in out.iter_mut().rev() {
        *slot = t % d;
        t /= d;
    }
    out
}

pub fn tensor_index(digits: &[usize], d: usize) -> usize {
    digits.iter().fold(0, |acc, &s| acc * d + s)
}

/// Order-n tensor with every mode of size `d`, stored with the first mode
/// most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    pub d: usize,
    pub n: usize,
    pub data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(d: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        let expected = d.checked_pow(n as u32).ok_or_else(|| Error::Shape("d^n overflows".into()))?;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "tensor data has {} entries, expected {d}^{n} = {expected}",
                data.len()
            )));
        }
        Ok(Self { d, n, data })
    }

    pub fn zeros(d: usize, n: usize) -> Self {
        Self { d, n, data: vec![0.0; d.pow(n as u32)] }
    }

    pub fn get(&self, digits: &[usize]) -> f64 {
        self.data[tensor_index(digits, self.d)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn encode(u: &[f64], layout: &Layout) -> Result<DenseTensor> {
    let total = layout.total_points();
    if u.len() != total {
        return Err(Error::Shape(format!(
            "state has {} entries, layout expects {total}",
            u.len()
        )));
    }
    let mut data = vec![0.0; total];
    for (flat, t) in layout.grid_to_tensor().into_iter().enumerate() {
        data[t] = u[flat];
    }
    DenseTensor::new(layout.d(), layout.n(), data)
}

pub fn decode(t: &DenseTensor, layout: &Layout) -> Result<Vec<f64>> {
    if t.d != layout.d() || t.n != layout.n() {
        return Err(Error::Shape(format!(
            "tensor is order {} with mode size {}, layout expects order {} with mode size {}",
            t.n,
            t.d,
            layout.n(),
            layout.d()
        )));
    }
    Ok(layout.grid_to_tensor().into_iter().map(|ti| t.data[ti]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq1d(n: usize) -> Layout {
        Layout::new(LayoutVariant::Sequential, 2, &[n]).unwrap()
    }

    #[test]
    fn binary_expansion() {
        assert_eq!(seq1d(3).index_to_digits(&[5]).unwrap(), vec![1, 0, 1]);
        assert_eq!(seq1d(3).index_to_digits(&[0]).unwrap(), vec![0, 0, 0]);
        assert_eq!(seq1d(3).digits_to_index(&[1, 1, 0]).unwrap(), vec![6]);
    }

    #[test]
    fn out_of_range_index() {
        assert!(matches!(seq1d(3).index_to_digits(&[8]), Err(Error::Range(_))));
        assert!(matches!(seq1d(3).digits_to_index(&[2, 0, 0]), Err(Error::Range(_))));
    }

    #[test]
    fn interleaved_digits() {
        let lay = Layout::new(LayoutVariant::Interleaved, 2, &[2, 2]).unwrap();
        assert_eq!(lay.index_to_digits(&[1, 2]).unwrap(), vec![0, 1, 1, 0]);
        assert_eq!(lay.index_to_digits(&[3, 0]).unwrap(), vec![1, 0, 1, 0]);
    }

    #[test]
    fn interleaved_encode_places_entry() {
        let lay = Layout::new(LayoutVariant::Interleaved, 2, &[2, 2]).unwrap();
        let grid = GridSpec::unit(2, &[4, 4], Boundary::Periodic).unwrap();
        let mut u = vec![0.0; 16];
        u[grid.flat_index(&[3, 0])] = 7.0;
        let t = encode(&u, &lay).unwrap();
        assert_eq!(t.get(&[1, 0, 1, 0]), 7.0);
        assert_eq!(t.data.iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn encode_is_reshape_for_sequential() {
        let t = encode(&[1.0, 2.0, 3.0, 4.0], &seq1d(2)).unwrap();
        assert_eq!(t.get(&[0, 0]), 1.0);
        assert_eq!(t.get(&[0, 1]), 2.0);
        assert_eq!(t.get(&[1, 0]), 3.0);
        assert_eq!(t.get(&[1, 1]), 4.0);
    }

    #[test]
    fn decode_edge_cases() {
        let lay = seq1d(6);
        assert_eq!(decode(&DenseTensor::zeros(2, 6), &lay).unwrap(), vec![0.0; 64]);
        let mut t = DenseTensor::zeros(2, 6);
        t.data[tensor_index(&[1; 6], 2)] = 1.0;
        let u = decode(&t, &lay).unwrap();
        assert_eq!(u[63], 1.0);
        assert_eq!(u.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(encode(&[1.0; 7], &seq1d(3)), Err(Error::Shape(_))));
        assert!(matches!(decode(&DenseTensor::zeros(2, 4), &seq1d(3)), Err(Error::Shape(_))));
    }

    #[test]
    fn layout_rejects_non_bijection() {
        let bad = vec![
            SiteDigit { axis: 0, significance: 1 },
            SiteDigit { axis: 0, significance: 1 },
        ];
        assert!(Layout::from_ordering(LayoutVariant::Sequential, 2, &[2], bad).is_err());
    }

    #[test]
    fn interleaved_neighbors_flip_low_digit() {
        let lay = Layout::new(LayoutVariant::Interleaved, 2, &[3, 3]).unwrap();
        for x in (0..8).step_by(2) {
            for y in 0..8 {
                let mut digits = lay.index_to_digits(&[x, y]).unwrap();
                // last two sites hold (x_0, y_0)
                digits[4] ^= 1;
                assert_eq!(lay.digits_to_index(&digits).unwrap(), vec![x + 1, y]);
            }
        }
    }

    #[test]
    fn grid_rules() {
        assert!(GridSpec::unit(2, &[500], Boundary::Periodic).is_err());
        let g = GridSpec::unit(2, &[8], Boundary::DirichletZero).unwrap();
        assert!((g.h(0) - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(g.n(), 3);
        assert_eq!(g.boundary_mask(), vec![0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0]);
        let p = GridSpec::unit(2, &[8, 8], Boundary::Periodic).unwrap();
        assert!((p.h(1) - 0.125).abs() < 1e-15);
        assert_eq!(p.total_points(), 64);
        assert_eq!(p.n(), 6);
    }

    proptest! {
        #[test]
        fn roundtrip_all_layouts(
            n in prop::sample::select(vec![3usize, 6, 12]),
            interleaved in any::<bool>(),
            seed in any::<u64>(),
        ) {
            let layout = if interleaved && n % 2 == 0 {
                Layout::new(LayoutVariant::Interleaved, 2, &[n / 2, n / 2]).unwrap()
            } else {
                Layout::new(LayoutVariant::Sequential, 2, &[n]).unwrap()
            };
            let total = 1usize << n;
            let u: Vec<f64> = (0..total)
                .map(|i| ((i as u64).wrapping_mul(6364136223846793005).wrapping_add(seed) >> 11) as f64)
                .collect();
            let back = decode(&encode(&u, &layout).unwrap(), &layout).unwrap();
            prop_assert_eq!(back, u);
        }
    }
}
