//! Error metrics: relative l2 errors, signed differences, restart-averaged
//! horizon curves and the multi-step error bound for linear steppers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reference::{euler_rollout_dense, euler_step_dense, DenseTrajectory};
use crate::stepper::Stepper;

fn l2(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// `||u - v|| / ||v||`.
pub fn relative_l2(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!("lengths {} and {}", u.len(), v.len())));
    }
    let den = l2(v.iter().copied());
    if den == 0.0 {
        return Err(Error::DegenerateMetric("reference vector has zero norm".into()));
    }
    Ok(l2(u.iter().zip(v).map(|(a, b)| a - b)) / den)
}

pub fn l2_distance(u: &[f64], v: &[f64]) -> f64 {
    l2(u.iter().zip(v).map(|(a, b)| a - b))
}

/// Index of the sample in `times` closest to `t`, if within `tol`.
fn aligned_index(times: &[f64], t: f64, tol: f64) -> Option<usize> {
    let i = times.partition_point(|&s| s < t);
    [i.checked_sub(1), Some(i)]
        .into_iter()
        .flatten()
        .filter(|&j| j < times.len())
        .min_by(|&a, &b| (times[a] - t).abs().total_cmp(&(times[b] - t).abs()))
        .filter(|&j| (times[j] - t).abs() <= tol)
}

/// `reference - predicted` at each predicted time. Times must match a
/// reference sample within `dt / 2`.
pub fn signed_difference(
    reference: &DenseTrajectory,
    times: &[f64],
    predicted: &[Vec<f64>],
    dt: f64,
) -> Result<Vec<Vec<f64>>> {
    if times.len() != predicted.len() {
        return Err(Error::Shape(format!("{} times for {} fields", times.len(), predicted.len())));
    }
    times
        .iter()
        .zip(predicted)
        .map(|(&t, p)| {
            let j = aligned_index(&reference.times, t, 0.5 * dt)
                .ok_or_else(|| Error::Alignment(format!("no reference sample within dt/2 of t = {t}")))?;
            let r = &reference.states[j];
            if r.len() != p.len() {
                return Err(Error::Shape(format!("fields of length {} and {}", r.len(), p.len())));
            }
            Ok(r.iter().zip(p).map(|(a, b)| a - b).collect())
        })
        .collect()
}

/// `{0, 1, 2, 5, 10, 20, 50, ...}` up to `limit`.
pub fn log_horizons(limit: usize) -> Vec<usize> {
    let mut out = vec![0];
    let mut decade = 1usize;
    'outer: loop {
        for f in [1, 2, 5] {
            let m = f * decade;
            if m > limit {
                break 'outer;
            }
            out.push(m);
        }
        decade = match decade.checked_mul(10) {
            Some(d) => d,
            None => break,
        };
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonCurve {
    pub horizons: Vec<usize>,
    pub mean: Vec<f64>,
    /// Population standard deviation over restarts.
    pub std: Vec<f64>,
    pub restarts: Vec<usize>,
}

impl HorizonCurve {
    /// Least-squares slope of the mean error against the horizon, over
    /// horizons `m >= 1`.
    pub fn trend_slope(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .horizons
            .iter()
            .zip(&self.mean)
            .filter(|(m, _)| **m >= 1)
            .map(|(m, e)| (*m as f64, *e))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    }

    /// Largest standard deviation over the horizons shared with `other`.
    pub fn max_std_on(&self, horizons: &[usize]) -> f64 {
        self.horizons
            .iter()
            .zip(&self.std)
            .filter(|(m, _)| horizons.contains(m))
            .fold(0.0, |acc, (_, s)| acc.max(*s))
    }
}

/// For every restart `k` (a multiple of `restart_stride`), encodes the
/// reference state `u_k`, rolls the compressed stepper forward and records
/// `relative_l2(qtn_{k+m}, u_{k+m})` for each horizon `m` with `k + m <= K`.
pub fn restart_averaged_error(
    reference: &DenseTrajectory,
    stepper: &Stepper,
    horizons: &[usize],
    restart_stride: usize,
) -> Result<HorizonCurve> {
    let dt = stepper.config().dt;
    let last = reference.states.len().checked_sub(1).ok_or_else(|| {
        Error::Config("reference trajectory is empty".into())
    })?;
    for (k, &t) in reference.times.iter().enumerate() {
        if (t - k as f64 * dt).abs() > 0.5 * dt {
            return Err(Error::Alignment(format!(
                "reference sample {k} at t = {t} is not on the step grid (dt = {dt})"
            )));
        }
    }
    let mut horizons: Vec<usize> = horizons.iter().copied().filter(|&m| m <= last).collect();
    horizons.sort_unstable();
    horizons.dedup();
    if horizons.is_empty() || restart_stride == 0 {
        return Err(Error::Config("no valid horizons or restarts".into()));
    }
    let max_m = *horizons.last().expect("non-empty");
    let restarts: Vec<usize> = (0..=last).step_by(restart_stride).collect();
    let per_restart: Vec<Vec<f64>> = restarts
        .par_iter()
        .map(|&k| -> Result<Vec<f64>> {
            let steps = max_m.min(last - k);
            let roll = stepper.rollout_steps(&reference.states[k], steps)?;
            horizons
                .iter()
                .take_while(|&&m| m <= steps)
                .map(|&m| relative_l2(&stepper.decode(&roll.states[m])?, &reference.states[k + m]))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut curve = HorizonCurve {
        horizons: Vec::new(),
        mean: Vec::new(),
        std: Vec::new(),
        restarts: Vec::new(),
    };
    for (j, &m) in horizons.iter().enumerate() {
        let errs: Vec<f64> = per_restart.iter().filter_map(|e| e.get(j).copied()).collect();
        if errs.is_empty() {
            continue;
        }
        let n = errs.len() as f64;
        let mean = errs.iter().sum::<f64>() / n;
        let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
        curve.horizons.push(m);
        curve.mean.push(mean);
        curve.std.push(var.sqrt());
        curve.restarts.push(errs.len());
    }
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub m: usize,
    pub delta: f64,
    pub bound: f64,
}

/// Multi-step error bound `delta_m <= L^m delta_0 + sum_{j<m} L^j e` along
/// one compressed rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundTrace {
    pub delta0: f64,
    pub one_step_error: f64,
    pub rows: Vec<BoundRow>,
}

impl BoundTrace {
    pub fn holds(&self, slack: f64) -> bool {
        self.rows.iter().all(|r| r.delta <= r.bound + slack)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundReport {
    pub lipschitz: f64,
    /// Rollout started from the encoded reference initial state.
    pub matched: BoundTrace,
    /// Rollout started from a perturbed initial state.
    pub restarted: BoundTrace,
}

impl ErrorBoundReport {
    pub fn holds(&self, slack: f64) -> bool {
        self.matched.holds(slack) && self.restarted.holds(slack)
    }
}

/// Column-compressed sparse matrix of a dense linear map, built one unit
/// vector at a time.
struct SparseColumns {
    n: usize,
    cols: Vec<Vec<(usize, f64)>>,
}

impl SparseColumns {
    fn from_map(n: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut e = vec![0.0; n];
        let cols = (0..n)
            .map(|j| {
                e[j] = 1.0;
                let col = f(&e);
                e[j] = 0.0;
                col.into_iter().enumerate().filter(|(_, v)| *v != 0.0).collect()
            })
            .collect();
        Self { n, cols }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (col, &xj) in self.cols.iter().zip(x) {
            for &(i, v) in col {
                y[i] += v * xj;
            }
        }
        y
    }

    fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        self.cols.iter().map(|col| col.iter().map(|&(i, v)| v * x[i]).sum()).collect()
    }
}

pub const POWER_ITERATION_TOL: f64 = 1e-10;
pub const POWER_ITERATION_MAX: usize = 200_000;

/// Spectral norm of the dense Euler step matrix (mask included) by power
/// iteration on `M^T M`, stopped when the eigen-residual `|M^T M v - lambda v|`
/// falls below `POWER_ITERATION_TOL * lambda`.
pub fn lipschitz_constant(stepper: &Stepper) -> Result<f64> {
    let (p, grid, dt) = (stepper.problem(), stepper.grid(), stepper.config().dt);
    if !p.kind.is_linear() {
        return Err(Error::Unsupported("Lipschitz constant of a nonlinear step".into()));
    }
    let n = grid.total_points();
    let m = SparseColumns::from_map(n, |x| euler_step_dense(p, grid, dt, x));
    // deterministic start vector with weight on every mode
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.7548776662466927).fract()).collect();
    let norm = l2(v.iter().copied());
    v.iter_mut().for_each(|x| *x /= norm);
    let mut change = f64::INFINITY;
    for _ in 0..POWER_ITERATION_MAX {
        let w = m.apply_transpose(&m.apply(&v));
        let lambda = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let norm = l2(w.iter().copied());
        if norm == 0.0 {
            return Ok(0.0);
        }
        change = l2(w.iter().zip(&v).map(|(a, b)| a - lambda * b)) / lambda;
        v = w.into_iter().map(|x| x / norm).collect();
        if change <= POWER_ITERATION_TOL {
            return Ok(lambda.sqrt());
        }
    }
    Err(Error::NoConvergence { iterations: POWER_ITERATION_MAX, change })
}

/// Compares the compressed rollout from `qtn_start` with the dense Euler
/// rollout from `euler_start` over the stepper's `num_steps`.
pub fn bound_trace(stepper: &Stepper, lipschitz: f64, qtn_start: &[f64], euler_start: &[f64]) -> Result<BoundTrace> {
    let (p, grid, dt, steps) = (
        stepper.problem(),
        stepper.grid(),
        stepper.config().dt,
        stepper.config().num_steps,
    );
    let euler = euler_rollout_dense(p, grid, euler_start, dt, steps);
    let mut state = stepper.encode(qtn_start)?;
    let mut u = stepper.decode(&state)?;
    let mut deltas = vec![l2_distance(&u, &euler.states[0])];
    let mut e = 0.0f64;
    for k in 1..=steps {
        let (next, _) = stepper.step(&state, k)?;
        let v = stepper.decode(&next)?;
        e = e.max(l2_distance(&v, &euler_step_dense(p, grid, dt, &u)));
        deltas.push(l2_distance(&v, &euler.states[k]));
        state = next;
        u = v;
    }
    let delta0 = deltas[0];
    let mut rows = Vec::with_capacity(deltas.len());
    let mut geometric = 0.0;
    let mut power = 1.0;
    for (m, &delta) in deltas.iter().enumerate() {
        rows.push(BoundRow { m, delta, bound: power * delta0 + geometric });
        geometric += power * e;
        power *= lipschitz;
    }
    Ok(BoundTrace { delta0, one_step_error: e, rows })
}

/// Checks the multi-step bound from the problem's initial state and from a
/// start perturbed by `perturbation` (relative, smooth).
pub fn verify_error_bound(stepper: &Stepper, perturbation: f64) -> Result<ErrorBoundReport> {
    let lipschitz = lipschitz_constant(stepper)?;
    let u0 = stepper.problem().initial_state(stepper.grid());
    let matched = bound_trace(stepper, lipschitz, &u0, &u0)?;
    let mask = stepper.mask().map(|_| stepper.grid().boundary_mask());
    let perturbed: Vec<f64> = u0
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let keep = mask.as_ref().map_or(1.0, |m| m[i]);
            v * (1.0 + perturbation) + keep * perturbation
        })
        .collect();
    let restarted = bound_trace(stepper, lipschitz, &perturbed, &u0)?;
    Ok(ErrorBoundReport { lipschitz, matched, restarted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::*;

    #[test]
    fn relative_l2_basics() {
        let v = vec![1.0, -2.0, 3.0];
        assert_eq!(relative_l2(&v, &v).unwrap(), 0.0);
        let u: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
        assert!((relative_l2(&u, &v).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(relative_l2(&v, &[0.0; 3]), Err(Error::DegenerateMetric(_))));
        assert!(matches!(relative_l2(&v, &[1.0; 2]), Err(Error::Shape(_))));
    }

    #[test]
    fn relative_l2_matches_two_pass_sum() {
        let mut r = rng(9);
        let (u, v) = (random_vec(&mut r, 512), random_vec(&mut r, 512));
        let mut num = 0.0;
        for i in 0..512 {
            num += (u[i] - v[i]) * (u[i] - v[i]);
        }
        let mut den = 0.0;
        for x in &v {
            den += x * x;
        }
        let expected = (num / den).sqrt();
        assert!((relative_l2(&u, &v).unwrap() - expected).abs() < 1e-14);
        let s = -3.5;
        let (su, sv): (Vec<f64>, Vec<f64>) = u.iter().zip(&v).map(|(a, b)| (s * a, s * b)).unzip();
        assert!((relative_l2(&su, &sv).unwrap() - expected).abs() < 1e-14);
    }

    fn trajectory(times: Vec<f64>, states: Vec<Vec<f64>>) -> DenseTrajectory {
        DenseTrajectory { times, states, solver: "test".into(), tolerances: None }
    }

    #[test]
    fn signed_difference_cases() {
        let r = trajectory(vec![0.0, 0.1, 0.2], vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        let d = signed_difference(&r, &[0.1, 0.2], &[vec![3.0, 4.0], vec![5.0, 6.0]], 0.1).unwrap();
        assert!(d.iter().flatten().all(|v| *v == 0.0));
        let d = signed_difference(&r, &[0.1], &[vec![2.5, 3.5]], 0.1).unwrap();
        assert_eq!(d, vec![vec![0.5, 0.5]]);
        // nearest sample within dt/2
        assert!(signed_difference(&r, &[0.14], &[vec![3.0, 4.0]], 0.1).is_ok());
        assert!(matches!(
            signed_difference(&r, &[0.35], &[vec![0.0, 0.0]], 0.1),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn horizon_grid() {
        assert_eq!(log_horizons(0), vec![0]);
        assert_eq!(log_horizons(60), vec![0, 1, 2, 5, 10, 20, 50]);
        assert_eq!(log_horizons(100), vec![0, 1, 2, 5, 10, 20, 50, 100]);
    }

    #[test]
    fn trend_slope_of_line() {
        let c = HorizonCurve {
            horizons: vec![0, 1, 2, 5],
            mean: vec![0.0, 1.0, 1.5, 3.0],
            std: vec![0.0; 4],
            restarts: vec![4, 3, 2, 1],
        };
        assert!((c.trend_slope().unwrap() - 0.5).abs() < 1e-14);
    }
}
