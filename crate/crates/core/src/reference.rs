//! Dense reference solvers: method-of-lines right-hand sides, adaptive
//! Dormand-Prince integration and the explicit-Euler oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stepper::{PdeKind, PdeProblem};
use crate::tensorization::{Boundary, GridSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub solver: String,
    pub tolerances: Option<Rk45Tolerances>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rk45Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Rk45Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10 }
    }
}

/// Centered first and second differences along every axis of a flat
/// row-major field. Open boundaries read zero outside the grid.
struct Stencil<'a> {
    grid: &'a GridSpec,
    strides: Vec<usize>,
}

impl<'a> Stencil<'a> {
    fn new(grid: &'a GridSpec) -> Self {
        let dim = grid.spatial_dim();
        let mut strides = vec![1; dim];
        for a in (0..dim.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * grid.points(a + 1);
        }
        Self { grid, strides }
    }

    /// `(u[i - 1], u[i + 1])` along `axis` for the node with flat index `flat`
    /// and axis coordinate `c`.
    fn neighbors(&self, u: &[f64], flat: usize, c: usize, axis: usize) -> (f64, f64) {
        let np = self.grid.points(axis);
        let st = self.strides[axis];
        let periodic = self.grid.boundary() == Boundary::Periodic;
        let minus = if c > 0 {
            u[flat - st]
        } else if periodic {
            u[flat + (np - 1) * st]
        } else {
            0.0
        };
        let plus = if c + 1 < np {
            u[flat + st]
        } else if periodic {
            u[flat - (np - 1) * st]
        } else {
            0.0
        };
        (minus, plus)
    }
}

/// `du/dt` of the semi-discrete system with second-order centered
/// differences. For Dirichlet problems the rate is zero on boundary nodes.
pub fn mol_rhs(problem: &PdeProblem, grid: &GridSpec, u: &[f64]) -> Vec<f64> {
    assert_eq!(u.len(), grid.total_points(), "state length");
    let stencil = Stencil::new(grid);
    let dim = grid.spatial_dim();
    let hs: Vec<f64> = (0..dim).map(|a| grid.h(a)).collect();
    let nu = problem.viscosity;
    let dirichlet = grid.boundary() == Boundary::DirichletZero;
    let mut out = vec![0.0; u.len()];
    for (flat, slot) in out.iter_mut().enumerate() {
        let coords = grid.multi_index(flat);
        if dirichlet && coords.iter().enumerate().any(|(a, &c)| c == 0 || c + 1 == grid.points(a)) {
            continue;
        }
        let mut convection = 0.0;
        let mut diffusion = 0.0;
        for axis in 0..dim {
            let (minus, plus) = stencil.neighbors(u, flat, coords[axis], axis);
            let h = hs[axis];
            let d1 = (plus - minus) / (2.0 * h);
            diffusion += (plus - 2.0 * u[flat] + minus) / (h * h);
            convection += match problem.kind {
                PdeKind::AdvectionDiffusion => problem.velocity[axis] * d1,
                PdeKind::Burgers => u[flat] * d1,
            };
        }
        *slot = -convection + nu * diffusion;
    }
    out
}

/// `u + dt * rhs(u)`, with boundary nodes of Dirichlet problems zeroed.
pub fn euler_step_dense(problem: &PdeProblem, grid: &GridSpec, dt: f64, u: &[f64]) -> Vec<f64> {
    let rhs = mol_rhs(problem, grid, u);
    let mut next: Vec<f64> = u.iter().zip(&rhs).map(|(a, b)| a + dt * b).collect();
    if grid.boundary() == Boundary::DirichletZero {
        for (v, m) in next.iter_mut().zip(grid.boundary_mask()) {
            *v *= m;
        }
    }
    next
}

/// `K` explicit-Euler steps from `u0`.
pub fn euler_rollout_dense(problem: &PdeProblem, grid: &GridSpec, u0: &[f64], dt: f64, steps: usize) -> DenseTrajectory {
    let mut states = Vec::with_capacity(steps + 1);
    states.push(u0.to_vec());
    for k in 0..steps {
        let next = euler_step_dense(problem, grid, dt, &states[k]);
        states.push(next);
    }
    DenseTrajectory {
        times: (0..=steps).map(|k| k as f64 * dt).collect(),
        states,
        solver: "euler".into(),
        tolerances: None,
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

fn error_norm(err: &[f64], y: &[f64], y_new: &[f64], tol: &Rk45Tolerances) -> f64 {
    let sum: f64 = err
        .iter()
        .zip(y)
        .zip(y_new)
        .map(|((e, a), b)| {
            let scale = tol.atol + tol.rtol * a.abs().max(b.abs());
            (e / scale).powi(2)
        })
        .sum();
    (sum / err.len().max(1) as f64).sqrt()
}

fn rms(v: &[f64], y: &[f64], tol: &Rk45Tolerances) -> f64 {
    let sum: f64 = v
        .iter()
        .zip(y)
        .map(|(x, a)| (x / (tol.atol + tol.rtol * a.abs())).powi(2))
        .sum();
    (sum / v.len().max(1) as f64).sqrt()
}

/// Starting step from the usual two-evaluation heuristic.
fn initial_step(f: &dyn Fn(&[f64]) -> Vec<f64>, y0: &[f64], f0: &[f64], tol: &Rk45Tolerances, span: f64) -> f64 {
    let d0 = rms(y0, y0, tol);
    let d1 = rms(f0, y0, tol);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, k)| y + h0 * k).collect();
    let f1 = f(&y1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff, y0, tol) / h0;
    let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Adaptive Dormand-Prince 4(5) integration of the semi-discrete system
/// from `u0`. Steps are clipped to land exactly on every sample time.
pub fn rk45_solve_from(
    problem: &PdeProblem,
    grid: &GridSpec,
    u0: &[f64],
    sample_times: &[f64],
    tol: Rk45Tolerances,
) -> Result<DenseTrajectory> {
    if sample_times.first() != Some(&0.0) {
        return Err(Error::Config("sample times must start at 0".into()));
    }
    if sample_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("sample times must be strictly increasing".into()));
    }
    let f = |y: &[f64]| mol_rhs(problem, grid, y);
    let n = u0.len();
    let mut y = u0.to_vec();
    let mut t = 0.0;
    let mut states = vec![y.clone()];
    let end = *sample_times.last().expect("non-empty");
    if end == 0.0 {
        return Ok(trajectory(sample_times, states, tol));
    }
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    k[0] = f(&y);
    let mut h = initial_step(&f, &y, &k[0], &tol, end);
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];
    for &target in &sample_times[1..] {
        while t < target {
            let min_step = 10.0 * f64::EPSILON * t.abs().max(target.abs());
            let remaining = target - t;
            // take the remainder outright when it is within a hair of the step
            let lands = h >= remaining * (1.0 - 1e-12);
            let step = if lands { remaining } else { h };
            if step < min_step && !lands {
                return Err(Error::Stiffness { time: t, step });
            }
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = 0.0;
                    for j in 0..s {
                        acc += A[s][j] * k[j][i];
                    }
                    stage[i] = y[i] + step * acc;
                }
                let ks = f(&stage);
                if s == 6 {
                    y_new.copy_from_slice(&stage);
                }
                k[s] = ks;
            }
            debug_assert!(C[6] == 1.0);
            for i in 0..n {
                err[i] = step * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>();
            }
            let norm = error_norm(&err, &y, &y_new, &tol);
            if norm <= 1.0 {
                debug_assert!(norm.is_finite() && norm <= 1.0);
                let factor = if norm == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * norm.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
                };
                t = if lands { target } else { t + step };
                std::mem::swap(&mut y, &mut y_new);
                k.swap(0, 6);
                // a clipped step says nothing about the natural step size
                if !lands || step >= h {
                    h = step * factor;
                }
            } else {
                if !norm.is_finite() {
                    return Err(Error::Stiffness { time: t, step });
                }
                h = step * (SAFETY * norm.powf(-0.2)).clamp(MIN_FACTOR, 1.0);
                if h < min_step {
                    return Err(Error::Stiffness { time: t, step: h });
                }
            }
        }
        states.push(y.clone());
    }
    Ok(trajectory(sample_times, states, tol))
}

fn trajectory(times: &[f64], states: Vec<Vec<f64>>, tol: Rk45Tolerances) -> DenseTrajectory {
    DenseTrajectory {
        times: times.to_vec(),
        states,
        solver: "rk45".into(),
        tolerances: Some(tol),
    }
}

/// [`rk45_solve_from`] starting at the problem's sampled initial condition.
pub fn rk45_solve(
    problem: &PdeProblem,
    grid: &GridSpec,
    sample_times: &[f64],
    tol: Rk45Tolerances,
) -> Result<DenseTrajectory> {
    rk45_solve_from(problem, grid, &problem.initial_state(grid), sample_times, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stepper::InitialCondition;
    use crate::test_support::*;
    use std::f64::consts::PI;

    fn problem(kind: PdeKind, velocity: f64, nu: f64, boundary: Boundary, initial: InitialCondition) -> PdeProblem {
        PdeProblem {
            kind,
            spatial_dim: 1,
            velocity: vec![velocity],
            viscosity: nu,
            boundary,
            initial,
            final_time: 0.5,
        }
    }

    fn sine() -> InitialCondition {
        InitialCondition::Sine { mean: 1.0, amplitude: 0.5 }
    }

    #[test]
    fn constant_field_has_zero_rate() {
        let p = problem(PdeKind::AdvectionDiffusion, 0.5, 0.01, Boundary::Periodic, sine());
        let grid = GridSpec::unit(2, &[64], Boundary::Periodic).unwrap();
        assert!(mol_rhs(&p, &grid, &[3.0; 64]).iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn advection_of_sine_is_derivative() {
        let p = problem(PdeKind::AdvectionDiffusion, 1.0, 0.0, Boundary::Periodic, sine());
        let grid = GridSpec::unit(2, &[128], Boundary::Periodic).unwrap();
        let x = grid.coordinates(0);
        let u: Vec<f64> = x.iter().map(|v| (2.0 * PI * v).sin()).collect();
        let h = grid.h(0);
        // sin(2 pi h) / h replaces the exact wavenumber 2 pi
        let k_eff = (2.0 * PI * h).sin() / h;
        let rhs = mol_rhs(&p, &grid, &u);
        for (r, xv) in rhs.iter().zip(&x) {
            assert!((r + k_eff * (2.0 * PI * xv).cos()).abs() < 1e-10);
            assert!((r + 2.0 * PI * (2.0 * PI * xv).cos()).abs() < 2.0 * PI * (2.0 * PI * h).powi(2) / 6.0 + 1e-12);
        }
    }

    #[test]
    fn burgers_rate_matches_hand_assembly() {
        let p = problem(PdeKind::Burgers, 0.0, 0.01, Boundary::Periodic, sine());
        let grid = GridSpec::unit(2, &[32], Boundary::Periodic).unwrap();
        let u = p.initial_state(&grid);
        let h = grid.h(0);
        let rhs = mol_rhs(&p, &grid, &u);
        for i in 0..32 {
            let (l, r) = (u[(i + 31) % 32], u[(i + 1) % 32]);
            let expected = -u[i] * (r - l) / (2.0 * h) + 0.01 * (r - 2.0 * u[i] + l) / (h * h);
            assert!((rhs[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn rate_is_linear_for_advection_diffusion() {
        let p = problem(PdeKind::AdvectionDiffusion, 0.5, 0.01, Boundary::DirichletZero, sine());
        let grid = GridSpec::unit(2, &[64], Boundary::DirichletZero).unwrap();
        let mut r = rng(3);
        let (x, y) = (random_vec(&mut r, 64), random_vec(&mut r, 64));
        let comb: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let lhs = mol_rhs(&p, &grid, &comb);
        let (fx, fy) = (mol_rhs(&p, &grid, &x), mol_rhs(&p, &grid, &y));
        let rhs: Vec<f64> = fx.iter().zip(&fy).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        assert!(max_abs_diff(&lhs, &rhs) <= 1e-12 * lhs.iter().fold(1.0f64, |m, v| m.max(v.abs())));
    }

    #[test]
    fn dirichlet_rate_vanishes_on_boundary() {
        let p = problem(PdeKind::AdvectionDiffusion, 0.5, 0.01, Boundary::DirichletZero, sine());
        let grid = GridSpec::unit(2, &[8, 8], Boundary::DirichletZero).unwrap();
        let mut p2 = p.clone();
        p2.spatial_dim = 2;
        p2.velocity = vec![0.5, 0.2];
        let rhs = mol_rhs(&p2, &grid, &[1.0; 64]);
        for (v, m) in rhs.iter().zip(grid.boundary_mask()) {
            if m == 0.0 {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn frozen_dynamics_stay_constant() {
        let p = problem(PdeKind::AdvectionDiffusion, 0.0, 0.0, Boundary::Periodic, sine());
        let grid = GridSpec::unit(2, &[32], Boundary::Periodic).unwrap();
        let times = [0.0, 0.1, 0.5];
        let tr = rk45_solve(&p, &grid, &times, Rk45Tolerances::default()).unwrap();
        for s in &tr.states {
            assert!(max_abs_diff(s, &tr.states[0]) < 1e-10);
        }
        assert_eq!(tr.times, times);
    }

    #[test]
    fn fourier_mode_decays_at_stencil_rate() {
        let nu = 0.01;
        let p = problem(PdeKind::AdvectionDiffusion, 0.0, nu, Boundary::Periodic, sine());
        let grid = GridSpec::unit(2, &[64], Boundary::Periodic).unwrap();
        let h = grid.h(0);
        let k = 3.0;
        let u0: Vec<f64> = grid.coordinates(0).iter().map(|x| (2.0 * PI * k * x).cos()).collect();
        let lambda = 4.0 * (PI * k / 64.0).sin().powi(2) / (h * h);
        let times = [0.0, 0.25, 0.5];
        let tr = rk45_solve_from(&p, &grid, &u0, &times, Rk45Tolerances::default()).unwrap();
        for (t, s) in times.iter().zip(&tr.states) {
            let decay = (-nu * lambda * t).exp();
            let expected: Vec<f64> = u0.iter().map(|v| v * decay).collect();
            assert!(max_abs_diff(s, &expected) < 1e-6);
        }
    }

    #[test]
    fn tighter_tolerances_barely_move_the_answer() {
        let p = problem(PdeKind::Burgers, 0.0, 0.01, Boundary::Periodic, sine());
        let grid = GridSpec::unit(2, &[64], Boundary::Periodic).unwrap();
        let times = [0.0, 0.2];
        let base = rk45_solve(&p, &grid, &times, Rk45Tolerances::default()).unwrap();
        let tight = rk45_solve(&p, &grid, &times, Rk45Tolerances { rtol: 5e-9, atol: 5e-11 }).unwrap();
        assert!(rel_err(&base.states[1], &tight.states[1]) <= 1e-6);
    }

    #[test]
    fn euler_rollout_basics() {
        let p = problem(PdeKind::AdvectionDiffusion, 0.5, 0.01, Boundary::DirichletZero, sine());
        let grid = GridSpec::unit(2, &[32], Boundary::DirichletZero).unwrap();
        let u0 = p.initial_state(&grid);
        let tr = euler_rollout_dense(&p, &grid, &u0, 1e-3, 0);
        assert_eq!(tr.states, vec![u0.clone()]);
        let tr = euler_rollout_dense(&p, &grid, &u0, 1e-3, 3);
        assert_eq!(tr.states.len(), 4);
        assert!((tr.times[3] - 3e-3).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_sample_times() {
        let p = problem(PdeKind::AdvectionDiffusion, 0.5, 0.01, Boundary::Periodic, sine());
        let grid = GridSpec::unit(2, &[16], Boundary::Periodic).unwrap();
        assert!(rk45_solve(&p, &grid, &[0.1, 0.2], Rk45Tolerances::default()).is_err());
        assert!(rk45_solve(&p, &grid, &[0.0, 0.2, 0.2], Rk45Tolerances::default()).is_err());
    }
}
