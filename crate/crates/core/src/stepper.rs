//! Compressed explicit-Euler time stepping: one-step operators, boundary
//! masks and trajectory rollout in MPS form.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpo::{axis_first_difference, axis_second_difference, operator_exact, Mpo};
use crate::mps::{Mps, TruncationParams};
use crate::tensorization::{decode, encode, Boundary, GridSpec, Layout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdeKind {
    /// `u_t + c . grad u = nu lap u`
    AdvectionDiffusion,
    /// `u_t + u (sum_a d_a u) = nu lap u`
    Burgers,
}

impl PdeKind {
    pub fn tag(self) -> &'static str {
        match self {
            PdeKind::AdvectionDiffusion => "advection_diffusion",
            PdeKind::Burgers => "burgers",
        }
    }

    pub fn is_linear(self) -> bool {
        self == PdeKind::AdvectionDiffusion
    }
}

/// Closed-form initial fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// `exp(-sharpness * |x - center|^2)`
    Gaussian { center: Vec<f64>, sharpness: f64 },
    /// `mean + amplitude * prod_a sin(2 pi x_a)`
    Sine { mean: f64, amplitude: f64 },
}

impl InitialCondition {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            InitialCondition::Gaussian { center, sharpness } => {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                (-sharpness * r2).exp()
            }
            InitialCondition::Sine { mean, amplitude } => {
                let p: f64 = x.iter().map(|v| (2.0 * std::f64::consts::PI * v).sin()).product();
                mean + amplitude * p
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeProblem {
    pub kind: PdeKind,
    pub spatial_dim: usize,
    /// Advection velocity per axis; ignored for Burgers.
    pub velocity: Vec<f64>,
    pub viscosity: f64,
    pub boundary: Boundary,
    pub initial: InitialCondition,
    pub final_time: f64,
}

impl PdeProblem {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.spatial_dim) {
            return Err(Error::Config(format!("spatial_dim {} (1 or 2)", self.spatial_dim)));
        }
        if !(self.viscosity >= 0.0 && self.viscosity.is_finite()) {
            return Err(Error::Config(format!("viscosity {} must be >= 0", self.viscosity)));
        }
        if !(self.final_time > 0.0 && self.final_time.is_finite()) {
            return Err(Error::Config(format!("final_time {} must be > 0", self.final_time)));
        }
        if self.kind == PdeKind::AdvectionDiffusion && self.velocity.len() != self.spatial_dim {
            return Err(Error::Config(format!(
                "velocity has {} components for a {}D problem",
                self.velocity.len(),
                self.spatial_dim
            )));
        }
        if let InitialCondition::Gaussian { center, .. } = &self.initial {
            if center.len() != self.spatial_dim {
                return Err(Error::Config(format!(
                    "gaussian center has {} components for a {}D problem",
                    center.len(),
                    self.spatial_dim
                )));
            }
        }
        Ok(())
    }

    fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if grid.spatial_dim() != self.spatial_dim || grid.boundary() != self.boundary {
            return Err(Error::Config(format!(
                "grid is {}D {} but the problem is {}D {}",
                grid.spatial_dim(),
                grid.boundary().tag(),
                self.spatial_dim,
                self.boundary.tag()
            )));
        }
        Ok(())
    }

    /// The initial condition sampled at grid nodes. Dirichlet problems get
    /// their boundary nodes set to zero.
    pub fn initial_state(&self, grid: &GridSpec) -> Vec<f64> {
        let mut u = grid.sample(|x| self.initial.eval(x));
        if self.boundary == Boundary::DirichletZero {
            for (v, m) in u.iter_mut().zip(grid.boundary_mask()) {
                *v *= m;
            }
        }
        u
    }

    /// Largest transport speed: `max |c_a|` for advection, `max |u0|` for
    /// Burgers.
    pub fn max_speed(&self, grid: &GridSpec) -> f64 {
        match self.kind {
            PdeKind::AdvectionDiffusion => self.velocity.iter().fold(0.0, |m, c| m.max(c.abs())),
            PdeKind::Burgers => self.initial_state(grid).iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }
}

/// Explicit-Euler step from the stability rule
/// `dt = safety * min(h / max speed, h^2 / (2 nu dim))`, shrunk so that an
/// integer number of steps reaches `final_time` exactly.
pub fn stable_time_grid(problem: &PdeProblem, grid: &GridSpec, safety: f64) -> Result<(f64, usize)> {
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(Error::Config(format!("safety factor {safety} outside (0, 1]")));
    }
    let h = grid.min_h();
    let mut limit = f64::INFINITY;
    let speed = problem.max_speed(grid);
    if speed > 0.0 {
        limit = limit.min(h / speed);
    }
    if problem.viscosity > 0.0 {
        limit = limit.min(h * h / (2.0 * problem.viscosity * problem.spatial_dim as f64));
    }
    let dt_max = (safety * limit).min(problem.final_time);
    let steps = (problem.final_time / dt_max).ceil().max(1.0) as usize;
    Ok((problem.final_time / steps as f64, steps))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub dt: f64,
    pub num_steps: usize,
    pub state_truncation: TruncationParams,
    pub mask_truncation: TruncationParams,
    pub snapshot_stride: usize,
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt {} must be > 0", self.dt)));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::Config("snapshot_stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// `I + dt * A` with `A = -sum_a c_a D1_a + nu sum_a D2_a`.
pub fn build_linear_step_mpo(problem: &PdeProblem, grid: &GridSpec, layout: &Layout, dt: f64) -> Result<Mpo> {
    if problem.kind != PdeKind::AdvectionDiffusion {
        return Err(Error::Config(format!(
            "linear step operator needs advection_diffusion, got {}",
            problem.kind.tag()
        )));
    }
    problem.check_grid(grid)?;
    let mut op = Mpo::identity(layout.n(), layout.d())?;
    for axis in 0..grid.spatial_dim() {
        let c = problem.velocity[axis];
        if c != 0.0 {
            op = op.add(&axis_first_difference(grid, axis, layout)?.scale(-dt * c))?;
        }
        if problem.viscosity != 0.0 {
            op = op.add(&axis_second_difference(grid, axis, layout)?.scale(dt * problem.viscosity))?;
        }
    }
    Ok(op.compress(&operator_exact()))
}

/// `I + dt * nu * sum_a D2_a`.
fn build_diffusion_step_mpo(problem: &PdeProblem, grid: &GridSpec, layout: &Layout, dt: f64) -> Result<Mpo> {
    let mut op = Mpo::identity(layout.n(), layout.d())?;
    if problem.viscosity != 0.0 {
        for axis in 0..grid.spatial_dim() {
            op = op.add(&axis_second_difference(grid, axis, layout)?.scale(dt * problem.viscosity))?;
        }
    }
    Ok(op.compress(&operator_exact()))
}

/// `sum_a D1_a`, the derivative multiplied by `u` in the Burgers term.
fn build_gradient_sum_mpo(grid: &GridSpec, layout: &Layout) -> Result<Mpo> {
    let mut op = axis_first_difference(grid, 0, layout)?;
    for axis in 1..grid.spatial_dim() {
        op = op.add(&axis_first_difference(grid, axis, layout)?)?;
    }
    Ok(op.compress(&operator_exact()))
}

/// The 0/1 boundary mask as an MPS, compressed with `params`.
pub fn dirichlet_mask_mps(grid: &GridSpec, layout: &Layout, params: &TruncationParams) -> Result<Mps> {
    let t = encode(&grid.boundary_mask(), layout)?;
    Mps::from_dense(&t, params)
}

#[derive(Debug, Clone)]
enum StepOperators {
    Linear { step: Mpo },
    Burgers { gradient: Mpo, diffusion_step: Mpo },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// Index of the state produced by this step.
    pub step: usize,
    pub time: f64,
    pub max_bond: usize,
    pub discarded_weight: f64,
    pub wall_ms: f64,
}

/// A problem compiled onto a grid and layout: owns the step operators and
/// the boundary mask.
#[derive(Debug, Clone)]
pub struct Stepper {
    problem: PdeProblem,
    grid: GridSpec,
    layout: Layout,
    config: StepperConfig,
    ops: StepOperators,
    mask: Option<Mps>,
}

impl Stepper {
    pub fn new(problem: PdeProblem, grid: GridSpec, layout: Layout, config: StepperConfig) -> Result<Self> {
        problem.validate()?;
        problem.check_grid(&grid)?;
        config.validate()?;
        let axis_digits: Vec<usize> = (0..grid.spatial_dim()).map(|a| grid.digits(a)).collect();
        if layout.axis_digits() != axis_digits.as_slice() || layout.d() != grid.d() {
            return Err(Error::Shape("layout does not match the grid".into()));
        }
        let ops = match problem.kind {
            PdeKind::AdvectionDiffusion => StepOperators::Linear {
                step: build_linear_step_mpo(&problem, &grid, &layout, config.dt)?,
            },
            PdeKind::Burgers => StepOperators::Burgers {
                gradient: build_gradient_sum_mpo(&grid, &layout)?,
                diffusion_step: build_diffusion_step_mpo(&problem, &grid, &layout, config.dt)?,
            },
        };
        let mask = match grid.boundary() {
            Boundary::DirichletZero => Some(dirichlet_mask_mps(&grid, &layout, &config.mask_truncation)?),
            Boundary::Periodic => None,
        };
        Ok(Self { problem, grid, layout, config, ops, mask })
    }

    pub fn problem(&self) -> &PdeProblem {
        &self.problem
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn config(&self) -> &StepperConfig {
        &self.config
    }

    pub fn mask(&self) -> Option<&Mps> {
        self.mask.as_ref()
    }

    /// Bond profiles of the operators applied each step.
    pub fn operator_bonds(&self) -> Vec<(&'static str, Vec<usize>)> {
        let mut out = match &self.ops {
            StepOperators::Linear { step } => vec![("step", step.bond_dims())],
            StepOperators::Burgers { gradient, diffusion_step } => vec![
                ("gradient", gradient.bond_dims()),
                ("diffusion_step", diffusion_step.bond_dims()),
            ],
        };
        if let Some(m) = &self.mask {
            out.push(("mask", m.bond_dims()));
        }
        out
    }

    /// Exact TT-SVD of a flat grid vector.
    pub fn encode(&self, u: &[f64]) -> Result<Mps> {
        Mps::from_dense(&encode(u, &self.layout)?, &TruncationParams::exact())
    }

    pub fn decode(&self, state: &Mps) -> Result<Vec<f64>> {
        decode(&state.to_dense()?, &self.layout)
    }

    fn finish(&self, y: Mps) -> Result<(Mps, f64)> {
        match &self.mask {
            Some(mask) => mask.hadamard_truncated(&y, &self.config.state_truncation),
            None => Ok(y.truncate(&self.config.state_truncation)),
        }
    }

    /// One compressed Euler step producing state `step`: operator
    /// application, then the boundary mask (Dirichlet only), then truncation.
    pub fn step(&self, state: &Mps, step: usize) -> Result<(Mps, StepDiagnostics)> {
        let start = Instant::now();
        let params = &self.config.state_truncation;
        let (next, discarded) = match &self.ops {
            StepOperators::Linear { step: op } => self.finish(op.apply(state)?)?,
            StepOperators::Burgers { gradient, diffusion_step } => {
                let (w, w_grad) = gradient.apply(state)?.truncate(params);
                let (nl, w_prod) = state.hadamard_truncated(&w, params)?;
                let lin = diffusion_step.apply(state)?;
                let (next, w_out) = self.finish(lin.add(&nl.scale(-self.config.dt))?)?;
                (next, (w_grad * w_grad + w_prod * w_prod + w_out * w_out).sqrt())
            }
        };
        if !next.is_finite() {
            return Err(Error::NumericalFailure {
                step,
                reason: "state contains non-finite entries".into(),
            });
        }
        let diagnostics = StepDiagnostics {
            step,
            time: step as f64 * self.config.dt,
            max_bond: next.max_bond(),
            discarded_weight: discarded,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        Ok((next, diagnostics))
    }

    /// Iterates [`Stepper::step`] `num_steps` times from `u0`.
    pub fn rollout(&self, u0: &[f64]) -> std::result::Result<Rollout, RolloutFailure> {
        self.rollout_steps(u0, self.config.num_steps)
    }

    pub fn rollout_steps(&self, u0: &[f64], steps: usize) -> std::result::Result<Rollout, RolloutFailure> {
        let mut out = Rollout {
            dt: self.config.dt,
            states: Vec::with_capacity(steps + 1),
            diagnostics: Vec::with_capacity(steps),
        };
        let initial = self.encode(u0).map_err(|source| RolloutFailure {
            partial: Box::new(out.clone()),
            source,
        })?;
        out.states.push(initial);
        for k in 1..=steps {
            match self.step(&out.states[k - 1], k) {
                Ok((next, diag)) => {
                    out.states.push(next);
                    out.diagnostics.push(diag);
                }
                Err(source) => {
                    return Err(RolloutFailure { partial: Box::new(out), source });
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct Rollout {
    pub dt: f64,
    /// `states[k]` approximates the field at time `k * dt`.
    pub states: Vec<Mps>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl Rollout {
    pub fn num_steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    /// Step indices at multiples of `stride`, always including the last.
    pub fn snapshot_steps(&self, stride: usize) -> Vec<usize> {
        let last = self.num_steps();
        let mut steps: Vec<usize> = (0..=last).step_by(stride.max(1)).collect();
        if steps.last() != Some(&last) {
            steps.push(last);
        }
        steps
    }

    /// Decoded grid vectors at the given steps.
    pub fn decode_steps(&self, stepper: &Stepper, steps: &[usize]) -> Result<Vec<Vec<f64>>> {
        steps
            .iter()
            .map(|&k| {
                let state = self
                    .states
                    .get(k)
                    .ok_or_else(|| Error::Range(format!("step {k} beyond rollout")))?;
                stepper.decode(state)
            })
            .collect()
    }
}

/// A rollout that stopped early; `partial` holds everything computed before
/// the failing step.
#[derive(Debug, thiserror::Error)]
#[error("rollout stopped: {source}")]
pub struct RolloutFailure {
    pub partial: Box<Rollout>,
    #[source]
    pub source: Error,
}

impl From<RolloutFailure> for Error {
    fn from(f: RolloutFailure) -> Self {
        f.source
    }
}
