//! Experiment orchestration: rollout, references, metrics and artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::output::{
    snapshot_file_name, write_bound_csv, write_diagnostics_csv, write_horizon_csv, write_snapshot,
};
use crate::error::{Error, Result};
use crate::metrics::{
    bound_trace, log_horizons, relative_l2, restart_averaged_error, signed_difference,
    verify_error_bound,
};
use crate::reference::{euler_rollout_dense, rk45_solve};
use crate::stepper::{PdeKind, Rollout, Stepper};
use crate::tensorization::Boundary;

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Slack for the multi-step bound check.
pub const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutInfo {
    pub variant: String,
    pub d: usize,
    pub n: usize,
    pub axis_digits: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub step: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub max_bond: usize,
    pub final_rel_l2_vs_euler: f64,
    pub max_rel_l2_vs_euler: f64,
    pub final_rel_l2_vs_rk45: f64,
    /// Largest boundary magnitude over all rollout states (Dirichlet only).
    pub max_boundary_abs: Option<f64>,
    pub snapshot_steps: Vec<usize>,
    pub horizon_trend_slope: Option<f64>,
    pub horizon_max_std: Option<f64>,
    pub lipschitz: Option<f64>,
    pub bound_holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub config: RunConfig,
    pub dt: f64,
    pub num_steps: usize,
    pub layout: LayoutInfo,
    pub truncation_rule: String,
    pub nonlinearity: String,
    pub decisions: BTreeMap<String, String>,
    pub status: String,
    pub failure: Option<Failure>,
    pub results: Option<RunResults>,
    pub operator_bonds: BTreeMap<String, Vec<usize>>,
    pub wall_ms: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.into()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Syntax { line: e.line(), message: e.to_string() })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

pub const TRUNCATION_RULE: &str = "relative";

fn nonlinearity(kind: PdeKind) -> &'static str {
    match kind {
        PdeKind::AdvectionDiffusion => "none",
        PdeKind::Burgers => "mps_hadamard_truncated",
    }
}

/// Every fixed modelling choice, keyed `module.topic`.
pub fn design_decisions(config: &RunConfig) -> BTreeMap<String, String> {
    let layout = config.layout.tag();
    [
        ("tensorization.layout_2d", layout.into()),
        ("tensorization.endianness", "big_endian".into()),
        ("tensorization.grid_sizes", "powers_of_d_only".into()),
        ("mps.eps_svd", format!("{TRUNCATION_RULE}_to_largest_singular_value")),
        ("mps.min_rank", "keep_at_least_one".into()),
        ("mps.sweep_order", "left_qr_then_right_to_left_svd".into()),
        ("mps.svd_backend", "faer_thin_svd_descending_stable_ties".into()),
        ("mps.center_convention", "singular_values_on_bond_absorbed_left".into()),
        ("mpo.shift", "analytic_rank2_carry".into()),
        ("mpo.dirichlet", "open_stencil_plus_mask_hadamard".into()),
        ("mpo.periodic", "wraparound_in_stencil".into()),
        ("mpo.composition", "excluded".into()),
        ("stepper.time_step", format!("safety_{}_cfl_diffusion_rounded_to_integer_k", config.stepper.safety)),
        ("stepper.nonlinearity", nonlinearity(config.problem.kind).into()),
        ("stepper.step_order", "operator_then_mask_then_truncate".into()),
        ("stepper.burgers_2d_form", "u_times_sum_of_axis_derivatives".into()),
        ("stepper.intermediate_truncation", "state_truncation_params".into()),
        (
            "reference.rk45_tolerances",
            format!("rtol_{:e}_atol_{:e}", config.reference.rtol, config.reference.atol),
        ),
        ("reference.sampling", "step_clipping_to_sample_times".into()),
        ("reference.initial_condition", "pointwise_at_nodes".into()),
        ("metrics.lipschitz", "spectral_norm_of_dense_euler_step".into()),
        ("metrics.time_alignment", "rk45_sampled_at_euler_times".into()),
        ("metrics.horizon_grid", "1_2_5_log_grid_clipped_to_k".into()),
        ("metrics.std_population", "over_restarts_at_fixed_m".into()),
        ("cli.config_format", "flat_dotted_keys_toml".into()),
        ("cli.snapshot_format", "header_t_nx_ny_17_significant_digits".into()),
        ("cli.csv_schemas", "horizon_diagnostics_bound".into()),
        ("cli.surface", "run_validate_presets_list".into()),
        ("plots.output", "static_vector_images".into()),
        ("plots.difference_colors", "symmetric_shared_limits".into()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Steps written as snapshots: every `snapshot_stride` steps, the last
/// step, and the steps nearest the requested snapshot times.
fn snapshot_steps(config: &RunConfig, rollout: &Rollout, stride: usize, dt: f64) -> Vec<usize> {
    let last = rollout.num_steps();
    let mut steps = rollout.snapshot_steps(stride);
    for &t in &config.output.snapshot_times {
        steps.push(((t / dt).round().max(0.0) as usize).min(last));
    }
    steps.sort_unstable();
    steps.dedup();
    steps
}

/// Runs one experiment and writes all artifacts under `out_dir`:
/// `qtn/`, `reference/` and `diff/` snapshots, `diagnostics.csv`,
/// `horizon.csv`, `bound.csv`, `bound_restart.csv` (linear kinds) and
/// `manifest.json`. A numerical failure still writes the manifest and the
/// diagnostics gathered so far, then returns the error.
pub fn run_experiment(config: &RunConfig, out_dir: &Path) -> Result<RunManifest> {
    let total = Instant::now();
    let resolved = config.resolve()?;
    fs::create_dir_all(out_dir)?;
    let stepper = Stepper::new(resolved.problem.clone(), resolved.grid.clone(), resolved.layout.clone(), resolved.stepper.clone())?;
    let (dt, k) = (resolved.stepper.dt, resolved.stepper.num_steps);
    let mut manifest = RunManifest {
        code_version: CODE_VERSION.into(),
        config: config.clone(),
        dt,
        num_steps: k,
        layout: LayoutInfo {
            variant: resolved.layout.variant().tag().into(),
            d: resolved.layout.d(),
            n: resolved.layout.n(),
            axis_digits: resolved.layout.axis_digits().to_vec(),
        },
        truncation_rule: TRUNCATION_RULE.into(),
        nonlinearity: nonlinearity(config.problem.kind).into(),
        decisions: design_decisions(config),
        status: "ok".into(),
        failure: None,
        results: None,
        operator_bonds: stepper.operator_bonds().into_iter().map(|(n, b)| (n.to_string(), b)).collect(),
        wall_ms: BTreeMap::new(),
    };
    let write_manifest = |m: &RunManifest| -> Result<()> {
        fs::write(out_dir.join("manifest.json"), m.to_json()?)?;
        Ok(())
    };

    let u0 = resolved.problem.initial_state(&resolved.grid);
    let t = Instant::now();
    let rollout = match stepper.rollout(&u0) {
        Ok(r) => r,
        Err(failure) => {
            write_diagnostics_csv(&out_dir.join("diagnostics.csv"), &failure.partial.diagnostics)?;
            let step = match &failure.source {
                Error::NumericalFailure { step, .. } => *step,
                _ => failure.partial.num_steps() + 1,
            };
            manifest.status = "numerical_failure".into();
            manifest.failure = Some(Failure { step, reason: failure.source.to_string() });
            manifest.wall_ms.insert("rollout".into(), ms(t));
            manifest.wall_ms.insert("total".into(), ms(total));
            write_manifest(&manifest)?;
            return Err(failure.into());
        }
    };
    manifest.wall_ms.insert("rollout".into(), ms(t));
    write_diagnostics_csv(&out_dir.join("diagnostics.csv"), &rollout.diagnostics)?;

    let t = Instant::now();
    let qtn: Vec<Vec<f64>> = rollout.states.iter().map(|s| stepper.decode(s)).collect::<Result<_>>()?;
    let euler = euler_rollout_dense(&resolved.problem, &resolved.grid, &u0, dt, k);
    let mut rel_euler = Vec::with_capacity(k + 1);
    for (q, e) in qtn.iter().zip(&euler.states) {
        rel_euler.push(relative_l2(q, e)?);
    }
    let max_boundary_abs = (resolved.problem.boundary == Boundary::DirichletZero).then(|| {
        let mask = resolved.grid.boundary_mask();
        qtn.iter()
            .flat_map(|q| q.iter().zip(&mask).filter(|(_, m)| **m == 0.0).map(|(v, _)| v.abs()))
            .fold(0.0, f64::max)
    });
    manifest.wall_ms.insert("euler_oracle".into(), ms(t));

    let t = Instant::now();
    let times: Vec<f64> = (0..=k).map(|i| i as f64 * dt).collect();
    let reference = rk45_solve(&resolved.problem, &resolved.grid, &times, config.reference)?;
    manifest.wall_ms.insert("reference".into(), ms(t));

    let t = Instant::now();
    let steps = snapshot_steps(config, &rollout, resolved.stepper.snapshot_stride, dt);
    let snap_times: Vec<f64> = steps.iter().map(|&s| times[s]).collect();
    let predicted: Vec<Vec<f64>> = steps.iter().map(|&s| qtn[s].clone()).collect();
    let diffs = signed_difference(&reference, &snap_times, &predicted, dt)?;
    for sub in ["qtn", "reference", "diff"] {
        fs::create_dir_all(out_dir.join(sub))?;
    }
    for (i, &s) in steps.iter().enumerate() {
        let name = snapshot_file_name(s);
        write_snapshot(&out_dir.join("qtn").join(&name), &resolved.grid, times[s], &predicted[i])?;
        write_snapshot(&out_dir.join("reference").join(&name), &resolved.grid, times[s], &reference.states[s])?;
        write_snapshot(&out_dir.join("diff").join(&name), &resolved.grid, times[s], &diffs[i])?;
    }
    manifest.wall_ms.insert("snapshots".into(), ms(t));

    let t = Instant::now();
    let horizons = config
        .metrics
        .horizons
        .clone()
        .unwrap_or_else(|| log_horizons(config.metrics.max_horizon.unwrap_or(k).min(k)));
    let curve = restart_averaged_error(&reference, &stepper, &horizons, config.metrics.restart_stride)?;
    write_horizon_csv(&out_dir.join("horizon.csv"), &curve)?;
    manifest.wall_ms.insert("horizon".into(), ms(t));

    let mut lipschitz = None;
    let mut bound_holds = None;
    if config.problem.kind.is_linear() && config.metrics.bound {
        let t = Instant::now();
        let report = verify_error_bound(&stepper, config.metrics.bound_perturbation)?;
        write_bound_csv(&out_dir.join("bound.csv"), &report.matched, report.lipschitz)?;
        write_bound_csv(&out_dir.join("bound_restart.csv"), &report.restarted, report.lipschitz)?;
        lipschitz = Some(report.lipschitz);
        bound_holds = Some(report.holds(BOUND_SLACK));
        manifest.wall_ms.insert("bound".into(), ms(t));
    } else if config.metrics.bound {
        // no certified Lipschitz constant: report e and delta_m only
        let t = Instant::now();
        let trace = bound_trace(&stepper, f64::NAN, &u0, &u0)?;
        write_bound_csv(&out_dir.join("bound.csv"), &trace, f64::NAN)?;
        manifest.wall_ms.insert("bound".into(), ms(t));
    }

    manifest.results = Some(RunResults {
        max_bond: rollout.diagnostics.iter().map(|d| d.max_bond).max().unwrap_or(0),
        final_rel_l2_vs_euler: rel_euler[k],
        max_rel_l2_vs_euler: rel_euler.iter().copied().fold(0.0, f64::max),
        final_rel_l2_vs_rk45: relative_l2(&qtn[k], &reference.states[k])?,
        max_boundary_abs,
        snapshot_steps: steps,
        horizon_trend_slope: curve.trend_slope(),
        horizon_max_std: Some(curve.std.iter().copied().fold(0.0, f64::max)),
        lipschitz,
        bound_holds,
    });
    manifest.wall_ms.insert("total".into(), ms(total));
    write_manifest(&manifest)?;
    Ok(manifest)
}
