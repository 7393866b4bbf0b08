//! Run configuration: a flat `key = value` file with dotted section keys,
//! parsed as TOML and resolved with defaults and field-path errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::Value;

use crate::error::{Error, Result};
use crate::mps::TruncationParams;
use crate::reference::Rk45Tolerances;
use crate::stepper::{stable_time_grid, InitialCondition, PdeKind, PdeProblem, StepperConfig};
use crate::tensorization::{Axis, Boundary, GridSpec, Layout, LayoutVariant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub d: usize,
    pub points: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepperSettings {
    /// `None` means unbounded.
    pub chi_max: Option<usize>,
    pub eps_svd: f64,
    /// `None` means the state cap.
    pub mask_chi_max: Option<usize>,
    pub safety: f64,
    pub dt: Option<f64>,
    pub num_steps: Option<usize>,
    /// `None` means about 100 snapshots per run.
    pub snapshot_stride: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSettings {
    /// `None` means the 1-2-5 grid up to `max_horizon`.
    pub horizons: Option<Vec<usize>>,
    pub restart_stride: usize,
    pub max_horizon: Option<usize>,
    pub bound: bool,
    pub bound_perturbation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSettings {
    pub dir: Option<PathBuf>,
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub name: String,
    pub problem: PdeProblem,
    pub grid: GridConfig,
    pub layout: LayoutVariant,
    pub stepper: StepperSettings,
    pub reference: Rk45Tolerances,
    pub metrics: MetricsSettings,
    pub output: OutputSettings,
    pub seed: u64,
}

/// A configuration turned into solver objects.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub problem: PdeProblem,
    pub grid: GridSpec,
    pub layout: Layout,
    pub stepper: StepperConfig,
}

fn truncation(chi: Option<usize>, eps: f64) -> Result<TruncationParams> {
    TruncationParams::new(chi.unwrap_or(usize::MAX), eps)
}

impl RunConfig {
    pub fn grid_spec(&self) -> Result<GridSpec> {
        let axes = (0..self.grid.points.len())
            .map(|a| Axis {
                points: self.grid.points[a],
                lower: self.grid.lower[a],
                upper: self.grid.upper[a],
            })
            .collect();
        GridSpec::new(self.grid.d, axes, self.problem.boundary)
    }

    /// `(dt, K)`: explicit values when given, the stability rule otherwise.
    pub fn time_grid(&self, grid: &GridSpec) -> Result<(f64, usize)> {
        let t = self.problem.final_time;
        match (self.stepper.dt, self.stepper.num_steps) {
            (Some(dt), Some(k)) => {
                if (dt * k as f64 - t).abs() > dt {
                    return Err(Error::Config(format!(
                        "stepper.dt * stepper.num_steps = {} is not within one step of final_time {t}",
                        dt * k as f64
                    )));
                }
                Ok((dt, k))
            }
            (Some(dt), None) => {
                let k = (t / dt - 1e-9).ceil().max(1.0) as usize;
                Ok((dt, k))
            }
            (None, Some(k)) => Ok((t / k.max(1) as f64, k)),
            (None, None) => stable_time_grid(&self.problem, grid, self.stepper.safety),
        }
    }

    pub fn resolve(&self) -> Result<Resolved> {
        self.problem.validate()?;
        let grid = self.grid_spec()?;
        let layout = Layout::for_grid(&grid, self.layout)?;
        let (dt, num_steps) = self.time_grid(&grid)?;
        let state = truncation(self.stepper.chi_max, self.stepper.eps_svd)?;
        let mask = truncation(self.stepper.mask_chi_max.or(self.stepper.chi_max), self.stepper.eps_svd)?;
        let snapshot_stride = self
            .stepper
            .snapshot_stride
            .unwrap_or_else(|| num_steps.div_ceil(100).max(1));
        let stepper = StepperConfig {
            dt,
            num_steps,
            state_truncation: state,
            mask_truncation: mask,
            snapshot_stride,
        };
        stepper.validate()?;
        Ok(Resolved { problem: self.problem.clone(), grid, layout, stepper })
    }

    /// Canonical text form; parses back to an identical configuration.
    pub fn to_config_text(&self) -> String {
        let mut lines: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| lines.push((k.to_string(), v));
        put("name", quote(&self.name));
        let p = &self.problem;
        put("problem.kind", quote(p.kind.tag()));
        put("problem.boundary", quote(p.boundary.tag()));
        if p.kind == PdeKind::AdvectionDiffusion {
            put("problem.velocity", float_list(&p.velocity));
        }
        put("problem.viscosity", float(p.viscosity));
        put("problem.final_time", float(p.final_time));
        match &p.initial {
            InitialCondition::Gaussian { center, sharpness } => {
                put("initial.kind", quote("gaussian"));
                put("initial.center", float_list(center));
                put("initial.sharpness", float(*sharpness));
            }
            InitialCondition::Sine { mean, amplitude } => {
                put("initial.kind", quote("sine"));
                put("initial.mean", float(*mean));
                put("initial.amplitude", float(*amplitude));
            }
        }
        put("grid.d", self.grid.d.to_string());
        put("grid.points", int_list(&self.grid.points));
        put("grid.lower", float_list(&self.grid.lower));
        put("grid.upper", float_list(&self.grid.upper));
        put("layout.variant", quote(self.layout.tag()));
        let s = &self.stepper;
        put("stepper.chi_max", s.chi_max.map_or_else(|| quote("inf"), |c| c.to_string()));
        put("stepper.eps_svd", float(s.eps_svd));
        if let Some(m) = s.mask_chi_max {
            put("stepper.mask_chi_max", m.to_string());
        }
        put("stepper.safety", float(s.safety));
        if let Some(dt) = s.dt {
            put("stepper.dt", float(dt));
        }
        if let Some(k) = s.num_steps {
            put("stepper.num_steps", k.to_string());
        }
        if let Some(st) = s.snapshot_stride {
            put("stepper.snapshot_stride", st.to_string());
        }
        put("reference.rtol", float(self.reference.rtol));
        put("reference.atol", float(self.reference.atol));
        let m = &self.metrics;
        if let Some(h) = &m.horizons {
            put("metrics.horizons", int_list(h));
        }
        put("metrics.restart_stride", m.restart_stride.to_string());
        if let Some(h) = m.max_horizon {
            put("metrics.max_horizon", h.to_string());
        }
        put("metrics.bound", m.bound.to_string());
        put("metrics.bound_perturbation", float(m.bound_perturbation));
        if let Some(dir) = &self.output.dir {
            put("output.dir", quote(&dir.to_string_lossy()));
        }
        put("output.snapshot_times", float_list(&self.output.snapshot_times));
        put("seed", self.seed.to_string());
        lines.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn quote(s: &str) -> String {
    Value::String(s.to_string()).to_string()
}

fn float(v: f64) -> String {
    // Debug formatting is the shortest representation that round-trips
    let s = format!("{v:?}");
    if s.contains(['.', 'e', 'E']) { s } else { format!("{s}.0") }
}

fn float_list(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| float(*x)).collect::<Vec<_>>().join(", "))
}

fn int_list(v: &[usize]) -> String {
    format!("[{}]", v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", "))
}

/// Splits nested tables into dotted keys.
fn flatten(prefix: &str, table: toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other);
            }
        }
    }
}

fn parse_table(text: &str) -> Result<BTreeMap<String, Value>> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e.span().map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        Error::Syntax { line, message: e.message().to_string() }
    })?;
    let mut out = BTreeMap::new();
    flatten("", table, &mut out);
    Ok(out)
}

/// Parses one `key=value` override. Values that are not valid TOML are
/// taken as bare strings.
pub fn parse_override(spec: &str) -> Result<(String, Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key, value))
}

/// Reads typed fields out of the flat key map, collecting every problem.
struct Fields {
    values: BTreeMap<String, Value>,
    errors: Vec<FieldError>,
}

impl Fields {
    fn error(&mut self, path: &str, message: impl Into<String>) {
        self.errors.push(FieldError { path: path.to_string(), message: message.into() });
    }

    fn take(&mut self, path: &str) -> Option<Value> {
        self.values.remove(path)
    }

    fn missing<T>(&mut self, path: &str) -> Option<T> {
        self.error(path, "missing");
        None
    }

    fn float_of(&mut self, path: &str, v: Value) -> Option<f64> {
        match v {
            Value::Float(f) => Some(f),
            Value::Integer(i) => Some(i as f64),
            other => {
                self.error(path, format!("expected a number, found {}", other.type_str()));
                None
            }
        }
    }

    fn uint_of(&mut self, path: &str, v: Value) -> Option<usize> {
        match v {
            Value::Integer(i) if i >= 0 => Some(i as usize),
            other => {
                self.error(path, format!("expected a non-negative integer, found {other}"));
                None
            }
        }
    }

    fn opt_float(&mut self, path: &str) -> Option<Option<f64>> {
        match self.take(path) {
            Some(v) => self.float_of(path, v).map(Some),
            None => Some(None),
        }
    }

    fn float(&mut self, path: &str) -> Option<f64> {
        match self.take(path) {
            Some(v) => self.float_of(path, v),
            None => self.missing(path),
        }
    }

    fn float_or(&mut self, path: &str, default: f64) -> Option<f64> {
        match self.take(path) {
            Some(v) => self.float_of(path, v),
            None => Some(default),
        }
    }

    fn opt_uint(&mut self, path: &str) -> Option<Option<usize>> {
        match self.take(path) {
            Some(v) => self.uint_of(path, v).map(Some),
            None => Some(None),
        }
    }

    fn uint_or(&mut self, path: &str, default: usize) -> Option<usize> {
        match self.take(path) {
            Some(v) => self.uint_of(path, v),
            None => Some(default),
        }
    }

    fn string(&mut self, path: &str) -> Option<String> {
        match self.take(path) {
            Some(Value::String(s)) => Some(s),
            Some(other) => {
                self.error(path, format!("expected a string, found {}", other.type_str()));
                None
            }
            None => self.missing(path),
        }
    }

    fn string_or(&mut self, path: &str, default: &str) -> Option<String> {
        if self.values.contains_key(path) {
            self.string(path)
        } else {
            Some(default.to_string())
        }
    }

    fn bool_or(&mut self, path: &str, default: bool) -> Option<bool> {
        match self.take(path) {
            Some(Value::Boolean(b)) => Some(b),
            Some(other) => {
                self.error(path, format!("expected true or false, found {}", other.type_str()));
                None
            }
            None => Some(default),
        }
    }

    fn list_of<T>(&mut self, path: &str, v: Value, each: impl Fn(&mut Self, &str, Value) -> Option<T>) -> Option<Vec<T>> {
        match v {
            Value::Array(items) => {
                let n = self.errors.len();
                let out: Vec<Option<T>> = items
                    .into_iter()
                    .enumerate()
                    .map(|(i, item)| each(self, &format!("{path}[{i}]"), item))
                    .collect();
                (self.errors.len() == n).then(|| out.into_iter().flatten().collect())
            }
            other => {
                self.error(path, format!("expected a list, found {}", other.type_str()));
                None
            }
        }
    }

    fn float_list(&mut self, path: &str) -> Option<Vec<f64>> {
        match self.take(path) {
            Some(v) => self.list_of(path, v, Self::float_of),
            None => self.missing(path),
        }
    }

    fn opt_float_list(&mut self, path: &str) -> Option<Option<Vec<f64>>> {
        match self.take(path) {
            Some(v) => self.list_of(path, v, Self::float_of).map(Some),
            None => Some(None),
        }
    }

    fn uint_list(&mut self, path: &str) -> Option<Vec<usize>> {
        match self.take(path) {
            Some(v) => self.list_of(path, v, Self::uint_of),
            None => self.missing(path),
        }
    }

    fn opt_uint_list(&mut self, path: &str) -> Option<Option<Vec<usize>>> {
        match self.take(path) {
            Some(v) => self.list_of(path, v, Self::uint_of).map(Some),
            None => Some(None),
        }
    }

    fn choice<T: Copy>(&mut self, path: &str, default: Option<&str>, options: &[(&str, T)]) -> Option<T> {
        let s = match default {
            Some(d) => self.string_or(path, d)?,
            None => self.string(path)?,
        };
        match options.iter().find(|(name, _)| *name == s) {
            Some((_, v)) => Some(*v),
            None => {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.error(path, format!("unknown value `{s}` (expected one of {})", names.join(", ")));
                None
            }
        }
    }

    /// `chi_max` style field: a positive integer or `"inf"`.
    fn cap(&mut self, path: &str) -> Option<Option<usize>> {
        match self.take(path) {
            None => Some(None),
            Some(Value::String(s)) if s == "inf" => Some(None),
            Some(Value::Integer(i)) if i >= 1 => Some(Some(i as usize)),
            Some(other) => {
                self.error(path, format!("expected a positive integer or \"inf\", found {other}"));
                None
            }
        }
    }

    fn check(&mut self, path: &str, ok: bool, message: &str) {
        if !ok {
            self.error(path, message);
        }
    }
}

fn build(values: BTreeMap<String, Value>) -> std::result::Result<RunConfig, Vec<FieldError>> {
    let mut f = Fields { values, errors: Vec::new() };
    let name = f.string_or("name", "run");
    let kind = f.choice(
        "problem.kind",
        None,
        &[("advection_diffusion", PdeKind::AdvectionDiffusion), ("burgers", PdeKind::Burgers)],
    );
    let boundary = f.choice(
        "problem.boundary",
        None,
        &[("dirichlet_zero", Boundary::DirichletZero), ("periodic", Boundary::Periodic)],
    );
    let velocity = match kind {
        Some(PdeKind::AdvectionDiffusion) => f.float_list("problem.velocity"),
        _ => {
            if f.values.contains_key("problem.velocity") {
                f.take("problem.velocity");
                f.error("problem.velocity", "not used by burgers");
            }
            Some(Vec::new())
        }
    };
    let viscosity = f.float("problem.viscosity");
    let final_time = f.float("problem.final_time");
    let initial_kind = f.choice("initial.kind", None, &[("gaussian", 0u8), ("sine", 1u8)]);
    let initial = match initial_kind {
        Some(0) => {
            let center = f.float_list("initial.center");
            let sharpness = f.float("initial.sharpness");
            center.zip(sharpness).map(|(center, sharpness)| InitialCondition::Gaussian { center, sharpness })
        }
        Some(_) => {
            let mean = f.float("initial.mean");
            let amplitude = f.float("initial.amplitude");
            mean.zip(amplitude).map(|(mean, amplitude)| InitialCondition::Sine { mean, amplitude })
        }
        None => None,
    };
    let d = f.uint_or("grid.d", 2);
    let points = f.uint_list("grid.points");
    let dims = points.as_ref().map_or(1, Vec::len);
    let lower = f.opt_float_list("grid.lower").map(|v| v.unwrap_or_else(|| vec![0.0; dims]));
    let upper = f.opt_float_list("grid.upper").map(|v| v.unwrap_or_else(|| vec![1.0; dims]));
    let layout = f.choice(
        "layout.variant",
        Some("interleaved"),
        &[("interleaved", LayoutVariant::Interleaved), ("sequential", LayoutVariant::Sequential)],
    );
    let chi_max = f.cap("stepper.chi_max");
    let eps_svd = f.float_or("stepper.eps_svd", 1e-12);
    let mask_chi_max = f.cap("stepper.mask_chi_max");
    let safety = f.float_or("stepper.safety", 0.4);
    let dt = f.opt_float("stepper.dt");
    let num_steps = f.opt_uint("stepper.num_steps");
    let snapshot_stride = f.opt_uint("stepper.snapshot_stride");
    let rtol = f.float_or("reference.rtol", Rk45Tolerances::default().rtol);
    let atol = f.float_or("reference.atol", Rk45Tolerances::default().atol);
    let horizons = f.opt_uint_list("metrics.horizons");
    let restart_stride = f.uint_or("metrics.restart_stride", 1);
    let max_horizon = f.opt_uint("metrics.max_horizon");
    let bound = f.bool_or("metrics.bound", true);
    let bound_perturbation = f.float_or("metrics.bound_perturbation", 1e-3);
    let dir = if f.values.contains_key("output.dir") {
        f.string("output.dir").map(|s| Some(PathBuf::from(s)))
    } else {
        Some(None)
    };
    let snapshot_times = f.opt_float_list("output.snapshot_times").map(Option::unwrap_or_default);
    let seed = f.uint_or("seed", 0).map(|s| s as u64);

    let leftover: Vec<String> = f.values.keys().cloned().collect();
    for key in leftover {
        f.error(&key, "unknown key");
    }

    // semantic checks on whatever parsed
    if let (Some(points), Some(d)) = (&points, d) {
        f.check("grid.points", (1..=2).contains(&points.len()), "one or two axes supported");
        for (i, &p) in points.iter().enumerate() {
            let mut q = 1usize;
            while q < p && q.checked_mul(d).is_some() && d >= 2 {
                q *= d;
            }
            if d < 2 || p < d || q != p {
                f.error(&format!("grid.points[{i}]"), format!("{p} is not a power of {d} (>= {d})"));
            }
        }
    }
    if let Some(d) = d {
        f.check("grid.d", d >= 2, "must be >= 2");
        f.check("grid.d", d == 2, "finite-difference operators need d = 2");
    }
    for (path, axis_values) in [("grid.lower", &lower), ("grid.upper", &upper)] {
        if let Some(v) = axis_values {
            f.check(path, v.len() == dims, "needs one entry per axis");
        }
    }
    if let (Some(lo), Some(hi)) = (&lower, &upper) {
        f.check("grid.upper", lo.iter().zip(hi).all(|(a, b)| b > a), "must exceed grid.lower");
    }
    if let (Some(PdeKind::AdvectionDiffusion), Some(v)) = (kind, &velocity) {
        f.check("problem.velocity", v.len() == dims, "needs one component per axis");
    }
    if let Some(Some(InitialCondition::Gaussian { center, .. })) = Some(&initial) {
        f.check("initial.center", center.len() == dims, "needs one component per axis");
    }
    if let Some(v) = viscosity {
        f.check("problem.viscosity", v >= 0.0 && v.is_finite(), "must be >= 0");
    }
    if let Some(t) = final_time {
        f.check("problem.final_time", t > 0.0 && t.is_finite(), "must be > 0");
    }
    if let Some(e) = eps_svd {
        f.check("stepper.eps_svd", (0.0..1.0).contains(&e), "must lie in [0, 1)");
    }
    if let Some(s) = safety {
        f.check("stepper.safety", s > 0.0 && s <= 1.0, "must lie in (0, 1]");
    }
    if let Some(Some(dt)) = dt {
        f.check("stepper.dt", dt > 0.0 && dt.is_finite(), "must be > 0");
    }
    if let Some(Some(s)) = snapshot_stride {
        f.check("stepper.snapshot_stride", s >= 1, "must be >= 1");
    }
    if let Some(r) = restart_stride {
        f.check("metrics.restart_stride", r >= 1, "must be >= 1");
    }
    for (path, v) in [("reference.rtol", rtol), ("reference.atol", atol)] {
        if let Some(v) = v {
            f.check(path, v > 0.0 && v.is_finite(), "must be > 0");
        }
    }

    if !f.errors.is_empty() {
        return Err(f.errors);
    }
    let unwrap = "all fields parsed";
    Ok(RunConfig {
        name: name.expect(unwrap),
        problem: PdeProblem {
            kind: kind.expect(unwrap),
            spatial_dim: dims,
            velocity: velocity.expect(unwrap),
            viscosity: viscosity.expect(unwrap),
            boundary: boundary.expect(unwrap),
            initial: initial.expect(unwrap),
            final_time: final_time.expect(unwrap),
        },
        grid: GridConfig {
            d: d.expect(unwrap),
            points: points.expect(unwrap),
            lower: lower.expect(unwrap),
            upper: upper.expect(unwrap),
        },
        layout: layout.expect(unwrap),
        stepper: StepperSettings {
            chi_max: chi_max.expect(unwrap),
            eps_svd: eps_svd.expect(unwrap),
            mask_chi_max: mask_chi_max.expect(unwrap),
            safety: safety.expect(unwrap),
            dt: dt.expect(unwrap),
            num_steps: num_steps.expect(unwrap),
            snapshot_stride: snapshot_stride.expect(unwrap),
        },
        reference: Rk45Tolerances { rtol: rtol.expect(unwrap), atol: atol.expect(unwrap) },
        metrics: MetricsSettings {
            horizons: horizons.expect(unwrap),
            restart_stride: restart_stride.expect(unwrap),
            max_horizon: max_horizon.expect(unwrap),
            bound: bound.expect(unwrap),
            bound_perturbation: bound_perturbation.expect(unwrap),
        },
        output: OutputSettings { dir: dir.expect(unwrap), snapshot_times: snapshot_times.expect(unwrap) },
        seed: seed.expect(unwrap),
    })
}

/// Parses configuration text, applies `overrides` and resolves defaults.
/// Every field error is reported at once.
pub fn parse_config(text: &str, overrides: &[(String, Value)]) -> Result<RunConfig> {
    let mut values = parse_table(text)?;
    for (k, v) in overrides {
        values.insert(k.clone(), v.clone());
    }
    let config = build(values).map_err(|errors| Error::InvalidConfig { errors })?;
    // resolution errors (grid, time step) are reported against the config as a whole
    config.resolve()?;
    Ok(config)
}

pub fn validate_config(path: &Path, overrides: &[(String, Value)]) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?, overrides)
}

pub const PRESETS: [(&str, &str); 4] = [
    ("advdiff1d", include_str!("../../presets/advdiff1d.toml")),
    ("advdiff2d", include_str!("../../presets/advdiff2d.toml")),
    ("burgers1d", include_str!("../../presets/burgers1d.toml")),
    ("burgers2d", include_str!("../../presets/burgers2d.toml")),
];

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset(name: &str) -> Result<RunConfig> {
    let text = preset_text(name).ok_or_else(|| Error::Config(format!("no preset named `{name}`")))?;
    parse_config(text, &[])
}
