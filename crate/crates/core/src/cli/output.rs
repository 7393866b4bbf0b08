//! On-disk artifact formats: snapshot grids and CSV tables.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{BoundTrace, HorizonCurve};
use crate::stepper::StepDiagnostics;
use crate::tensorization::GridSpec;

/// One snapshot on disk: time, axis sizes and the row-major field.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

pub fn snapshot_file_name(step: usize) -> String {
    format!("step_{step:06}.txt")
}

/// Writes `# t=<time> nx=<..> [ny=<..>]`, then one line per x index (a
/// single line in 1D) of values with 17 significant digits.
pub fn write_snapshot(path: &Path, grid: &GridSpec, time: f64, values: &[f64]) -> Result<()> {
    if values.len() != grid.total_points() {
        return Err(Error::Shape(format!("{} values for {} grid points", values.len(), grid.total_points())));
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(w, "# t={time} nx={}", grid.points(0))?;
    if grid.spatial_dim() == 2 {
        write!(w, " ny={}", grid.points(1))?;
    }
    writeln!(w)?;
    let row = if grid.spatial_dim() == 2 { grid.points(1) } else { values.len() };
    for chunk in values.chunks(row) {
        let line: Vec<String> = chunk.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let text = fs::read_to_string(path)?;
    let bad = |m: &str| Error::Syntax { line: 1, message: format!("{}: {m}", path.display()) };
    let mut lines = text.lines();
    let header = lines.next().and_then(|h| h.strip_prefix("# ")).ok_or_else(|| bad("missing header"))?;
    let mut time = None;
    let mut shape = Vec::new();
    for field in header.split_whitespace() {
        let (k, v) = field.split_once('=').ok_or_else(|| bad("malformed header field"))?;
        match k {
            "t" => time = Some(v.parse::<f64>().map_err(|_| bad("bad time"))?),
            "nx" | "ny" => shape.push(v.parse::<usize>().map_err(|_| bad("bad size"))?),
            _ => return Err(bad("unknown header field")),
        }
    }
    let time = time.ok_or_else(|| bad("missing time"))?;
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        for tok in line.split_whitespace() {
            values.push(tok.parse::<f64>().map_err(|_| Error::Syntax {
                line: i + 2,
                message: format!("{}: bad value `{tok}`", path.display()),
            })?);
        }
    }
    if shape.is_empty() || values.len() != shape.iter().product::<usize>() {
        return Err(bad("value count does not match header"));
    }
    Ok(Snapshot { time, shape, values })
}

/// Shortest round-trip exponent form, e.g. `1.5e-7`.
fn float(v: f64) -> String {
    format!("{v:e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(csv_error)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn finish(mut w: csv::Writer<fs::File>) -> Result<()> {
    w.flush()?;
    Ok(())
}

/// Columns `step, time, max_bond, discarded_weight, wall_ms`.
pub fn write_diagnostics_csv(path: &Path, rows: &[StepDiagnostics]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["step", "time", "max_bond", "discarded_weight", "wall_ms"]).map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            float(r.time),
            r.max_bond.to_string(),
            float(r.discarded_weight),
            float(r.wall_ms),
        ])
        .map_err(csv_error)?;
    }
    finish(w)
}

/// Columns `m, mean_rel_l2, std_rel_l2, n_restarts`.
pub fn write_horizon_csv(path: &Path, curve: &HorizonCurve) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["m", "mean_rel_l2", "std_rel_l2", "n_restarts"]).map_err(csv_error)?;
    for i in 0..curve.horizons.len() {
        w.write_record([
            curve.horizons[i].to_string(),
            float(curve.mean[i]),
            float(curve.std[i]),
            curve.restarts[i].to_string(),
        ])
        .map_err(csv_error)?;
    }
    finish(w)
}

/// Columns `m, delta_m, bound_m, L, e`.
pub fn write_bound_csv(path: &Path, trace: &BoundTrace, lipschitz: f64) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["m", "delta_m", "bound_m", "L", "e"]).map_err(csv_error)?;
    for r in &trace.rows {
        w.write_record([
            r.m.to_string(),
            float(r.delta),
            float(r.bound),
            float(lipschitz),
            float(trace.one_step_error),
        ])
        .map_err(csv_error)?;
    }
    finish(w)
}

/// Reads a CSV written by this module into its header and rows of numbers.
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let header = r.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Syntax {
                    line: i + 2,
                    message: format!("{}: bad number `{f}`", path.display()),
                })
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorization::Boundary;

    #[test]
    fn snapshot_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let grid = GridSpec::unit(2, &[4, 8], Boundary::Periodic).unwrap();
        let values: Vec<f64> = (0..32).map(|i| (i as f64 * 0.37).sin() / 3.0 + 1e-300 * i as f64).collect();
        let path = dir.path().join("s.txt");
        write_snapshot(&path, &grid, 0.1 + 0.2, &values).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# t=0.30000000000000004 nx=4 ny=8\n"));
        assert_eq!(text.lines().count(), 5);
        let s = read_snapshot(&path).unwrap();
        assert_eq!(s, Snapshot { time: 0.1 + 0.2, shape: vec![4, 8], values });
    }

    #[test]
    fn one_dimensional_snapshot_is_one_row() {
        let dir = tempfile::tempdir().unwrap();
        let grid = GridSpec::unit(2, &[8], Boundary::DirichletZero).unwrap();
        let path = dir.path().join("s.txt");
        write_snapshot(&path, &grid, 0.0, &[1.0; 8]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("# t=0 nx=8\n"));
    }

    #[test]
    fn horizon_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let curve = HorizonCurve {
            horizons: vec![0, 1, 2],
            mean: vec![1e-16, 0.1 + 0.2, 3.5e-7],
            std: vec![0.0, 1.0 / 3.0, 2e-9],
            restarts: vec![5, 5, 4],
        };
        let path = dir.path().join("h.csv");
        write_horizon_csv(&path, &curve).unwrap();
        let (header, rows) = read_numeric_csv(&path).unwrap();
        assert_eq!(header, ["m", "mean_rel_l2", "std_rel_l2", "n_restarts"]);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row[1], curve.mean[i]);
            assert_eq!(row[2], curve.std[i]);
        }
    }
}
