//! CSV and JSON import/export for grid functions, snapshot sets, spectra,
//! sensor layouts, reconstructions and multiscale decompositions.
//!
//! Reals are written with 17 significant digits so files round-trip exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::bias::OffsetTable;
use crate::error::{Error, Result};
use crate::manifold::{ParameterRecord, SnapshotSet};
use crate::multiscale::MultiscaleDecomposition;
use crate::obs::{SensorArray, SensorKind};
use crate::rom::ReducedBasis;
use crate::solver::Reconstruction;
use crate::space::{Grid, GridFunction};

pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn bad(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("{}: {msg}", path.display()))
}

/// Reads numeric CSV rows after a header line; `#` lines are skipped.
fn read_table(path: &Path, header: &[&str]) -> Result<Vec<Vec<String>>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    let mut seen_header = false;
    for line in reader.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let cells: Vec<String> = t.split(',').map(|c| c.trim().to_string()).collect();
        if !seen_header {
            if cells.iter().map(String::as_str).ne(header.iter().copied()) {
                return Err(bad(path, format!("expected header `{}`", header.join(","))));
            }
            seen_header = true;
            continue;
        }
        if cells.len() != header.len() {
            return Err(bad(path, format!("row `{t}` has {} fields, expected {}", cells.len(), header.len())));
        }
        rows.push(cells);
    }
    Ok(rows)
}

fn real(path: &Path, s: &str) -> Result<f64> {
    s.parse().map_err(|_| bad(path, format!("`{s}` is not a number")))
}

/// Grid inferred from a column of uniformly spaced nodes.
fn grid_from_nodes(path: &Path, xs: &[f64]) -> Result<Grid> {
    if xs.len() < 2 {
        return Err(bad(path, "need at least two nodes"));
    }
    let grid = Grid::new(xs[0], xs[xs.len() - 1], xs.len())?;
    let tol = 1e-9 * grid.spacing();
    if xs.iter().enumerate().any(|(k, &x)| (x - grid.node(k)).abs() > tol) {
        return Err(bad(path, "nodes are not uniformly spaced"));
    }
    Ok(grid)
}

pub fn write_grid_function(path: &Path, u: &GridFunction) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "x,value")?;
    for (x, v) in u.grid().nodes().zip(u.values()) {
        writeln!(w, "{},{}", fmt_real(x), fmt_real(*v))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_grid_function(path: &Path) -> Result<GridFunction> {
    let rows = read_table(path, &["x", "value"])?;
    let xs = rows.iter().map(|r| real(path, &r[0])).collect::<Result<Vec<_>>>()?;
    let vs = rows.iter().map(|r| real(path, &r[1])).collect::<Result<Vec<_>>>()?;
    GridFunction::new(grid_from_nodes(path, &xs)?, vs)
}

#[derive(Serialize)]
struct SnapshotSidecar<'a> {
    label: crate::manifold::ManifoldLabel,
    grid: Grid,
    seed: Option<u64>,
    parameters: &'a [ParameterRecord],
}

/// CSV matrix (first column `x`, then `s0, s1, ...`) plus a JSON sidecar at
/// `path` with extension `.json`.
pub fn write_snapshot_set(path: &Path, set: &SnapshotSet, seed: Option<u64>) -> Result<()> {
    let mut w = create(path)?;
    let header: Vec<String> = std::iter::once("x".to_string())
        .chain((0..set.len()).map(|k| format!("s{k}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (i, x) in set.grid().nodes().enumerate() {
        let mut line = fmt_real(x);
        for s in set.snapshots() {
            line.push(',');
            line.push_str(&fmt_real(s.values()[i]));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    let sidecar = SnapshotSidecar {
        label: set.label(),
        grid: *set.grid(),
        seed,
        parameters: set.parameters(),
    };
    let mut j = create(&path.with_extension("json"))?;
    serde_json::to_writer_pretty(&mut j, &sidecar)?;
    j.flush()?;
    Ok(())
}

/// Spectrum CSV `mode,singular_value,cumulative_energy`.
pub fn write_spectrum(path: &Path, basis: &ReducedBasis) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "mode,singular_value,cumulative_energy")?;
    for (mode, s, e) in basis.spectrum() {
        writeln!(w, "{mode},{},{}", fmt_real(s), fmt_real(e))?;
    }
    w.flush()?;
    Ok(())
}

/// Sensor layout CSV `center,kind,width` (`width` empty for pointwise sensors).
pub fn write_sensors(path: &Path, sensors: &SensorArray) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "center,kind,width")?;
    for c in sensors.centers() {
        match sensors.kind() {
            SensorKind::Pointwise => writeln!(w, "{},pointwise,", fmt_real(*c))?,
            SensorKind::BoxAverage { width } => writeln!(w, "{},box,{}", fmt_real(*c), fmt_real(width))?,
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_sensors(path: &Path) -> Result<SensorArray> {
    let rows = read_table(path, &["center", "kind", "width"])?;
    if rows.is_empty() {
        return Err(Error::Empty("sensor array"));
    }
    let mut centers = Vec::with_capacity(rows.len());
    let mut kind: Option<SensorKind> = None;
    for r in &rows {
        centers.push(real(path, &r[0])?);
        let k = match r[1].as_str() {
            "pointwise" => SensorKind::Pointwise,
            "box" => SensorKind::BoxAverage {
                width: real(path, &r[2])?,
            },
            other => return Err(bad(path, format!("unknown sensor kind `{other}`"))),
        };
        match kind {
            None => kind = Some(k),
            Some(prev) if prev != k => return Err(bad(path, "all sensors must share one kind and width")),
            _ => {}
        }
    }
    SensorArray::new(centers, kind.expect("at least one row"))
}

/// `u*` as CSV plus JSON diagnostics next to it.
pub fn write_reconstruction(path: &Path, rec: &Reconstruction) -> Result<()> {
    write_grid_function(path, &rec.state)?;
    let mut j = create(&path.with_extension("json"))?;
    serde_json::to_writer_pretty(&mut j, &rec.diagnostics())?;
    j.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct DecompositionSidecar {
    smoother_locations: Vec<f64>,
    amplitudes: Vec<f64>,
    corrected_amplitudes: Vec<f64>,
    residual_history: Vec<f64>,
}

/// CSV `x,u_star,u_f,f_u` plus JSON with the smoothers and residual history.
pub fn write_decomposition(path: &Path, dec: &MultiscaleDecomposition) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "x,u_star,u_f,f_u")?;
    let grid = *dec.u_star.grid();
    for (i, x) in grid.nodes().enumerate() {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_real(x),
            fmt_real(dec.u_star.values()[i]),
            fmt_real(dec.u_f.state.values()[i]),
            fmt_real(dec.f_u.values()[i])
        )?;
    }
    w.flush()?;
    let sidecar = DecompositionSidecar {
        smoother_locations: dec.smoothers.iter().map(|s| s.location).collect(),
        amplitudes: dec.smoothers.iter().map(|s| s.amplitude).collect(),
        corrected_amplitudes: dec.corrected_amplitudes.clone(),
        residual_history: dec.residual_history.clone(),
    };
    let mut j = create(&path.with_extension("json"))?;
    serde_json::to_writer_pretty(&mut j, &sidecar)?;
    j.flush()?;
    Ok(())
}

/// Offset table CSV `lower,upper,offset` with contiguous bins.
pub fn read_offset_table(path: &Path) -> Result<OffsetTable> {
    let rows = read_table(path, &["lower", "upper", "offset"])?;
    if rows.is_empty() {
        return Err(Error::Empty("offset table"));
    }
    let mut edges = Vec::with_capacity(rows.len() + 1);
    let mut offsets = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let (lo, hi) = (real(path, &r[0])?, real(path, &r[1])?);
        if i == 0 {
            edges.push(lo);
        } else if lo != *edges.last().expect("nonempty") {
            return Err(bad(path, format!("bin {i} does not start where bin {} ends", i - 1)));
        }
        edges.push(hi);
        offsets.push(real(path, &r[2])?);
    }
    OffsetTable::new(edges, offsets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{sample_sinusoids, SinusoidSpec};

    #[test]
    fn grid_function_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::default_periodic();
        let u = GridFunction::from_fn(g, |x| (1.0 / 3.0) * x.sin() + 1e-17);
        let p = dir.path().join("u.csv");
        write_grid_function(&p, &u).unwrap();
        let back = read_grid_function(&p).unwrap();
        assert_eq!(back.values(), u.values());
        assert_eq!(back.grid().len(), g.len());
        assert!((back.grid().b() - g.b()).abs() < 1e-15);
    }

    #[test]
    fn sensors_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::default_periodic();
        for pointwise in [true, false] {
            let s = SensorArray::equidistant(&g, 7, pointwise).unwrap();
            let p = dir.path().join("s.csv");
            write_sensors(&p, &s).unwrap();
            assert_eq!(read_sensors(&p).unwrap(), s);
        }
    }

    #[test]
    fn snapshot_set_writes_matrix_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(0.0, 1.0, 5).unwrap();
        let set = sample_sinusoids(&SinusoidSpec::default(), g, 3, 1).unwrap();
        let p = dir.path().join("snap.csv");
        write_snapshot_set(&p, &set, Some(1)).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next().unwrap(), "x,s0,s1,s2");
        assert_eq!(text.lines().count(), 6);
        let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.with_extension("json")).unwrap()).unwrap();
        assert_eq!(json["parameters"].as_array().unwrap().len(), 3);
        assert_eq!(json["seed"], 1);
    }

    #[test]
    fn offset_table_reads_contiguous_bins() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::write(&p, "lower,upper,offset\n0,1,0.5\n1,2,-0.5\n").unwrap();
        let t = read_offset_table(&p).unwrap();
        assert_eq!(t.offset(0.5), 0.5);
        assert_eq!(t.offset(1.5), -0.5);
        std::fs::write(&p, "lower,upper,offset\n0,1,0.5\n1.5,2,-0.5\n").unwrap();
        assert!(read_offset_table(&p).is_err());
    }

    #[test]
    fn wrong_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.csv");
        std::fs::write(&p, "a,b\n0,1\n").unwrap();
        assert!(read_grid_function(&p).is_err());
    }
}
