//! Files produced by a run: CSV diagnostics, VTK surface snapshots, JSON
//! reports and MatrixMarket dumps of the step matrices.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::analytic::InitialSurface;
use crate::assembly::AssembledSystem;
use crate::config::{ScenarioConfig, VtkFormat};
use crate::error::{FlowError, Result};
use crate::flow::{FlowProblem, FlowState, StepDiagnostics};

pub const CSV_HEADER: &str = "t,area,max_abs_kappa,constraint_residual,solver_residual,wallclock_s";

/// One parsed CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CsvRow {
    pub t: f64,
    pub area: f64,
    pub max_abs_kappa: f64,
    pub constraint_residual: f64,
    pub solver_residual: f64,
    pub wallclock_s: f64,
}

/// Diagnostics as CSV text, 17 significant digits per value.
pub fn format_diagnostics_csv(rows: &[StepDiagnostics]) -> Result<String> {
    if rows.is_empty() {
        return Err(FlowError::Config("no diagnostics rows to write".into()));
    }
    let mut out = String::with_capacity(120 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for d in rows {
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            d.time,
            d.area,
            d.max_abs_kappa,
            d.constraint_residual,
            d.max_solver_residual(),
            d.wallclock
        );
    }
    Ok(out)
}

pub fn write_diagnostics_csv(path: &Path, rows: &[StepDiagnostics]) -> Result<()> {
    let text = format_diagnostics_csv(rows)?;
    fs::write(path, text).map_err(|e| FlowError::io(path, e))
}

pub fn parse_diagnostics_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(FlowError::Config("diagnostics CSV has an unexpected header".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| FlowError::Config(format!("bad CSV row {line:?}: {e}")))?;
            match vals[..] {
                [t, area, max_abs_kappa, constraint_residual, solver_residual, wallclock_s] => Ok(CsvRow {
                    t,
                    area,
                    max_abs_kappa,
                    constraint_residual,
                    solver_residual,
                    wallclock_s,
                }),
                _ => Err(FlowError::Config(format!("CSV row {line:?} has {} columns", vals.len()))),
            }
        })
        .collect()
}

/// The surface sampled on a uniform grid with `resolution` cells per
/// element and direction, row-major in `v` then `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSamples {
    /// Samples per direction, `resolution · N + 1`.
    pub side: usize,
    pub points: Vec<[f64; 3]>,
    pub kappa: Vec<f64>,
    pub nu: Vec<[f64; 3]>,
    pub velocity: Vec<[f64; 3]>,
}

impl SurfaceSamples {
    pub fn from_state(state: &FlowState, resolution: usize) -> Result<Self> {
        if resolution == 0 {
            return Err(FlowError::Config("VTK resolution must be positive".into()));
        }
        let (n, _) = state.x.space().elements();
        let cells = resolution * n;
        let side = cells + 1;
        let mut s = SurfaceSamples {
            side,
            points: Vec::with_capacity(side * side),
            kappa: Vec::with_capacity(side * side),
            nu: Vec::with_capacity(side * side),
            velocity: Vec::with_capacity(side * side),
        };
        let three = |v: Vec<f64>| [v[0], v[1], v[2]];
        for j in 0..side {
            for i in 0..side {
                let (u, v) = (i as f64 / cells as f64, j as f64 / cells as f64);
                s.points.push(three(state.x.eval(u, v)?));
                s.kappa.push(state.kappa.eval(u, v)?[0]);
                s.nu.push(three(state.nu.eval(u, v)?));
                s.velocity.push(three(state.v.eval(u, v)?));
            }
        }
        Ok(s)
    }

    pub fn num_cells(&self) -> usize {
        (self.side - 1) * (self.side - 1)
    }

    /// Corner indices of each quad, counterclockwise in the parameter square.
    pub fn quads(&self) -> impl Iterator<Item = [usize; 4]> + '_ {
        let m = self.side;
        (0..m - 1).flat_map(move |j| (0..m - 1).map(move |i| [j * m + i, j * m + i + 1, (j + 1) * m + i + 1, (j + 1) * m + i]))
    }

    /// Legacy ASCII VTK unstructured grid.
    pub fn to_legacy_vtk(&self, title: &str) -> String {
        let np = self.points.len();
        let nc = self.num_cells();
        let mut out = String::with_capacity(np * 200);
        let _ = writeln!(out, "# vtk DataFile Version 3.0");
        let _ = writeln!(out, "{}", title.lines().next().unwrap_or(""));
        let _ = writeln!(out, "ASCII");
        let _ = writeln!(out, "DATASET UNSTRUCTURED_GRID");
        let _ = writeln!(out, "POINTS {np} double");
        for p in &self.points {
            let _ = writeln!(out, "{:.16e} {:.16e} {:.16e}", p[0], p[1], p[2]);
        }
        let _ = writeln!(out, "CELLS {nc} {}", 5 * nc);
        for q in self.quads() {
            let _ = writeln!(out, "4 {} {} {} {}", q[0], q[1], q[2], q[3]);
        }
        let _ = writeln!(out, "CELL_TYPES {nc}");
        for _ in 0..nc {
            let _ = writeln!(out, "9");
        }
        let _ = writeln!(out, "POINT_DATA {np}");
        let _ = writeln!(out, "SCALARS kappa double 1");
        let _ = writeln!(out, "LOOKUP_TABLE default");
        for k in &self.kappa {
            let _ = writeln!(out, "{k:.16e}");
        }
        for (name, data) in [("nu", &self.nu), ("velocity", &self.velocity)] {
            let _ = writeln!(out, "VECTORS {name} double");
            for v in data {
                let _ = writeln!(out, "{:.16e} {:.16e} {:.16e}", v[0], v[1], v[2]);
            }
        }
        out
    }

    /// XML `.vtu` with ASCII data arrays.
    pub fn to_vtu(&self) -> String {
        let np = self.points.len();
        let nc = self.num_cells();
        let mut out = String::with_capacity(np * 200);
        let vec3 = |out: &mut String, data: &[[f64; 3]]| {
            for v in data {
                let _ = writeln!(out, "{:.16e} {:.16e} {:.16e}", v[0], v[1], v[2]);
            }
        };
        out.push_str("<?xml version=\"1.0\"?>\n");
        out.push_str("<VTKFile type=\"UnstructuredGrid\" version=\"0.1\" byte_order=\"LittleEndian\">\n");
        out.push_str("<UnstructuredGrid>\n");
        let _ = writeln!(out, "<Piece NumberOfPoints=\"{np}\" NumberOfCells=\"{nc}\">");
        out.push_str("<PointData Scalars=\"kappa\" Vectors=\"nu\">\n");
        out.push_str("<DataArray type=\"Float64\" Name=\"kappa\" format=\"ascii\">\n");
        for k in &self.kappa {
            let _ = writeln!(out, "{k:.16e}");
        }
        out.push_str("</DataArray>\n");
        for (name, data) in [("nu", &self.nu), ("velocity", &self.velocity)] {
            let _ = writeln!(out, "<DataArray type=\"Float64\" Name=\"{name}\" NumberOfComponents=\"3\" format=\"ascii\">");
            vec3(&mut out, data);
            out.push_str("</DataArray>\n");
        }
        out.push_str("</PointData>\n<Points>\n");
        out.push_str("<DataArray type=\"Float64\" NumberOfComponents=\"3\" format=\"ascii\">\n");
        vec3(&mut out, &self.points);
        out.push_str("</DataArray>\n</Points>\n<Cells>\n");
        out.push_str("<DataArray type=\"Int64\" Name=\"connectivity\" format=\"ascii\">\n");
        for q in self.quads() {
            let _ = writeln!(out, "{} {} {} {}", q[0], q[1], q[2], q[3]);
        }
        out.push_str("</DataArray>\n<DataArray type=\"Int64\" Name=\"offsets\" format=\"ascii\">\n");
        for c in 1..=nc {
            let _ = writeln!(out, "{}", 4 * c);
        }
        out.push_str("</DataArray>\n<DataArray type=\"UInt8\" Name=\"types\" format=\"ascii\">\n");
        for _ in 0..nc {
            out.push_str("9\n");
        }
        out.push_str("</DataArray>\n</Cells>\n</Piece>\n</UnstructuredGrid>\n</VTKFile>\n");
        out
    }
}

/// Writes a snapshot of `state`. The extension is chosen by the format.
pub fn export_vtk(dir: &Path, stem: &str, state: &FlowState, resolution: usize, format: VtkFormat) -> Result<PathBuf> {
    let samples = SurfaceSamples::from_state(state, resolution)?;
    let (path, text) = match format {
        VtkFormat::Legacy => (
            dir.join(format!("{stem}.vtk")),
            samples.to_legacy_vtk(&format!("surface at t = {:.16e}", state.time)),
        ),
        VtkFormat::Xml => (dir.join(format!("{stem}.vtu")), samples.to_vtu()),
    };
    fs::write(&path, text).map_err(|e| FlowError::io(&path, e))?;
    Ok(path)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| FlowError::Config(format!("serializing {}: {e}", path.display())))?;
    fs::write(path, text + "\n").map_err(|e| FlowError::io(path, e))
}

/// Writes every matrix of `sys` as `<name>.mtx` into `dir`.
pub fn dump_matrices(dir: &Path, sys: &AssembledSystem) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (name, m) in [
        ("mass", &sys.mass_full),
        ("stiffness", &sys.stiffness_full),
        ("mass_zero_trace", &sys.mass_zero_trace),
        ("stiffness_zero_trace", &sys.stiffness_zero_trace),
        ("constraint", &sys.constraint_s),
        ("boundary_mass", &sys.boundary_mass),
    ] {
        let path = dir.join(format!("{name}.mtx"));
        let file = File::create(&path).map_err(|e| FlowError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        m.write_matrix_market(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| FlowError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Summary of a finished or failed run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub dofs: usize,
    pub steps: usize,
    pub final_time: f64,
    pub initial_area: f64,
    pub final_area: f64,
    pub area_monotone: bool,
    pub max_constraint_residual: f64,
    pub max_solver_residual: f64,
    pub ritz_iterations: Option<usize>,
    pub ritz_lambda: Option<f64>,
    pub snapshots: Vec<PathBuf>,
    pub wallclock_s: f64,
    pub failure: Option<String>,
}

/// What [`run_to_files`] writes besides the CSV and the report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OutputOptions {
    pub dump_matrices: bool,
}

/// Initializes and runs `cfg` on `surface`, writing `diagnostics.csv`,
/// `report.json`, snapshots every `snapshot_stride` steps (first and last
/// state included) and optionally the step matrices at `t = 0`. A failed
/// run still writes its files and the report carries the error.
pub fn run_to_files(surface: &dyn InitialSurface, cfg: &ScenarioConfig, out: OutputOptions) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| FlowError::io(&dir, e))?;
    let (problem, initial) = FlowProblem::initialize_with(
        surface,
        cfg.degree,
        cfg.smoothness,
        cfg.elements_per_side,
        &cfg.ritz(),
        cfg.flow_options(),
    )?;
    if out.dump_matrices {
        let sys = problem.assemble(&initial.x, &initial.kappa, &initial.nu)?;
        dump_matrices(&dir, &sys)?;
    }
    let steps = crate::flow::step_count(cfg.dt, cfg.t_final)?;
    let mut snapshots = Vec::new();
    let outcome = problem.run(initial, cfg.bdf_order, cfg.dt, cfg.t_final, |k, state, _| {
        if cfg.snapshot_stride > 0 && (k % cfg.snapshot_stride == 0 || k == steps) {
            let path = export_vtk(&dir, &format!("surface_{k:06}"), state, cfg.vtk_resolution, cfg.vtk_format)?;
            snapshots.push(path);
        }
        Ok(())
    });
    let diags = &outcome.diagnostics;
    write_diagnostics_csv(&dir.join("diagnostics.csv"), diags)?;
    let report = RunReport {
        config: cfg.clone(),
        dofs: problem.space().dim(),
        steps: diags.len().saturating_sub(1),
        final_time: outcome.final_state.time,
        initial_area: diags.first().map_or(f64::NAN, |d| d.area),
        final_area: diags.last().map_or(f64::NAN, |d| d.area),
        area_monotone: diags.windows(2).all(|w| w[1].area < w[0].area),
        max_constraint_residual: diags.iter().map(|d| d.constraint_residual).fold(0.0, f64::max),
        max_solver_residual: diags.iter().map(|d| d.max_solver_residual()).fold(0.0, f64::max),
        ritz_iterations: problem.ritz_outcome().map(|r| r.total_iterations),
        ritz_lambda: problem.ritz_outcome().map(|r| r.lambda),
        snapshots,
        wallclock_s: start.elapsed().as_secs_f64(),
        failure: outcome.failure.as_ref().map(|e| e.to_string()),
    };
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}
