//! Run configuration as a flat `key = value` text file.
//!
//! Blank lines and everything after `#` are ignored. Every key is optional
//! and falls back to its default; unknown and repeated keys are errors.
//! [`ScenarioConfig::to_canonical`] writes all keys in a fixed order, so
//! parsing the canonical text gives back the same configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analytic::InitialSurface;
use crate::assembly::{ConstraintRows, NormalScaling};
use crate::error::{FlowError, Result};
use crate::flow::{step_count, FlowOptions};
use crate::linalg::MAX_RELATIVE_RESIDUAL;
use crate::projections::RitzConfig;
use crate::scenarios::{PerturbedPlane, SpherePatch, PLANE_AMPLITUDE, SPHERE_POLAR_EXTENT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    PerturbedPlane,
    SpherePatch,
    /// Initial data supplied by the caller through the library.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VtkFormat {
    #[default]
    Legacy,
    Xml,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub degree: usize,
    pub smoothness: usize,
    pub elements_per_side: usize,
    pub dt: f64,
    pub t_final: f64,
    pub bdf_order: usize,
    /// Write a surface snapshot every this many steps; 0 disables snapshots.
    pub snapshot_stride: usize,
    pub output_dir: PathBuf,
    pub perturbation_amplitude: f64,
    pub patch_polar_extent: f64,
    pub solver_tolerance: f64,
    pub ritz_lambda: f64,
    pub ritz_tolerance: f64,
    pub ritz_max_iterations: usize,
    pub ritz_lambda_growth: f64,
    pub ritz_contraction_window: usize,
    pub normal_scaling: NormalScaling,
    pub constraint_rows: ConstraintRows,
    pub vtk_format: VtkFormat,
    /// Samples per element and direction in surface snapshots.
    pub vtk_resolution: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let ritz = RitzConfig::default();
        ScenarioConfig {
            scenario: ScenarioKind::PerturbedPlane,
            degree: 2,
            smoothness: 1,
            elements_per_side: 20,
            dt: 0.0015625,
            t_final: 0.8,
            bdf_order: 2,
            snapshot_stride: 0,
            output_dir: PathBuf::from("output"),
            perturbation_amplitude: PLANE_AMPLITUDE,
            patch_polar_extent: SPHERE_POLAR_EXTENT,
            solver_tolerance: MAX_RELATIVE_RESIDUAL,
            ritz_lambda: ritz.lambda,
            ritz_tolerance: ritz.fp_tol,
            ritz_max_iterations: ritz.fp_max_iter,
            ritz_lambda_growth: ritz.lambda_growth,
            ritz_contraction_window: ritz.contraction_window,
            normal_scaling: NormalScaling::default(),
            constraint_rows: ConstraintRows::default(),
            vtk_format: VtkFormat::default(),
            vtk_resolution: 2,
        }
    }
}

const KEYS: [&str; 21] = [
    "scenario",
    "degree",
    "smoothness",
    "elements_per_side",
    "dt",
    "t_final",
    "bdf_order",
    "snapshot_stride",
    "output_dir",
    "perturbation_amplitude",
    "patch_polar_extent",
    "solver_tolerance",
    "ritz_lambda",
    "ritz_tolerance",
    "ritz_max_iterations",
    "ritz_lambda_growth",
    "ritz_contraction_window",
    "normal_scaling",
    "constraint_rows",
    "vtk_format",
    "vtk_resolution",
];

fn parse_num<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| FlowError::Config(format!("line {line}: cannot parse {key} = {value:?}")))
}

fn parse_enum<T: for<'de> Deserialize<'de>>(key: &str, value: &str, line: usize) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| FlowError::Config(format!("line {line}: unknown {key} {value:?}")))
}

fn enum_name<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => unreachable!("unit enum variants serialize as strings"),
    }
}

impl ScenarioConfig {
    /// Defaults for the sphere patch run.
    pub fn sphere_patch() -> Self {
        ScenarioConfig {
            scenario: ScenarioKind::SpherePatch,
            dt: 0.025,
            t_final: 0.9,
            ..Self::default()
        }
    }

    /// Defaults of the given scenario.
    pub fn for_scenario(kind: ScenarioKind) -> Self {
        match kind {
            ScenarioKind::SpherePatch => Self::sphere_patch(),
            _ => ScenarioConfig {
                scenario: kind,
                ..Self::default()
            },
        }
    }

    /// Parses `key = value` lines. Keys that are not given take the defaults
    /// of the selected scenario.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ScenarioConfig::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| FlowError::Config(format!("line {line}: expected key = value, got {body:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.contains(&key.to_string()) {
                return Err(FlowError::Config(format!("line {line}: repeated key {key}")));
            }
            seen.push(key.to_string());
            match key {
                "scenario" => cfg.scenario = parse_enum(key, value, line)?,
                "degree" => cfg.degree = parse_num(key, value, line)?,
                "smoothness" => cfg.smoothness = parse_num(key, value, line)?,
                "elements_per_side" => cfg.elements_per_side = parse_num(key, value, line)?,
                "dt" => cfg.dt = parse_num(key, value, line)?,
                "t_final" => cfg.t_final = parse_num(key, value, line)?,
                "bdf_order" => cfg.bdf_order = parse_num(key, value, line)?,
                "snapshot_stride" => cfg.snapshot_stride = parse_num(key, value, line)?,
                "output_dir" => cfg.output_dir = PathBuf::from(value),
                "perturbation_amplitude" => cfg.perturbation_amplitude = parse_num(key, value, line)?,
                "patch_polar_extent" => cfg.patch_polar_extent = parse_num(key, value, line)?,
                "solver_tolerance" => cfg.solver_tolerance = parse_num(key, value, line)?,
                "ritz_lambda" => cfg.ritz_lambda = parse_num(key, value, line)?,
                "ritz_tolerance" => cfg.ritz_tolerance = parse_num(key, value, line)?,
                "ritz_max_iterations" => cfg.ritz_max_iterations = parse_num(key, value, line)?,
                "ritz_lambda_growth" => cfg.ritz_lambda_growth = parse_num(key, value, line)?,
                "ritz_contraction_window" => cfg.ritz_contraction_window = parse_num(key, value, line)?,
                "normal_scaling" => cfg.normal_scaling = parse_enum(key, value, line)?,
                "constraint_rows" => cfg.constraint_rows = parse_enum(key, value, line)?,
                "vtk_format" => cfg.vtk_format = parse_enum(key, value, line)?,
                "vtk_resolution" => cfg.vtk_resolution = parse_num(key, value, line)?,
                _ => {
                    return Err(FlowError::Config(format!(
                        "line {line}: unknown key {key:?}; expected one of {}",
                        KEYS.join(", ")
                    )))
                }
            }
        }
        let base = Self::for_scenario(cfg.scenario);
        if !seen.iter().any(|k| k == "dt") {
            cfg.dt = base.dt;
        }
        if !seen.iter().any(|k| k == "t_final") {
            cfg.t_final = base.t_final;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| FlowError::io(path, e))?;
        Self::parse(&text)
    }

    /// All keys in a fixed order. Floats use the shortest representation
    /// that parses back to the same value.
    pub fn to_canonical(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("scenario", enum_name(&self.scenario));
        put("degree", self.degree.to_string());
        put("smoothness", self.smoothness.to_string());
        put("elements_per_side", self.elements_per_side.to_string());
        put("dt", format!("{:?}", self.dt));
        put("t_final", format!("{:?}", self.t_final));
        put("bdf_order", self.bdf_order.to_string());
        put("snapshot_stride", self.snapshot_stride.to_string());
        put("output_dir", self.output_dir.display().to_string());
        put("perturbation_amplitude", format!("{:?}", self.perturbation_amplitude));
        put("patch_polar_extent", format!("{:?}", self.patch_polar_extent));
        put("solver_tolerance", format!("{:?}", self.solver_tolerance));
        put("ritz_lambda", format!("{:?}", self.ritz_lambda));
        put("ritz_tolerance", format!("{:?}", self.ritz_tolerance));
        put("ritz_max_iterations", self.ritz_max_iterations.to_string());
        put("ritz_lambda_growth", format!("{:?}", self.ritz_lambda_growth));
        put("ritz_contraction_window", self.ritz_contraction_window.to_string());
        put("normal_scaling", enum_name(&self.normal_scaling));
        put("constraint_rows", enum_name(&self.constraint_rows));
        put("vtk_format", enum_name(&self.vtk_format));
        put("vtk_resolution", self.vtk_resolution.to_string());
        out
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(FlowError::Config(msg));
        if self.degree < 2 {
            return fail(format!("degree {} must be at least 2", self.degree));
        }
        if self.smoothness >= self.degree {
            return fail(format!(
                "smoothness {} must be below the degree {}",
                self.smoothness, self.degree
            ));
        }
        if self.elements_per_side == 0 {
            return fail("elements_per_side must be positive".into());
        }
        if !matches!(self.bdf_order, 1 | 2) {
            return Err(FlowError::InvalidBdfOrder(self.bdf_order));
        }
        step_count(self.dt, self.t_final)?;
        if !(self.perturbation_amplitude >= 0.0 && self.perturbation_amplitude.is_finite()) {
            return fail(format!("perturbation_amplitude {} must be >= 0", self.perturbation_amplitude));
        }
        if !(self.patch_polar_extent > 0.0 && self.patch_polar_extent < std::f64::consts::FRAC_PI_2) {
            return fail(format!("patch_polar_extent {} must lie in (0, pi/2)", self.patch_polar_extent));
        }
        if !(self.solver_tolerance > 0.0) {
            return fail(format!("solver_tolerance {} must be positive", self.solver_tolerance));
        }
        if self.vtk_resolution == 0 {
            return fail("vtk_resolution must be positive".into());
        }
        self.ritz().validate()
    }

    pub fn ritz(&self) -> RitzConfig {
        RitzConfig {
            lambda: self.ritz_lambda,
            fp_tol: self.ritz_tolerance,
            fp_max_iter: self.ritz_max_iterations,
            lambda_growth: self.ritz_lambda_growth,
            contraction_window: self.ritz_contraction_window,
        }
    }

    pub fn flow_options(&self) -> FlowOptions {
        FlowOptions {
            normal_scaling: self.normal_scaling,
            constraint_rows: self.constraint_rows,
            solver_tolerance: self.solver_tolerance,
        }
    }

    /// The analytic initial surface of a built-in scenario. `custom` has no
    /// file representation and must be supplied through the library.
    pub fn initial_surface(&self) -> Result<Box<dyn InitialSurface>> {
        match self.scenario {
            ScenarioKind::PerturbedPlane => Ok(Box::new(PerturbedPlane::new(self.perturbation_amplitude)?)),
            ScenarioKind::SpherePatch => Ok(Box::new(SpherePatch::new(self.patch_polar_extent)?)),
            ScenarioKind::Custom => Err(FlowError::Config(
                "scenario custom needs initial data from the library API".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_canonical_round_trips() {
        for cfg in [ScenarioConfig::default(), ScenarioConfig::sphere_patch()] {
            cfg.validate().unwrap();
            let text = cfg.to_canonical();
            let back = ScenarioConfig::parse(&text).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.to_canonical(), text);
        }
    }

    #[test]
    fn partial_file_with_comments() {
        let text = "# sphere run\nscenario = sphere_patch   # the patch\n\n dt=0.05 \nt_final = 0.1\nvtk_format = xml\n";
        let cfg = ScenarioConfig::parse(text).unwrap();
        assert_eq!(cfg.scenario, ScenarioKind::SpherePatch);
        assert_eq!(cfg.dt, 0.05);
        assert_eq!(cfg.vtk_format, VtkFormat::Xml);
        assert_eq!(cfg.degree, 2);
        // Canonical form of the text is the canonical form of its parse.
        let canon = cfg.to_canonical();
        assert_eq!(ScenarioConfig::parse(&canon).unwrap().to_canonical(), canon);
    }

    #[test]
    fn scenario_selects_its_time_defaults() {
        let cfg = ScenarioConfig::parse("scenario = sphere_patch").unwrap();
        assert_eq!((cfg.dt, cfg.t_final), (0.025, 0.9));
        let cfg = ScenarioConfig::parse("t_final = 0.5\nscenario = sphere_patch").unwrap();
        assert_eq!((cfg.dt, cfg.t_final), (0.025, 0.5));
        let cfg = ScenarioConfig::parse("scenario = perturbed_plane").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "colour = red",
            "degree = 2\ndegree = 3",
            "degree = two",
            "scenario = torus",
            "degree = 1",
            "smoothness = 2",
            "dt = 0",
            "dt = 0.3\nt_final = 1.0",
            "bdf_order = 3",
            "just a line",
            "patch_polar_extent = 2.0",
            "normal_scaling = sideways",
            "constraint_rows = diagonal",
        ] {
            assert!(ScenarioConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn custom_scenario_needs_library_data() {
        let cfg = ScenarioConfig::parse("scenario = custom").unwrap();
        assert!(cfg.initial_surface().is_err());
        assert!(ScenarioConfig::default().initial_surface().is_ok());
    }
}
