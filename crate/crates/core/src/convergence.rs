//! Self-convergence study: runs a scenario on nested meshes to a short final
//! time and measures each level against the finest one.
//!
//! Errors are computed on the shared parameter square with a fixed
//! `(p+3)`-point Gauss rule on the cells of the finest mesh, so no surface
//! to surface mapping is involved.

use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::InitialSurface;
use crate::config::ScenarioConfig;
use crate::error::{FlowError, Result};
use crate::flow::{step_count, FlowProblem, FlowState};
use crate::quadrature::GaussRule;
use crate::spline::SplineField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StudyOptions {
    pub t_final: f64,
    /// `Δt = dt_per_h · h` with `h = 1/N`.
    pub dt_per_h: f64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            t_final: 0.05,
            dt_per_h: 0.05,
        }
    }
}

/// `L²` and full `H¹` norms of a difference on the parameter square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Norms {
    pub l2: f64,
    pub h1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelErrors {
    pub elements_per_side: usize,
    pub h: f64,
    pub dt: f64,
    pub steps: usize,
    pub position: Norms,
    pub curvature: Norms,
    pub normal: Norms,
}

/// Rates between consecutive levels and the least-squares slope of
/// `log e` against `log h`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rates {
    pub l2_eoc: Vec<f64>,
    pub h1_eoc: Vec<f64>,
    pub l2_slope: f64,
    pub h1_slope: f64,
}

impl Rates {
    fn from_errors(levels: &[LevelErrors], pick: impl Fn(&LevelErrors) -> Norms) -> Self {
        let ns: Vec<usize> = levels.iter().map(|l| l.elements_per_side).collect();
        let l2: Vec<f64> = levels.iter().map(|l| pick(l).l2).collect();
        let h1: Vec<f64> = levels.iter().map(|l| pick(l).h1).collect();
        Rates {
            l2_eoc: eoc(&l2, &ns),
            h1_eoc: eoc(&h1, &ns),
            l2_slope: fitted_slope(&l2, &ns),
            h1_slope: fitted_slope(&h1, &ns),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub degree: usize,
    pub smoothness: usize,
    /// All levels, the last one being the reference.
    pub levels: Vec<usize>,
    pub options: StudyOptions,
    /// One entry per non-reference level.
    pub errors: Vec<LevelErrors>,
    pub position: Rates,
    pub curvature: Rates,
    pub normal: Rates,
}

impl ConvergenceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// `log(e_i / e_{i+1}) / log(N_{i+1} / N_i)`.
pub fn eoc(errors: &[f64], ns: &[usize]) -> Vec<f64> {
    errors
        .windows(2)
        .zip(ns.windows(2))
        .map(|(e, n)| (e[0] / e[1]).ln() / (n[1] as f64 / n[0] as f64).ln())
        .collect()
}

/// Least-squares slope of `log e` against `log h`, `h = 1/N`.
pub fn fitted_slope(errors: &[f64], ns: &[usize]) -> f64 {
    let pts: Vec<(f64, f64)> = errors
        .iter()
        .zip(ns)
        .map(|(&e, &n)| (-(n as f64).ln(), e.ln()))
        .collect();
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (num, den) = pts
        .iter()
        .fold((0.0, 0.0), |(n, d), (x, y)| (n + (x - mx) * (y - my), d + (x - mx) * (x - mx)));
    num / den
}

/// Norms of `a − b` with `points` Gauss points per direction on a uniform
/// grid of `cells × cells` parameter cells. Both fields must have the same
/// number of components.
pub fn difference_norms(a: &SplineField, b: &SplineField, cells: usize, points: usize) -> Result<Norms> {
    if a.components() != b.components() {
        return Err(FlowError::Config(format!(
            "comparing fields with {} and {} components",
            a.components(),
            b.components()
        )));
    }
    let rule = GaussRule::new(points);
    let h = 1.0 / cells as f64;
    let mut l2 = 0.0;
    let mut semi = 0.0;
    for i in 0..cells {
        for j in 0..cells {
            let (u0, v0) = (i as f64 * h, j as f64 * h);
            for (u, wu) in rule.mapped(u0, u0 + h) {
                for (v, wv) in rule.mapped(v0, v0 + h) {
                    let (va, ga) = a.eval_grad(u, v)?;
                    let (vb, gb) = b.eval_grad(u, v)?;
                    let w = wu * wv;
                    for c in 0..a.components() {
                        let d = va[c] - vb[c];
                        let du = ga[c][0] - gb[c][0];
                        let dv = ga[c][1] - gb[c][1];
                        l2 += w * d * d;
                        semi += w * (du * du + dv * dv);
                    }
                }
            }
        }
    }
    Ok(Norms {
        l2: l2.sqrt(),
        h1: (l2 + semi).sqrt(),
    })
}

fn check_levels(levels: &[usize]) -> Result<()> {
    if levels.len() < 3 {
        return Err(FlowError::Config(format!("need at least 3 levels, got {levels:?}")));
    }
    for w in levels.windows(2) {
        if !(w[0] > 0 && w[1] > w[0] && w[1] % w[0] == 0) {
            return Err(FlowError::Config(format!(
                "levels {levels:?} must be strictly refining and nested"
            )));
        }
    }
    Ok(())
}

fn run_level(surface: &dyn InitialSurface, base: &ScenarioConfig, n: usize, opts: &StudyOptions) -> Result<(FlowState, f64, usize)> {
    let dt = opts.dt_per_h / n as f64;
    let steps = step_count(dt, opts.t_final)?;
    let (problem, initial) = FlowProblem::initialize_with(
        surface,
        base.degree,
        base.smoothness,
        n,
        &base.ritz(),
        base.flow_options(),
    )?;
    let state = problem
        .run(initial, base.bdf_order, dt, opts.t_final, |_, _, _| Ok(()))
        .into_result()?
        .0;
    Ok((state, dt, steps))
}

/// Runs the study for the scenario named in `base`.
pub fn convergence_study(base: &ScenarioConfig, levels: &[usize], opts: &StudyOptions) -> Result<ConvergenceReport> {
    let surface = base.initial_surface()?;
    convergence_study_with(surface.as_ref(), base, levels, opts)
}

/// Runs the study for caller-supplied initial data. Levels run in parallel.
pub fn convergence_study_with(
    surface: &dyn InitialSurface,
    base: &ScenarioConfig,
    levels: &[usize],
    opts: &StudyOptions,
) -> Result<ConvergenceReport> {
    check_levels(levels)?;
    base.validate()?;
    let runs: Vec<(FlowState, f64, usize)> = levels
        .par_iter()
        .map(|&n| run_level(surface, base, n, opts))
        .collect::<Result<_>>()?;
    let (reference, _, _) = runs.last().expect("at least 3 levels");
    let finest = *levels.last().expect("at least 3 levels");
    let points = base.degree + 3;
    let errors: Vec<LevelErrors> = levels[..levels.len() - 1]
        .par_iter()
        .zip(&runs[..runs.len() - 1])
        .map(|(&n, (state, dt, steps))| {
            Ok(LevelErrors {
                elements_per_side: n,
                h: 1.0 / n as f64,
                dt: *dt,
                steps: *steps,
                position: difference_norms(&state.x, &reference.x, finest, points)?,
                curvature: difference_norms(&state.kappa, &reference.kappa, finest, points)?,
                normal: difference_norms(&state.nu, &reference.nu, finest, points)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ConvergenceReport {
        degree: base.degree,
        smoothness: base.smoothness,
        levels: levels.to_vec(),
        options: *opts,
        position: Rates::from_errors(&errors, |l| l.position),
        curvature: Rates::from_errors(&errors, |l| l.curvature),
        normal: Rates::from_errors(&errors, |l| l.normal),
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::{QuasiInterpolant, TensorSplineSpace};
    use std::sync::Arc;

    #[test]
    fn rates_of_exact_power_law() {
        let ns = [4, 8, 16, 32];
        let e: Vec<f64> = ns.iter().map(|&n| 3.0 * (n as f64).powi(-2)).collect();
        for r in eoc(&e, &ns) {
            assert!((r - 2.0).abs() < 1e-12);
        }
        assert!((fitted_slope(&e, &ns) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn identical_fields_have_zero_error() {
        let s = Arc::new(TensorSplineSpace::new(2, 1, 4).unwrap());
        let f = QuasiInterpolant::new(s).apply(|u, v| [u.sin(), v * v, u * v]);
        let n = difference_norms(&f, &f, 8, 5).unwrap();
        assert_eq!(n.l2, 0.0);
        assert_eq!(n.h1, 0.0);
    }

    #[test]
    fn norms_of_a_linear_difference() {
        let s = Arc::new(TensorSplineSpace::new(2, 1, 2).unwrap());
        let q = QuasiInterpolant::new(s);
        let a = q.apply(|u, _| [u]);
        let b = SplineField::zeros(a.space().clone(), 1);
        let n = difference_norms(&a, &b, 4, 5).unwrap();
        assert!((n.l2 - (1.0f64 / 3.0).sqrt()).abs() < 1e-13);
        assert!((n.h1 - (4.0f64 / 3.0).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn level_checks() {
        assert!(check_levels(&[4, 8]).is_err());
        assert!(check_levels(&[4, 8, 12]).is_err());
        assert!(check_levels(&[8, 4, 16]).is_err());
        assert!(check_levels(&[4, 8, 16, 32]).is_ok());
    }
}
