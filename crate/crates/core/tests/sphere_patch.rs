//! Discretization properties on the calibrated unit-sphere patch.

use std::sync::Arc;

use isoflow::analytic::InitialSurface;
use isoflow::assembly::{assemble_f1, assemble_mass_stiffness, NormalScaling};
use isoflow::convergence::eoc;
use isoflow::flow::FlowProblem;
use isoflow::geometry::{geometry_at, norm, surface_area, weingarten};
use isoflow::io::SurfaceSamples;
use isoflow::jet::Jet;
use isoflow::projections::{surface_quasi_interp, RitzConfig};
use isoflow::quadrature::GaussRule;
use isoflow::scenarios::SpherePatch;
use isoflow::spline::{ParametricMesh, QuasiInterpolant, SplineField, TensorSplineSpace};

const LEVELS: [usize; 4] = [4, 8, 16, 32];

fn space(n: usize) -> Arc<TensorSplineSpace> {
    Arc::new(TensorSplineSpace::new(2, 1, n).unwrap())
}

/// Parametric `H¹` distance between a spline field and an exact function
/// given with its parametric gradient.
fn h1_error(f: &SplineField, exact: impl Fn(f64, f64) -> (Vec<f64>, Vec<[f64; 2]>)) -> f64 {
    let n = f.space().elements().0;
    let rule = GaussRule::new(5);
    let h = 1.0 / n as f64;
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            for (u, wu) in rule.mapped(i as f64 * h, (i + 1) as f64 * h) {
                for (v, wv) in rule.mapped(j as f64 * h, (j + 1) as f64 * h) {
                    let (val, grad) = f.eval_grad(u, v).unwrap();
                    let (ev, eg) = exact(u, v);
                    for c in 0..val.len() {
                        let d = [val[c] - ev[c], grad[c][0] - eg[c][0], grad[c][1] - eg[c][1]];
                        sum += wu * wv * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
                    }
                }
            }
        }
    }
    sum.sqrt()
}

fn samples(m: usize, margin: f64) -> impl Iterator<Item = (f64, f64)> {
    (0..=m).flat_map(move |i| (0..=m).map(move |j| (i as f64 / m as f64, j as f64 / m as f64)))
        .filter(move |&(u, v)| u >= margin && u <= 1.0 - margin && v >= margin && v <= 1.0 - margin)
}

#[test]
fn area_element_converges_to_the_exact_metric() {
    let patch = SpherePatch::calibrated();
    let levels = [8, 16, 32];
    let errors: Vec<f64> = levels
        .iter()
        .map(|&n| {
            let x = QuasiInterpolant::new(space(n)).apply(|u, v| patch.position(u, v));
            samples(64, 0.0)
                .map(|(u, v)| {
                    let q = geometry_at(&x, u, v).unwrap().area_element;
                    (q - patch.sample(u, v).unwrap().geometry.area_element).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    for r in eoc(&errors, &levels) {
        assert!(r >= 1.8, "{errors:?}");
    }
}

/// On a sphere of radius `R` the normal is `±X/R`, so the interpolated
/// normal is `±Q X_0 / R` and its Weingarten map is `±P_h / R` exactly.
fn interpolated_weingarten_error(surface: &dyn InitialSurface, n: usize, radius: f64) -> (f64, f64) {
    let q = QuasiInterpolant::new(space(n));
    let x = q.apply(|u, v| surface.position(u, v));
    let nu = q.apply(|u, v| surface.sample(u, v).unwrap().normal);
    let sign = -surface.sample(0.5, 0.5).unwrap().mean_curvature.signum();
    let (mut et, mut ef): (f64, f64) = (0.0, 0.0);
    for (u, v) in samples(48, 0.0) {
        let w = weingarten(&nu, &geometry_at(&x, u, v).unwrap()).unwrap();
        et = et.max((w.trace + sign * 2.0 / radius).abs());
        ef = ef.max((w.frob_sq - 2.0 / (radius * radius)).abs());
    }
    (et, ef)
}

#[test]
fn interpolated_normal_has_the_sphere_weingarten_map() {
    for n in [4, 16] {
        let (et, ef) = interpolated_weingarten_error(&SpherePatch::calibrated(), n, 1.0);
        assert!(et < 1e-12 && ef < 1e-12, "{et} {ef}");
        let (et, ef) = interpolated_weingarten_error(&Band, n, 2.0);
        assert!(et < 1e-12 && ef < 1e-12, "{et} {ef}");
    }
}

#[test]
fn weingarten_of_ritz_normal_converges() {
    let patch = SpherePatch::calibrated();
    let levels = [8, 16, 32];
    let mut trace_err = Vec::new();
    let mut frob_err = Vec::new();
    for &n in &levels {
        let (_, s0) = FlowProblem::initialize(&patch, 2, 1, n, &RitzConfig::default()).unwrap();
        let (mut et, mut ef): (f64, f64) = (0.0, 0.0);
        for (u, v) in samples(64, 0.0) {
            let w = weingarten(&s0.nu, &geometry_at(&s0.x, u, v).unwrap()).unwrap();
            et = et.max((w.trace + 2.0).abs());
            ef = ef.max((w.frob_sq - 2.0).abs());
        }
        trace_err.push(et);
        frob_err.push(ef);
    }
    for e in [&trace_err, &frob_err] {
        assert!(e[0] < 0.05, "{e:?}");
        for r in eoc(e, &levels) {
            assert!(r >= 0.8, "{e:?}");
        }
    }
}

/// Sphere of radius 2 in spherical coordinates over a band away from the poles.
struct Band;

impl InitialSurface for Band {
    fn position_jet(&self, u: f64, v: f64) -> [Jet; 3] {
        let (ju, jv) = Jet::coords(u, v);
        let theta = ju * 1.0 + 0.5;
        let phi = jv * 1.2;
        let s = theta.sin() * 2.0;
        [s * phi.cos(), s * phi.sin(), theta.cos() * 2.0]
    }
}

#[test]
fn octant_area() {
    let s = space(32);
    let x = QuasiInterpolant::new(s.clone()).apply(|u, v| Octant.position(u, v));
    let area = surface_area(&x, &ParametricMesh::assembly(s)).unwrap();
    assert!((area - std::f64::consts::FRAC_PI_2).abs() < 1e-4, "{area}");
}

#[test]
fn initial_area_is_calibrated() {
    let patch = SpherePatch::calibrated();
    assert!((patch.exact_area() - 5.859).abs() < 5e-3);
    let s = space(20);
    let x = QuasiInterpolant::new(s.clone()).apply(|u, v| patch.position(u, v));
    let area = surface_area(&x, &ParametricMesh::assembly(s)).unwrap();
    assert!((area - 5.859).abs() < 5e-3, "{area}");
}

#[test]
fn curvature_load_matches_mass_times_analytic_product() {
    let patch = SpherePatch::calibrated();
    let s = space(16);
    let q = QuasiInterpolant::new(s.clone());
    let mesh = ParametricMesh::assembly(s.clone());
    let x = q.apply(|u, v| patch.position(u, v));
    let kappa = q.apply(|_, _| [-2.0]);
    let nu = q.apply(|u, v| patch.sample(u, v).unwrap().normal);
    let f1 = assemble_f1(&mesh, &x, &kappa, &nu, NormalScaling::Raw).unwrap();
    let (m, _, _, _) = assemble_mass_stiffness(&mesh, &x).unwrap();
    let full = m.mul_vec(&vec![-4.0; s.dim()]);
    let reference: Vec<f64> = s.interior_indices().iter().map(|&i| full[i]).collect();
    let diff: f64 = f1.iter().zip(&reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let size: f64 = reference.iter().map(|b| b * b).sum::<f64>().sqrt();
    assert!(diff / size <= 0.05, "{}", diff / size);
}

#[test]
fn initial_state_of_the_patch() {
    let patch = SpherePatch::calibrated();
    let n = 20;
    let (problem, s0) = FlowProblem::initialize(&patch, 2, 1, n, &RitzConfig::default()).unwrap();
    // Interior curvature coefficients reproduce the constant.
    assert!(s0.kappa_coeffs().iter().all(|k| (k + 2.0).abs() <= 0.05));
    // v = -κ ν ≈ 2ν away from the strip where the zero boundary values of
    // κ and v reach into the interpolant.
    let margin = 3.0 / n as f64;
    let worst = samples(80, margin)
        .map(|(u, v)| {
            let vel = s0.v.eval(u, v).unwrap();
            let nu = patch.sample(u, v).unwrap().normal;
            (0..3).map(|c| (vel[c] - 2.0 * nu[c]).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    assert!(worst <= 0.05, "{worst}");
    assert!(problem.constraint_residual(&s0.nu) <= 1e-10);
}

#[test]
fn quasi_interpolated_position_converges_in_h1() {
    let patch = SpherePatch::calibrated();
    let errors: Vec<f64> = LEVELS
        .iter()
        .map(|&n| {
            let q = QuasiInterpolant::new(space(n));
            let x0 = q.apply(|u, v| patch.position(u, v));
            // The ambient coordinate functions pulled back to the surface.
            let x = surface_quasi_interp(&q, &x0, |p| p).unwrap();
            h1_error(&x, |u, v| {
                let s = patch.sample(u, v).unwrap();
                let j = s.geometry.jacobian;
                (s.position.to_vec(), (0..3).map(|c| [j[0][c], j[1][c]]).collect())
            })
        })
        .collect();
    for r in eoc(&errors, &LEVELS) {
        assert!(r >= 1.8, "{errors:?}");
    }
}

#[test]
fn nonlinear_ritz_normal_converges_in_h1() {
    let patch = SpherePatch::calibrated();
    let errors: Vec<f64> = LEVELS
        .iter()
        .map(|&n| {
            let (problem, s0) = FlowProblem::initialize(&patch, 2, 1, n, &RitzConfig::default()).unwrap();
            assert!(problem.constraint_residual(&s0.nu) <= 1e-10);
            h1_error(&s0.nu, |u, v| {
                let s = patch.sample(u, v).unwrap();
                (s.normal.to_vec(), s.normal_grads().to_vec())
            })
        })
        .collect();
    for r in eoc(&errors, &LEVELS) {
        assert!(r >= 1.8, "{errors:?}");
    }
}

#[test]
fn boundary_tangent_interpolant_is_nearly_unit() {
    let errors: Vec<f64> = [8usize, 16, 32]
        .iter()
        .map(|&n| {
            let (problem, _) = FlowProblem::initialize(&SpherePatch::calibrated(), 2, 1, n, &RitzConfig::default()).unwrap();
            problem
                .boundary_quadrature()
                .points()
                .iter()
                .map(|pt| (norm(pt.tangent) - 1.0).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    for r in eoc(&errors, &[8, 16, 32]) {
        assert!(r >= 2.5, "{errors:?}");
    }
}

#[test]
fn exported_points_lie_near_the_sphere() {
    let errors: Vec<f64> = [10usize, 20]
        .iter()
        .map(|&n| {
            let (_, s0) = FlowProblem::initialize(&SpherePatch::calibrated(), 2, 1, n, &RitzConfig::default()).unwrap();
            let samples = SurfaceSamples::from_state(&s0, 2).unwrap();
            assert_eq!(samples.points.len(), (2 * n + 1) * (2 * n + 1));
            samples.points.iter().map(|p| (norm(*p) - 1.0).abs()).fold(0.0, f64::max)
        })
        .collect();
    assert!(errors[0] < 1e-3, "{errors:?}");
    assert!(errors[0] / errors[1] >= 2f64.powf(2.5), "{errors:?}");
}

/// One eighth of the unit sphere. The chart collapses the edge `u = 0`
/// to the pole.
struct Octant;

impl InitialSurface for Octant {
    fn position_jet(&self, u: f64, v: f64) -> [Jet; 3] {
        let (ju, jv) = Jet::coords(u, v);
        let theta = ju * std::f64::consts::FRAC_PI_2;
        let phi = jv * std::f64::consts::FRAC_PI_2;
        let s = theta.sin();
        [s * phi.cos(), s * phi.sin(), theta.cos()]
    }
}
