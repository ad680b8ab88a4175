//! Interpolation and Ritz projections onto the discrete spaces.

use crate::analytic::InitialSurface;
use crate::assembly::{
    assemble_mass_stiffness, assemble_vector, restrict_vec, BoundaryQuadrature, NormalScaling, SparseMatrix,
};
use crate::error::{FlowError, Result};
use crate::geometry::{GeometrySample, Vec3};
use crate::linalg::{self, SaddleSolver};
use crate::spline::{BoundaryTrace, ParametricMesh, QuasiInterpolant, SplineField, TraceField};

/// Boundary interpolants `τ_h = Q_∂ τ` and `κ_{∂,h} = Q_∂ κ_∂` of the initial
/// boundary curve.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub tau_h: TraceField,
    pub kappa_b_h: TraceField,
}

impl BoundaryData {
    /// Quasi-interpolates the exact unit tangent and curvature vector of the
    /// boundary of `surface`, edge by edge.
    pub fn from_surface(trace: &BoundaryTrace, surface: &dyn InitialSurface) -> Result<Self> {
        let tau_h = TraceField::try_interpolate(trace, |e, t| Ok(surface.boundary_frame(e, t)?.tangent))?;
        let kappa_b_h = TraceField::try_interpolate(trace, |e, t| {
            Ok(surface.boundary_frame(e, t)?.curvature_vector)
        })?;
        Ok(BoundaryData { tau_h, kappa_b_h })
    }

    /// Quadrature on the discrete initial boundary carrying this data.
    pub fn quadrature(&self, trace: BoundaryTrace, x0: &SplineField) -> Result<BoundaryQuadrature> {
        BoundaryQuadrature::discrete(trace, x0, &self.tau_h, &self.kappa_b_h)
    }
}

/// Quasi-interpolant of `g` on the surface `x`, i.e. `Q(g ∘ X)`.
pub fn surface_quasi_interp<const D: usize>(
    q: &QuasiInterpolant,
    x: &SplineField,
    g: impl Fn(Vec3) -> [f64; D] + Sync,
) -> Result<SplineField> {
    q.try_apply(|u, v| {
        let p = x.eval(u, v)?;
        Ok(g([p[0], p[1], p[2]]))
    })
}

/// `v_h = Q(-κ_h ν_h)` with boundary coefficients set to zero. The
/// interpolant acts on the pullback, so the surface itself does not enter.
pub fn project_velocity(
    q: &QuasiInterpolant,
    kappa: &SplineField,
    nu: &SplineField,
    scaling: NormalScaling,
) -> Result<SplineField> {
    let mut v = q.try_apply(|u, v| {
        let k = kappa.eval(u, v)?[0];
        let n = nu.eval(u, v)?;
        let n = scaling.direction([n[0], n[1], n[2]]);
        Ok([-k * n[0], -k * n[1], -k * n[2]])
    })?;
    v.zero_boundary();
    Ok(v)
}

/// Zero-trace Ritz projection for the `H¹` form on the surface `x`:
/// `(∇_Γ w, ∇_Γ b) + (w, b) = (∇_Γ u, ∇_Γ b) + (u, b)` for all zero-trace `b`.
/// `u` returns the pulled-back value and its parametric gradient.
pub fn linear_ritz_zero_trace(
    mesh: &ParametricMesh,
    x: &SplineField,
    u: impl Fn(f64, f64) -> (f64, [f64; 2]) + Sync,
) -> Result<SplineField> {
    let (_, _, m0, a0) = assemble_mass_stiffness(mesh, x)?;
    let k = SparseMatrix::linear_combination(1.0, &a0, 1.0, &m0);
    let rhs = assemble_vector(mesh, 1, |lb, dofs, out| {
        let (_, jac) = x.local3(dofs, lb);
        let g = GeometrySample::from_jacobian(lb.point, jac)?;
        let (uv, ug) = u(lb.point.0, lb.point.1);
        let dw = g.area_element * lb.weight;
        for a in 0..dofs.len() {
            out[a] += (g.gradient_dot(ug, lb.grad(a)) + uv * lb.val[a]) * dw;
        }
        Ok(())
    })?;
    let interior = mesh.space().interior_indices();
    let (w, _) = linalg::solve(&k, &restrict_vec(&rhs, interior))?;
    Ok(SplineField::from_interior(mesh.space().clone(), &w))
}

/// Settings of the nonlinear Ritz fixed-point iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct RitzConfig {
    pub lambda: f64,
    /// Stop once the `H¹` norm of the increment is at most this.
    pub fp_tol: f64,
    /// Cap on the total number of fixed-point solves over all `λ` stages.
    pub fp_max_iter: usize,
    pub lambda_growth: f64,
    /// Iterations a stage may take before it must have contracted.
    pub contraction_window: usize,
}

impl Default for RitzConfig {
    fn default() -> Self {
        RitzConfig {
            lambda: 10.0,
            fp_tol: 1e-12,
            fp_max_iter: 100,
            lambda_growth: 4.0,
            contraction_window: 10,
        }
    }
}

impl RitzConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.fp_tol > 0.0 && self.fp_max_iter >= 1 && self.lambda_growth > 1.0) {
            return Err(FlowError::Config(format!("invalid Ritz settings {self:?}")));
        }
        Ok(())
    }
}

/// Result of the nonlinear Ritz projection.
#[derive(Debug, Clone)]
pub struct RitzOutcome {
    pub normal: SplineField,
    pub multiplier: Vec<f64>,
    /// Fixed-point solves in the successful stage.
    pub iterations: usize,
    /// Fixed-point solves over all stages.
    pub total_iterations: usize,
    pub lambda: f64,
    /// `H¹` norms of the increments of the successful stage.
    pub increments: Vec<f64>,
}

/// Exact-surface integrals entering the nonlinear Ritz right-hand side,
/// split by their dependence on `λ`.
struct ExactLoads {
    grad: Vec<f64>,
    mass: Vec<f64>,
    boundary: Vec<f64>,
}

fn exact_loads(mesh: &ParametricMesh, surface: &dyn InitialSurface, trace: &BoundaryTrace) -> Result<ExactLoads> {
    let p = mesh.space().degree();
    let fine = ParametricMesh::new(mesh.space().clone(), p + 2);
    let both = assemble_vector(&fine, 6, |lb, dofs, out| {
        let s = surface.sample(lb.point.0, lb.point.1)?;
        let nb = dofs.len();
        let grads = s.normal_grads();
        let dw = s.geometry.area_element * lb.weight;
        for a in 0..nb {
            let gb = lb.grad(a);
            for c in 0..3 {
                out[c * nb + a] += s.geometry.gradient_dot(grads[c], gb) * dw;
                out[(3 + c) * nb + a] += s.normal[c] * lb.val[a] * dw;
            }
        }
        Ok(())
    })?;
    let n3 = 3 * mesh.space().dim();
    let exact_bq = BoundaryQuadrature::from_fn(trace.clone(), p + 2, |e, t| {
        let f = surface.boundary_frame(e, t)?;
        Ok((f.length_element, f.tangent, f.curvature_vector))
    })?;
    let normals: Vec<Vec3> = exact_bq
        .points()
        .iter()
        .map(|pt| {
            let (u, v) = pt.edge.at_running(pt.t);
            Ok(surface.sample(u, v)?.normal)
        })
        .collect::<Result<_>>()?;
    let mut k = 0;
    let boundary = exact_bq.conormal_load(|_| {
        k += 1;
        normals[k - 1]
    });
    Ok(ExactLoads {
        grad: both[..n3].to_vec(),
        mass: both[n3..].to_vec(),
        boundary,
    })
}

fn quad_norm(m: &SparseMatrix, z: &[f64]) -> f64 {
    m.mul_vec(z).iter().zip(z).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
}

/// Nonlinear Ritz projection of the exact normal of `surface` into the
/// constrained space `{w : S w = 0}` on the discrete surface `x0`:
///
/// `a(w, φ) + λ m(w, φ) − ∫_∂ (w·κ_{∂,h})(w × τ_h)·φ
///     = a(ν₀, φ) + λ m(ν₀, φ) − ∫_∂ (ν₀·κ_∂)(ν₀ × τ)·φ`,
///
/// with the right-hand side integrated on the exact surface. The boundary
/// term is iterated to a fixed point; `λ` grows when the iteration does not
/// contract.
pub fn nonlinear_ritz_normal(
    mesh: &ParametricMesh,
    q: &QuasiInterpolant,
    x0: &SplineField,
    surface: &dyn InitialSurface,
    bq: &BoundaryQuadrature,
    constraint: &SparseMatrix,
    cfg: &RitzConfig,
) -> Result<RitzOutcome> {
    cfg.validate()?;
    let space = mesh.space().clone();
    let (m, a, _, _) = assemble_mass_stiffness(mesh, x0)?;
    let m3 = m.block_diag3();
    let a3 = a.block_diag3();
    let h1 = SparseMatrix::linear_combination(1.0, &a3, 1.0, &m3);
    let loads = exact_loads(mesh, surface, bq.trace())?;

    // Start from the constrained L² projection of the interpolated normal.
    let qnu = q.try_apply(|u, v| Ok(surface.sample(u, v)?.normal))?;
    let (start, _, _) = SaddleSolver::new(&m3, constraint)?.solve(&m3.mul_vec(qnu.coeffs()))?;

    let mut lambda = cfg.lambda;
    let mut total = 0;
    loop {
        let k = SparseMatrix::linear_combination(1.0, &a3, lambda, &m3);
        let solver = SaddleSolver::new(&k, constraint)?;
        let base: Vec<f64> = (0..loads.grad.len())
            .map(|i| loads.grad[i] + lambda * loads.mass[i] - loads.boundary[i])
            .collect();
        let field = |c: &[f64]| SplineField::new(space.clone(), 3, c.to_vec());
        let mut fb_prev = bq.fb(&field(&start)?);
        let rhs: Vec<f64> = base.iter().zip(&fb_prev).map(|(b, f)| b + f).collect();
        let (mut w, mut mult, _) = solver.solve(&rhs)?;
        let diff: Vec<f64> = w.iter().zip(&start).map(|(a, b)| a - b).collect();
        let mut increments = vec![quad_norm(&h1, &diff)];
        total += 1;
        let contracted = loop {
            let d = *increments.last().unwrap();
            if d <= cfg.fp_tol {
                break true;
            }
            if !d.is_finite() {
                break false;
            }
            if total >= cfg.fp_max_iter {
                return Err(FlowError::NoContraction {
                    iterations: total,
                    lambda,
                });
            }
            let n = increments.len();
            let growing = n >= 2 && d > increments[n - 2] && d > 10.0 * cfg.fp_tol;
            let stalled = n >= cfg.contraction_window && d >= increments[0];
            if growing || stalled {
                break false;
            }
            let fb = bq.fb(&field(&w)?);
            let delta_rhs: Vec<f64> = fb.iter().zip(&fb_prev).map(|(a, b)| a - b).collect();
            let (dw, dm, _) = solver.solve(&delta_rhs)?;
            for (x, d) in w.iter_mut().zip(&dw) {
                *x += d;
            }
            for (x, d) in mult.iter_mut().zip(&dm) {
                *x += d;
            }
            fb_prev = fb;
            increments.push(quad_norm(&h1, &dw));
            total += 1;
        };
        if contracted {
            return Ok(RitzOutcome {
                normal: field(&w)?,
                multiplier: mult,
                iterations: increments.len(),
                total_iterations: total,
                lambda,
                increments,
            });
        }
        if total >= cfg.fp_max_iter {
            return Err(FlowError::NoContraction {
                iterations: total,
                lambda,
            });
        }
        lambda *= cfg.lambda_growth;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::ConstraintRows;
    use crate::jet::Jet;
    use crate::spline::TensorSplineSpace;
    use std::sync::Arc;

    struct Plane;

    impl InitialSurface for Plane {
        fn position_jet(&self, u: f64, v: f64) -> [Jet; 3] {
            let (u, v) = Jet::coords(u, v);
            [u * 2.0 - 1.0, v * 2.0 - 1.0, Jet::constant(0.0)]
        }
    }

    fn setup(n: usize) -> (Arc<TensorSplineSpace>, ParametricMesh, QuasiInterpolant) {
        let s = Arc::new(TensorSplineSpace::new(2, 1, n).unwrap());
        (s.clone(), ParametricMesh::assembly(s.clone()), QuasiInterpolant::new(s))
    }

    #[test]
    fn straight_boundary_data() {
        let (s, _, _) = setup(4);
        let trace = BoundaryTrace::new(s);
        let bd = BoundaryData::from_surface(&trace, &Plane).unwrap();
        for e in crate::geometry::Edge::ALL {
            assert!(bd.kappa_b_h.edge_coeffs(e).iter().all(|v| v.abs() < 1e-14));
            for t in [0.1, 0.5, 0.9] {
                let tau = bd.tau_h.eval(&trace, e, t);
                let d = e.direction();
                assert!((tau[0] - d[0]).abs() < 1e-13 && (tau[1] - d[1]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn surface_interp_reproduces_coordinates_and_constants() {
        let (_, _, q) = setup(5);
        let x = q.apply(|u, v| [u, v * v, u * v]);
        let y = surface_quasi_interp(&q, &x, |p| p).unwrap();
        assert!(y.max_diff(&x) < 1e-12);
        let one = surface_quasi_interp(&q, &x, |_| [1.0]).unwrap();
        assert!(one.coeffs().iter().all(|c| (c - 1.0).abs() < 1e-12));
    }

    #[test]
    fn velocity_vanishes_for_zero_curvature_and_on_boundary() {
        let (s, _, q) = setup(4);
        let nu = SplineField::constant(s.clone(), &[0.0, 0.0, 1.0]);
        let v = project_velocity(&q, &SplineField::zeros(s.clone(), 1), &nu, NormalScaling::Raw).unwrap();
        assert!(v.coeffs().iter().all(|&c| c == 0.0));
        let k = q.apply_vanishing(|u, v| [u * (1.0 - u) * v * (1.0 - v)]);
        let v = project_velocity(&q, &k, &nu, NormalScaling::Unit).unwrap();
        let n = s.dim();
        for &j in s.boundary_indices() {
            for c in 0..3 {
                assert_eq!(v.coeffs()[c * n + j], 0.0);
            }
        }
    }

    #[test]
    fn linear_ritz_reproduces_discrete_functions() {
        let (s, mesh, q) = setup(4);
        let x = q.apply(|u, v| [u, v, 0.2 * u * v]);
        let w = q.apply_vanishing(|u, v| [(u * (1.0 - u)) * v]);
        let r = linear_ritz_zero_trace(&mesh, &x, |u, v| {
            let (val, g) = w.eval_grad(u, v).unwrap();
            (val[0], g[0])
        })
        .unwrap();
        assert!(r.max_diff(&w) < 1e-12);
        let z = linear_ritz_zero_trace(&mesh, &x, |_, _| (0.0, [0.0; 2])).unwrap();
        assert!(z.coeffs().iter().all(|&c| c == 0.0));
        assert_eq!(z.space().dim(), s.dim());
    }

    #[test]
    fn nonlinear_ritz_on_flat_patch() {
        let (s, mesh, q) = setup(4);
        let x0 = q.apply(|u, v| Plane.position(u, v));
        let trace = BoundaryTrace::new(s.clone());
        let bd = BoundaryData::from_surface(&trace, &Plane).unwrap();
        let bq = bd.quadrature(trace, &x0).unwrap();
        let sm = bq.constraint(ConstraintRows::Edgewise);
        let out = nonlinear_ritz_normal(&mesh, &q, &x0, &Plane, &bq, &sm, &RitzConfig::default()).unwrap();
        assert!(out.iterations <= 2, "{:?}", out.increments);
        let up = SplineField::constant(s, &[0.0, 0.0, 1.0]);
        assert!(out.normal.max_diff(&up) < 1e-12);
        assert!(sm.mul_vec(out.normal.coeffs()).iter().all(|v| v.abs() <= 1e-10));
    }

    #[test]
    fn invalid_ritz_config_rejected() {
        let cfg = RitzConfig {
            lambda: 0.0,
            ..RitzConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
