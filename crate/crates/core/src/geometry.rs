//! Differential geometry of spline-parameterized surfaces.
//!
//! Surface gradients use the chain rule `∇_Γ f ∘ X = ∇X G^{-1} ∇F` with the
//! first fundamental form `G = ∇Xᵀ∇X`. The normal is `X_u × X_v`
//! normalized, the Weingarten map is the surface gradient of a normal field
//! (rows are component gradients) and the mean curvature is its trace.

use crate::error::{FlowError, Result};
use crate::spline::{ParametricMesh, SplineField};


/// `det G` at or below this value is treated as a collapsed parameterization.
pub const DEGENERATE_DET: f64 = 1e-14;

pub type Vec3 = [f64; 3];

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Anything that maps the parametric square into R³ with a computable Jacobian.
pub trait Parameterization: Sync {
    fn position(&self, u: f64, v: f64) -> Result<Vec3>;
    /// Columns `(X_u, X_v)`.
    fn jacobian(&self, u: f64, v: f64) -> Result<[Vec3; 2]>;
}

impl Parameterization for SplineField {
    fn position(&self, u: f64, v: f64) -> Result<Vec3> {
        let x = self.eval(u, v)?;
        Ok([x[0], x[1], x[2]])
    }

    fn jacobian(&self, u: f64, v: f64) -> Result<[Vec3; 2]> {
        let (_, g) = self.eval_grad(u, v)?;
        Ok([[g[0][0], g[1][0], g[2][0]], [g[0][1], g[1][1], g[2][1]]])
    }
}

/// Geometry of the surface at one parametric point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometrySample {
    pub param_point: (f64, f64),
    /// Columns `X_u`, `X_v`.
    pub jacobian: [Vec3; 2],
    pub metric: [[f64; 2]; 2],
    pub metric_inv: [[f64; 2]; 2],
    pub area_element: f64,
    pub normal: Vec3,
    /// Columns of `∇X G^{-1}`.
    pub pushforward: [Vec3; 2],
}

impl GeometrySample {
    pub fn from_jacobian(param_point: (f64, f64), jacobian: [Vec3; 2]) -> Result<Self> {
        let [xu, xv] = jacobian;
        let g11 = dot(xu, xu);
        let g12 = dot(xu, xv);
        let g22 = dot(xv, xv);
        let det = g11 * g22 - g12 * g12;
        if det <= DEGENERATE_DET || !det.is_finite() {
            return Err(FlowError::DegenerateSurface {
                u: param_point.0,
                v: param_point.1,
                det,
            });
        }
        let inv = [[g22 / det, -g12 / det], [-g12 / det, g11 / det]];
        let n = cross(xu, xv);
        let q = det.sqrt();
        let normal = scale(n, 1.0 / norm(n));
        let pushforward = [
            [
                xu[0] * inv[0][0] + xv[0] * inv[1][0],
                xu[1] * inv[0][0] + xv[1] * inv[1][0],
                xu[2] * inv[0][0] + xv[2] * inv[1][0],
            ],
            [
                xu[0] * inv[0][1] + xv[0] * inv[1][1],
                xu[1] * inv[0][1] + xv[1] * inv[1][1],
                xu[2] * inv[0][1] + xv[2] * inv[1][1],
            ],
        ];
        Ok(GeometrySample {
            param_point,
            jacobian,
            metric: [[g11, g12], [g12, g22]],
            metric_inv: inv,
            area_element: q,
            normal,
            pushforward,
        })
    }

    /// Surface gradient of a function with parametric gradient `g`.
    #[inline]
    pub fn surface_gradient(&self, g: [f64; 2]) -> Vec3 {
        let [p0, p1] = self.pushforward;
        [
            p0[0] * g[0] + p1[0] * g[1],
            p0[1] * g[0] + p1[1] * g[1],
            p0[2] * g[0] + p1[2] * g[1],
        ]
    }

    /// `∇_Γ f · ∇_Γ g` from parametric gradients, `aᵀ G^{-1} b`.
    #[inline]
    pub fn gradient_dot(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let m = &self.metric_inv;
        a[0] * (m[0][0] * b[0] + m[0][1] * b[1]) + a[1] * (m[1][0] * b[0] + m[1][1] * b[1])
    }
}

pub fn geometry_at(x: &SplineField, u: f64, v: f64) -> Result<GeometrySample> {
    GeometrySample::from_jacobian((u, v), x.jacobian(u, v)?)
}

/// Surface gradient of each component of `f` at the sample's parametric point.
pub fn surface_gradient(f: &SplineField, sample: &GeometrySample) -> Result<Vec<Vec3>> {
    let (u, v) = sample.param_point;
    let (_, grads) = f.eval_grad(u, v)?;
    Ok(grads.into_iter().map(|g| sample.surface_gradient(g)).collect())
}

/// Weingarten map `A = ∇_Γ ν` of a (discrete) normal field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weingarten {
    /// Row `c` is the surface gradient of component `c`.
    pub matrix: [Vec3; 3],
    pub frob_sq: f64,
    pub trace: f64,
}

impl Weingarten {
    pub fn from_parametric(grads: [[f64; 2]; 3], sample: &GeometrySample) -> Self {
        let matrix = grads.map(|g| sample.surface_gradient(g));
        let frob_sq = matrix.iter().map(|r| dot(*r, *r)).sum();
        let trace = matrix[0][0] + matrix[1][1] + matrix[2][2];
        Weingarten { matrix, frob_sq, trace }
    }
}

pub fn weingarten(nu: &SplineField, sample: &GeometrySample) -> Result<Weingarten> {
    let (u, v) = sample.param_point;
    let (_, g) = nu.eval_grad(u, v)?;
    Ok(Weingarten::from_parametric([g[0], g[1], g[2]], sample))
}

/// One side of the parametric square. Edges are traversed clockwise so that
/// the conormal `ν × τ` points out of the surface for `ν = X_u × X_v / |·|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Edge {
    Bottom,
    Right,
    Top,
    Left,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Bottom, Edge::Right, Edge::Top, Edge::Left];

    /// Parametric point at edge parameter `s ∈ [0, 1]`.
    pub fn point(self, s: f64) -> (f64, f64) {
        match self {
            Edge::Bottom => (1.0 - s, 0.0),
            Edge::Right => (1.0, 1.0 - s),
            Edge::Top => (s, 1.0),
            Edge::Left => (0.0, s),
        }
    }

    /// `d(u, v)/ds`.
    pub fn direction(self) -> [f64; 2] {
        match self {
            Edge::Bottom => [-1.0, 0.0],
            Edge::Right => [0.0, -1.0],
            Edge::Top => [1.0, 0.0],
            Edge::Left => [0.0, 1.0],
        }
    }

    /// Whether the edge runs along the `u` direction.
    pub fn along_u(self) -> bool {
        matches!(self, Edge::Bottom | Edge::Top)
    }

    /// The varying parametric coordinate at `(u, v)`.
    pub fn running(self, u: f64, v: f64) -> f64 {
        if self.along_u() {
            u
        } else {
            v
        }
    }

    /// Parametric point where the running coordinate equals `t`.
    pub fn at_running(self, t: f64) -> (f64, f64) {
        match self {
            Edge::Bottom => (t, 0.0),
            Edge::Top => (t, 1.0),
            Edge::Right => (1.0, t),
            Edge::Left => (0.0, t),
        }
    }

    /// `ds/dt` for the running coordinate `t`: `+1` or `-1`.
    pub fn orientation(self) -> f64 {
        match self {
            Edge::Top | Edge::Left => 1.0,
            Edge::Bottom | Edge::Right => -1.0,
        }
    }
}

/// Unit tangent, curvature vector and outward conormal `τ × ν` of a boundary curve
/// traversed counterclockwise in the parameter domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFrame {
    pub edge: Edge,
    pub arc_param: f64,
    pub tangent: Vec3,
    pub curvature_vector: Vec3,
    pub conormal: Vec3,
    pub length_element: f64,
}

impl BoundaryFrame {
    /// From first and second derivatives of the edge curve with respect to
    /// the edge parameter.
    pub fn from_derivatives(edge: Edge, s: f64, d1: Vec3, d2: Vec3, normal: Vec3) -> Result<Self> {
        let len = norm(d1);
        if len * len <= DEGENERATE_DET || !len.is_finite() {
            let (u, v) = edge.point(s);
            return Err(FlowError::DegenerateSurface { u, v, det: len * len });
        }
        let tangent = scale(d1, 1.0 / len);
        let along = dot(d2, tangent);
        let curvature_vector = scale(sub(d2, scale(tangent, along)), 1.0 / (len * len));
        Ok(BoundaryFrame {
            edge,
            arc_param: s,
            tangent,
            curvature_vector,
            conormal: cross(normal, tangent),
            length_element: len,
        })
    }
}

/// Boundary frame of `X` on `edge` at edge parameter `s`, with the normal `nu`.
pub fn boundary_frame(x: &SplineField, nu: Vec3, edge: Edge, s: f64) -> Result<BoundaryFrame> {
    let (u, v) = edge.point(s);
    let basis = x.space().eval_basis(u, v, 2)?;
    let d = edge.direction();
    let n = x.space().dim();
    let mut d1 = [0.0; 3];
    let mut d2 = [0.0; 3];
    for b in &basis {
        let first = b.grad[0] * d[0] + b.grad[1] * d[1];
        let second =
            b.hessian[0] * d[0] * d[0] + 2.0 * b.hessian[1] * d[0] * d[1] + b.hessian[2] * d[1] * d[1];
        for c in 0..3 {
            let coef = x.coeffs()[c * n + b.index];
            d1[c] += first * coef;
            d2[c] += second * coef;
        }
    }
    BoundaryFrame::from_derivatives(edge, s, d1, d2, nu)
}

/// Area of the surface by the mesh quadrature.
pub fn surface_area(x: &SplineField, mesh: &ParametricMesh) -> Result<f64> {
    let mut area = 0.0;
    let mut lb = Default::default();
    for e in 0..mesh.num_elements() {
        let dofs = mesh.element_dofs(e);
        for q in 0..mesh.qp_per_element() {
            mesh.fill_local(e, q, &mut lb);
            let (_, jac) = x.local3(&dofs, &lb);
            let g = GeometrySample::from_jacobian(lb.point, jac)?;
            area += g.area_element * lb.weight;
        }
    }
    Ok(area)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::{QuasiInterpolant, TensorSplineSpace};
    use std::sync::Arc;

    fn flat(n: usize) -> (SplineField, QuasiInterpolant) {
        let s = Arc::new(TensorSplineSpace::new(2, 1, n).unwrap());
        let q = QuasiInterpolant::new(s);
        (q.apply(|u, v| [2.0 * u - 1.0, 2.0 * v - 1.0, 0.0]), q)
    }

    #[test]
    fn flat_patch_metric() {
        let (x, _) = flat(3);
        let g = geometry_at(&x, 0.3, 0.6).unwrap();
        assert!((g.metric[0][0] - 4.0).abs() < 1e-12);
        assert!(g.metric[0][1].abs() < 1e-12);
        assert!((g.area_element - 4.0).abs() < 1e-12);
        assert!((g.normal[2] - 1.0).abs() < 1e-12);
        for p in g.pushforward {
            assert!(dot(p, g.normal).abs() < 1e-10);
        }
    }

    #[test]
    fn flat_area() {
        let (x, q) = flat(4);
        let mesh = ParametricMesh::assembly(q.space().clone());
        assert!((surface_area(&x, &mesh).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn identity_chart_gradient() {
        let s = Arc::new(TensorSplineSpace::new(2, 1, 2).unwrap());
        let q = QuasiInterpolant::new(s);
        let x = q.apply(|u, v| [u, v, 0.0]);
        let f = q.apply(|u, _| [u]);
        let g = geometry_at(&x, 0.4, 0.2).unwrap();
        let grad = surface_gradient(&f, &g).unwrap();
        assert!((grad[0][0] - 1.0).abs() < 1e-12);
        assert!(grad[0][1].abs() < 1e-12 && grad[0][2].abs() < 1e-12);
    }

    #[test]
    fn degenerate_detected() {
        let s = Arc::new(TensorSplineSpace::new(2, 1, 2).unwrap());
        let x = SplineField::zeros(s, 3);
        assert!(matches!(
            geometry_at(&x, 0.5, 0.5),
            Err(FlowError::DegenerateSurface { .. })
        ));
    }

    #[test]
    fn straight_edge_has_zero_curvature() {
        let (x, _) = flat(3);
        for edge in Edge::ALL {
            let f = boundary_frame(&x, [0.0, 0.0, 1.0], edge, 0.37).unwrap();
            assert!(norm(f.curvature_vector) < 1e-12);
            assert!((norm(f.tangent) - 1.0).abs() < 1e-12);
            assert!(dot(f.conormal, f.tangent).abs() < 1e-12);
        }
        // Conormal points out of the square.
        let f = boundary_frame(&x, [0.0, 0.0, 1.0], Edge::Right, 0.5).unwrap();
        assert!((f.conormal[0] - 1.0).abs() < 1e-12);
        let f = boundary_frame(&x, [0.0, 0.0, 1.0], Edge::Bottom, 0.5).unwrap();
        assert!((f.conormal[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn circle_curvature_from_exact_derivatives() {
        let r: f64 = 0.7;
        let s: f64 = 0.3;
        let th = 2.0 * s;
        let d1 = [-2.0 * r * th.sin(), 2.0 * r * th.cos(), 0.0];
        let d2 = [-4.0 * r * th.cos(), -4.0 * r * th.sin(), 0.0];
        let f = BoundaryFrame::from_derivatives(Edge::Bottom, s, d1, d2, [0.0, 0.0, 1.0]).unwrap();
        assert!((norm(f.curvature_vector) - 1.0 / r).abs() < 1e-12);
        assert!(dot(f.curvature_vector, f.tangent).abs() < 1e-12);
    }
}
