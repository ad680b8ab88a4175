//! Smooth initial surfaces given by a parameterization of the unit square.
//!
//! A surface only has to provide its position as second-order jets; the
//! normal, its parametric derivatives, the mean curvature and the boundary
//! frame are derived from them.

use crate::error::Result;
use crate::geometry::{cross, dot, norm, scale, sub, BoundaryFrame, Edge, GeometrySample, Vec3};
use crate::jet::Jet;

/// Exact geometric data at one parametric point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticSample {
    pub position: Vec3,
    pub geometry: GeometrySample,
    /// Unit normal `X_u × X_v / |X_u × X_v|`.
    pub normal: Vec3,
    /// Parametric derivatives `(∂_u ν, ∂_v ν)`.
    pub normal_derivs: [Vec3; 2],
    pub mean_curvature: f64,
}

impl AnalyticSample {
    /// Parametric gradients of the normal components, `[[∂_u ν_c, ∂_v ν_c]; 3]`.
    pub fn normal_grads(&self) -> [[f64; 2]; 3] {
        let [nu, nv] = self.normal_derivs;
        [[nu[0], nv[0]], [nu[1], nv[1]], [nu[2], nv[2]]]
    }

    /// `|∇_Γ ν|²` from the exact normal.
    pub fn weingarten_frob_sq(&self) -> f64 {
        let g = self.normal_grads();
        g.iter()
            .map(|gc| self.geometry.gradient_dot(*gc, *gc))
            .sum()
    }
}

fn value(j: &[Jet; 3]) -> Vec3 {
    [j[0].v, j[1].v, j[2].v]
}

/// An initial surface `X_0 : [0,1]² → R³`.
pub trait InitialSurface: Send + Sync {
    /// Position with first and second parametric derivatives.
    fn position_jet(&self, u: f64, v: f64) -> [Jet; 3];

    /// Exact mean curvature where it is known in closed form.
    fn mean_curvature_override(&self, _u: f64, _v: f64) -> Option<f64> {
        None
    }

    fn position(&self, u: f64, v: f64) -> Vec3 {
        value(&self.position_jet(u, v))
    }

    fn sample(&self, u: f64, v: f64) -> Result<AnalyticSample> {
        let x = self.position_jet(u, v);
        let xu = [x[0].du, x[1].du, x[2].du];
        let xv = [x[0].dv, x[1].dv, x[2].dv];
        let xuu = [x[0].duu, x[1].duu, x[2].duu];
        let xuv = [x[0].duv, x[1].duv, x[2].duv];
        let xvv = [x[0].dvv, x[1].dvv, x[2].dvv];
        let geometry = GeometrySample::from_jacobian((u, v), [xu, xv])?;
        let n = cross(xu, xv);
        let len = norm(n);
        let normal = geometry.normal;
        let project = |dn: Vec3| scale(sub(dn, scale(normal, dot(normal, dn))), 1.0 / len);
        let nu_u = project(add(cross(xuu, xv), cross(xu, xuv)));
        let nu_v = project(add(cross(xuv, xv), cross(xu, xvv)));
        let gi = geometry.metric_inv;
        // tr ∇_Γ ν = G^{ab} X_a · ν_b = -G^{ab} ν · X_ab
        let computed = -(gi[0][0] * dot(normal, xuu)
            + 2.0 * gi[0][1] * dot(normal, xuv)
            + gi[1][1] * dot(normal, xvv));
        Ok(AnalyticSample {
            position: value(&x),
            geometry,
            normal,
            normal_derivs: [nu_u, nu_v],
            mean_curvature: self.mean_curvature_override(u, v).unwrap_or(computed),
        })
    }

    /// Exact boundary frame of `edge` at running coordinate `t`, using the
    /// exact normal.
    fn boundary_frame(&self, edge: Edge, t: f64) -> Result<BoundaryFrame> {
        let (u, v) = edge.at_running(t);
        let x = self.position_jet(u, v);
        let d = edge.direction();
        let mut d1 = [0.0; 3];
        let mut d2 = [0.0; 3];
        for c in 0..3 {
            d1[c] = x[c].du * d[0] + x[c].dv * d[1];
            d2[c] = x[c].duu * d[0] * d[0] + 2.0 * x[c].duv * d[0] * d[1] + x[c].dvv * d[1] * d[1];
        }
        let normal = GeometrySample::from_jacobian(
            (u, v),
            [
                [x[0].du, x[1].du, x[2].du],
                [x[0].dv, x[1].dv, x[2].dv],
            ],
        )?
        .normal;
        let s = if edge.orientation() > 0.0 { t } else { 1.0 - t };
        BoundaryFrame::from_derivatives(edge, s, d1, d2, normal)
    }
}

#[inline]
fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Sphere of radius `r` through a graph chart near the south pole.
    struct Cap(f64);

    impl InitialSurface for Cap {
        fn position_jet(&self, u: f64, v: f64) -> [Jet; 3] {
            let (u, v) = Jet::coords(u, v);
            let x = (u - 0.5) * 0.8;
            let y = (v - 0.5) * 0.8;
            let z = -(Jet::constant(self.0 * self.0) - x * x - y * y).sqrt();
            [x, y, z]
        }
    }

    #[test]
    fn cap_curvatures() {
        let r = 2.0;
        let cap = Cap(r);
        for (u, v) in [(0.5, 0.5), (0.1, 0.8), (0.95, 0.3)] {
            let s = cap.sample(u, v).unwrap();
            let p = s.position;
            // X_u × X_v points up at the south pole, i.e. into the sphere.
            let inward = scale(p, -1.0 / r);
            assert!(norm(sub(s.normal, inward)) < 1e-12);
            assert!((s.mean_curvature + 2.0 / r).abs() < 1e-12);
            assert!((s.weingarten_frob_sq() - 2.0 / (r * r)).abs() < 1e-12);
        }
    }

    #[test]
    fn normal_derivatives_match_differences() {
        let cap = Cap(1.3);
        let (u, v) = (0.3, 0.6);
        let h = 1e-6;
        let s = cap.sample(u, v).unwrap();
        let fu = sub(cap.sample(u + h, v).unwrap().normal, cap.sample(u - h, v).unwrap().normal);
        let fv = sub(cap.sample(u, v + h).unwrap().normal, cap.sample(u, v - h).unwrap().normal);
        for c in 0..3 {
            assert!((fu[c] / (2.0 * h) - s.normal_derivs[0][c]).abs() < 1e-7);
            assert!((fv[c] / (2.0 * h) - s.normal_derivs[1][c]).abs() < 1e-7);
        }
    }

    #[test]
    fn boundary_frame_is_outward_and_orthonormal() {
        let cap = Cap(1.0);
        for edge in Edge::ALL {
            let f = cap.boundary_frame(edge, 0.5).unwrap();
            let (u, v) = edge.at_running(0.5);
            let nu = cap.sample(u, v).unwrap().normal;
            assert!(dot(f.tangent, nu).abs() < 1e-12);
            assert!(dot(f.conormal, nu).abs() < 1e-12);
            assert!(dot(f.conormal, f.tangent).abs() < 1e-12);
            // Outward: the conormal moves away from the patch center.
            let p = cap.position(u, v);
            assert!(dot(f.conormal, [p[0], p[1], 0.0]) > 0.0);
        }
    }
}
