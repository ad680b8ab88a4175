use std::sync::Arc;

use super::field::SplineField;
use super::quasi::UnivariateQuasi;
use super::tensor::TensorSplineSpace;
use super::univariate::UnivariateSpline;
use crate::error::Result;
use crate::geometry::Edge;

/// Trace space `S_h^∂` of a tensor space: one univariate space per edge,
/// glued at the corners. Trace degrees of freedom are the tensor boundary
/// indices, numbered as in [`TensorSplineSpace::boundary_indices`].
#[derive(Debug, Clone)]
pub struct BoundaryTrace {
    space: Arc<TensorSplineSpace>,
    edges: [Vec<usize>; 4],
}

fn edge_slot(edge: Edge) -> usize {
    match edge {
        Edge::Bottom => 0,
        Edge::Right => 1,
        Edge::Top => 2,
        Edge::Left => 3,
    }
}

impl BoundaryTrace {
    pub fn new(space: Arc<TensorSplineSpace>) -> Self {
        let (nu, nv) = space.dims();
        let edges = [
            (0..nu).map(|k| space.flat(k, 0)).collect(),
            (0..nv).map(|k| space.flat(nu - 1, k)).collect(),
            (0..nu).map(|k| space.flat(k, nv - 1)).collect(),
            (0..nv).map(|k| space.flat(0, k)).collect(),
        ];
        BoundaryTrace { space, edges }
    }

    pub fn space(&self) -> &Arc<TensorSplineSpace> {
        &self.space
    }

    /// Univariate space along the running coordinate of `edge`.
    pub fn edge_space(&self, edge: Edge) -> &UnivariateSpline {
        if edge.along_u() {
            self.space.u_space()
        } else {
            self.space.v_space()
        }
    }

    /// Flat tensor indices of the edge's trace basis, by univariate index.
    pub fn edge_dofs(&self, edge: Edge) -> &[usize] {
        &self.edges[edge_slot(edge)]
    }

    /// Number of distinct trace degrees of freedom `N_∂`.
    pub fn num_dofs(&self) -> usize {
        self.space.boundary_indices().len()
    }

    pub fn trace_dof(&self, flat: usize) -> Option<usize> {
        self.space.boundary_position(flat)
    }

    /// Univariate coefficients of component `c` of `field` restricted to `edge`.
    pub fn restrict(&self, field: &SplineField, c: usize, edge: Edge) -> Vec<f64> {
        let comp = field.component(c);
        self.edge_dofs(edge).iter().map(|&j| comp[j]).collect()
    }
}

/// A vector-valued function on `∂Ω`, one univariate spline per edge in the
/// edge's running coordinate. Values at shared corners may differ per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceField {
    components: usize,
    /// Per edge, component-major coefficients `c * dim + k`.
    edges: [Vec<f64>; 4],
}

impl TraceField {
    /// Univariate quasi-interpolation of `f(edge, t)`, `t` the running coordinate.
    pub fn interpolate<const D: usize>(
        trace: &BoundaryTrace,
        f: impl Fn(Edge, f64) -> [f64; D],
    ) -> Self {
        Self::try_interpolate(trace, |e, t| Ok(f(e, t))).expect("infallible evaluation")
    }

    /// As [`Self::interpolate`], propagating evaluation failures.
    pub fn try_interpolate<const D: usize>(
        trace: &BoundaryTrace,
        f: impl Fn(Edge, f64) -> Result<[f64; D]>,
    ) -> Result<Self> {
        let mut edges: [Vec<f64>; 4] = Default::default();
        for edge in Edge::ALL {
            let q = UnivariateQuasi::new(trace.edge_space(edge));
            let samples = q
                .points()
                .iter()
                .map(|&t| f(edge, t))
                .collect::<Result<Vec<[f64; D]>>>()?;
            let coeffs = &mut edges[edge_slot(edge)];
            for c in 0..D {
                let comp: Vec<f64> = samples.iter().map(|s| s[c]).collect();
                coeffs.extend(q.apply_samples(&comp));
            }
        }
        Ok(TraceField { components: D, edges })
    }

    pub fn zeros(trace: &BoundaryTrace, components: usize) -> Self {
        let edges = Edge::ALL.map(|e| vec![0.0; components * trace.edge_space(e).dim()]);
        TraceField { components, edges }
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn edge_coeffs(&self, edge: Edge) -> &[f64] {
        &self.edges[edge_slot(edge)]
    }

    /// Value at running coordinate `t` of `edge`.
    pub fn eval(&self, trace: &BoundaryTrace, edge: Edge, t: f64) -> Vec<f64> {
        let space = trace.edge_space(edge);
        let ev = space.eval(t, 0);
        let coeffs = self.edge_coeffs(edge);
        let dim = space.dim();
        (0..self.components)
            .map(|c| {
                ev.values
                    .iter()
                    .enumerate()
                    .map(|(a, b)| b[0] * coeffs[c * dim + ev.first + a])
                    .sum()
            })
            .collect()
    }

    /// Three-component value from tabulated univariate basis values.
    #[inline]
    pub fn eval3_local(&self, edge: Edge, dim: usize, first: usize, vals: &[f64]) -> [f64; 3] {
        let coeffs = self.edge_coeffs(edge);
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate() {
            *o = vals.iter().enumerate().map(|(a, b)| b * coeffs[c * dim + first + a]).sum();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_mesh_trace_counts() {
        let s = Arc::new(TensorSplineSpace::new(2, 1, 20).unwrap());
        let t = BoundaryTrace::new(s);
        for e in Edge::ALL {
            assert_eq!(t.edge_dofs(e).len(), 22);
        }
        assert_eq!(t.num_dofs(), 4 * 22 - 4);
    }

    #[test]
    fn corners_are_shared() {
        let s = Arc::new(TensorSplineSpace::new(2, 1, 3).unwrap());
        let t = BoundaryTrace::new(s);
        assert_eq!(t.edge_dofs(Edge::Bottom)[0], t.edge_dofs(Edge::Left)[0]);
        assert_eq!(
            t.edge_dofs(Edge::Bottom).last(),
            t.edge_dofs(Edge::Right).first()
        );
        assert_eq!(t.edge_dofs(Edge::Top).last(), t.edge_dofs(Edge::Right).last());
        for e in Edge::ALL {
            assert!(t.edge_dofs(e).iter().all(|&j| t.trace_dof(j).is_some()));
        }
    }

    #[test]
    fn restriction_of_zero_trace_and_constant() {
        let s = Arc::new(TensorSplineSpace::new(2, 1, 4).unwrap());
        let t = BoundaryTrace::new(s.clone());
        let z = SplineField::from_interior(s.clone(), &vec![3.0; s.interior_indices().len()]);
        let one = SplineField::constant(s, &[1.0]);
        for e in Edge::ALL {
            assert!(t.restrict(&z, 0, e).iter().all(|&x| x == 0.0));
            assert!(t.restrict(&one, 0, e).iter().all(|&x| x == 1.0));
        }
    }

    #[test]
    fn trace_interpolation_is_linear_and_exact_on_polynomials() {
        let s = Arc::new(TensorSplineSpace::new(2, 1, 5).unwrap());
        let t = BoundaryTrace::new(s);
        let f = |e: Edge, x: f64| [x * x, if e.along_u() { 1.0 } else { -x }];
        let a = TraceField::interpolate(&t, f);
        let b = TraceField::interpolate(&t, |e, x| f(e, x).map(|y| -y));
        for e in Edge::ALL {
            for (x, y) in a.edge_coeffs(e).iter().zip(b.edge_coeffs(e)) {
                assert_eq!(*x, -*y);
            }
            for k in 0..=10 {
                let x = k as f64 / 10.0;
                let v = a.eval(&t, e, x);
                let w = f(e, x);
                assert!((v[0] - w[0]).abs() < 1e-12 && (v[1] - w[1]).abs() < 1e-12);
            }
        }
    }
}
