use std::sync::Arc;

use super::tensor::TensorSplineSpace;
use super::univariate::UnivariateSpline;
use crate::quadrature::GaussRule;

/// Basis values tabulated at the Gauss points of every element in one direction.
#[derive(Debug, Clone)]
struct UniTable {
    nq: usize,
    nb: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    vals: Vec<[f64; 3]>,
}

impl UniTable {
    fn new(space: &UnivariateSpline, rule: &GaussRule) -> Self {
        let nq = rule.len();
        let nb = space.degree() + 1;
        let ne = space.num_elements();
        let mut points = Vec::with_capacity(ne * nq);
        let mut weights = Vec::with_capacity(ne * nq);
        let mut vals = Vec::with_capacity(ne * nq * nb);
        for e in 0..ne {
            let (a, b) = space.element_bounds(e);
            for (t, w) in rule.mapped(a, b) {
                points.push(t);
                weights.push(w);
                vals.extend(space.eval_on_element(e, t, 2).values);
            }
        }
        UniTable { nq, nb, points, weights, vals }
    }

    fn at(&self, e: usize, q: usize) -> &[[f64; 3]] {
        let start = (e * self.nq + q) * self.nb;
        &self.vals[start..start + self.nb]
    }
}

/// Local tensor basis data at one quadrature point, ordered like
/// [`ParametricMesh::element_dofs`].
#[derive(Debug, Clone, Default)]
pub struct LocalBasis {
    pub point: (f64, f64),
    pub weight: f64,
    pub val: Vec<f64>,
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
    pub duu: Vec<f64>,
    pub duv: Vec<f64>,
    pub dvv: Vec<f64>,
}

impl LocalBasis {
    pub fn len(&self) -> usize {
        self.val.len()
    }

    pub fn is_empty(&self) -> bool {
        self.val.is_empty()
    }

    pub fn grad(&self, k: usize) -> [f64; 2] {
        [self.du[k], self.dv[k]]
    }
}

/// Uniform `N x N` element mesh of the unit square with a tensor Gauss rule
/// per element and pre-tabulated basis values.
#[derive(Debug, Clone)]
pub struct ParametricMesh {
    space: Arc<TensorSplineSpace>,
    nq: usize,
    tu: UniTable,
    tv: UniTable,
}

impl ParametricMesh {
    pub fn new(space: Arc<TensorSplineSpace>, points_per_direction: usize) -> Self {
        let rule = GaussRule::new(points_per_direction);
        let tu = UniTable::new(space.u_space(), &rule);
        let tv = UniTable::new(space.v_space(), &rule);
        ParametricMesh {
            space,
            nq: points_per_direction,
            tu,
            tv,
        }
    }

    /// Assembly rule: `p + 1` points per direction.
    pub fn assembly(space: Arc<TensorSplineSpace>) -> Self {
        let p = space.degree();
        Self::new(space, p + 1)
    }

    pub fn space(&self) -> &Arc<TensorSplineSpace> {
        &self.space
    }

    pub fn points_per_direction(&self) -> usize {
        self.nq
    }

    pub fn num_elements(&self) -> usize {
        self.space.num_elements()
    }

    pub fn element_pair(&self, e: usize) -> (usize, usize) {
        let (nu, _) = self.space.elements();
        (e % nu, e / nu)
    }

    /// Quadrature points per element.
    pub fn qp_per_element(&self) -> usize {
        self.nq * self.nq
    }

    /// Flat indices of the `(p+1)^2` basis functions supported on element `e`.
    pub fn element_dofs(&self, e: usize) -> Vec<usize> {
        let (e1, e2) = self.element_pair(e);
        let f1 = self.space.u_space().first_basis(e1);
        let f2 = self.space.v_space().first_basis(e2);
        let (nb1, nb2) = (self.tu.nb, self.tv.nb);
        let mut dofs = Vec::with_capacity(nb1 * nb2);
        for b in 0..nb2 {
            for a in 0..nb1 {
                dofs.push(self.space.flat(f1 + a, f2 + b));
            }
        }
        dofs
    }

    /// Parametric point and weight of quadrature point `q` on element `e`.
    pub fn point(&self, e: usize, q: usize) -> ((f64, f64), f64) {
        let (e1, e2) = self.element_pair(e);
        let (q1, q2) = (q % self.nq, q / self.nq);
        let i1 = e1 * self.nq + q1;
        let i2 = e2 * self.nq + q2;
        (
            (self.tu.points[i1], self.tv.points[i2]),
            self.tu.weights[i1] * self.tv.weights[i2],
        )
    }

    pub fn fill_local(&self, e: usize, q: usize, out: &mut LocalBasis) {
        let (e1, e2) = self.element_pair(e);
        let (q1, q2) = (q % self.nq, q / self.nq);
        let (pt, w) = self.point(e, q);
        out.point = pt;
        out.weight = w;
        let bu = self.tu.at(e1, q1);
        let bv = self.tv.at(e2, q2);
        let n = bu.len() * bv.len();
        for vec in [
            &mut out.val,
            &mut out.du,
            &mut out.dv,
            &mut out.duu,
            &mut out.duv,
            &mut out.dvv,
        ] {
            vec.resize(n, 0.0);
        }
        let mut k = 0;
        for b in bv {
            for a in bu {
                out.val[k] = a[0] * b[0];
                out.du[k] = a[1] * b[0];
                out.dv[k] = a[0] * b[1];
                out.duu[k] = a[2] * b[0];
                out.duv[k] = a[1] * b[1];
                out.dvv[k] = a[0] * b[2];
                k += 1;
            }
        }
    }

    pub fn local(&self, e: usize, q: usize) -> LocalBasis {
        let mut lb = LocalBasis::default();
        self.fill_local(e, q, &mut lb);
        lb
    }
}
