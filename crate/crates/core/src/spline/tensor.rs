use super::univariate::UnivariateSpline;
use crate::error::{FlowError, Result};

/// One tensor-product basis function evaluated at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisValue {
    pub index: usize,
    pub value: f64,
    pub grad: [f64; 2],
    /// `[d_uu, d_uv, d_vv]`
    pub hessian: [f64; 3],
}

/// Tensor-product spline space `S_u ⊗ S_v` on the unit square.
///
/// Flat indices are `j = j1 + dim_u * j2`. A basis function is a boundary
/// function iff one of its univariate factors is the first or last basis
/// function of its direction.
#[derive(Debug, Clone)]
pub struct TensorSplineSpace {
    u_space: UnivariateSpline,
    v_space: UnivariateSpline,
    boundary: Vec<usize>,
    interior: Vec<usize>,
    boundary_pos: Vec<Option<usize>>,
    interior_pos: Vec<Option<usize>>,
}

impl TensorSplineSpace {
    /// Same degree, smoothness and element count in both directions.
    pub fn new(degree: usize, smoothness: usize, elements_per_side: usize) -> Result<Self> {
        let s = UnivariateSpline::new(degree, smoothness, elements_per_side)?;
        Ok(Self::from_factors(s.clone(), s))
    }

    pub fn from_factors(u_space: UnivariateSpline, v_space: UnivariateSpline) -> Self {
        let (nu, nv) = (u_space.dim(), v_space.dim());
        let n = nu * nv;
        let mut boundary = Vec::new();
        let mut interior = Vec::new();
        let mut boundary_pos = vec![None; n];
        let mut interior_pos = vec![None; n];
        for j2 in 0..nv {
            for j1 in 0..nu {
                let j = j1 + nu * j2;
                if j1 == 0 || j1 == nu - 1 || j2 == 0 || j2 == nv - 1 {
                    boundary_pos[j] = Some(boundary.len());
                    boundary.push(j);
                } else {
                    interior_pos[j] = Some(interior.len());
                    interior.push(j);
                }
            }
        }
        TensorSplineSpace {
            u_space,
            v_space,
            boundary,
            interior,
            boundary_pos,
            interior_pos,
        }
    }

    pub fn u_space(&self) -> &UnivariateSpline {
        &self.u_space
    }

    pub fn v_space(&self) -> &UnivariateSpline {
        &self.v_space
    }

    pub fn degree(&self) -> usize {
        self.u_space.degree()
    }

    pub fn smoothness(&self) -> usize {
        self.u_space.smoothness()
    }

    pub fn dim(&self) -> usize {
        self.u_space.dim() * self.v_space.dim()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.u_space.dim(), self.v_space.dim())
    }

    pub fn elements(&self) -> (usize, usize) {
        (self.u_space.num_elements(), self.v_space.num_elements())
    }

    pub fn num_elements(&self) -> usize {
        self.u_space.num_elements() * self.v_space.num_elements()
    }

    pub fn flat(&self, j1: usize, j2: usize) -> usize {
        j1 + self.u_space.dim() * j2
    }

    pub fn pair(&self, j: usize) -> (usize, usize) {
        let nu = self.u_space.dim();
        (j % nu, j / nu)
    }

    pub fn boundary_indices(&self) -> &[usize] {
        &self.boundary
    }

    pub fn interior_indices(&self) -> &[usize] {
        &self.interior
    }

    pub fn is_boundary(&self, j: usize) -> bool {
        self.boundary_pos[j].is_some()
    }

    /// Position of flat index `j` in [`Self::boundary_indices`].
    pub fn boundary_position(&self, j: usize) -> Option<usize> {
        self.boundary_pos[j]
    }

    /// Position of flat index `j` in [`Self::interior_indices`].
    pub fn interior_position(&self, j: usize) -> Option<usize> {
        self.interior_pos[j]
    }

    /// All basis functions that do not vanish at `(u, v)`, with derivatives
    /// up to `order` (0, 1 or 2).
    pub fn eval_basis(&self, u: f64, v: f64, order: usize) -> Result<Vec<BasisValue>> {
        if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
            return Err(FlowError::OutsideDomain(u, v));
        }
        let eu = self.u_space.eval(u, order);
        let ev = self.v_space.eval(v, order);
        let mut out = Vec::with_capacity(eu.values.len() * ev.values.len());
        for (b, bv) in ev.values.iter().enumerate() {
            for (a, au) in eu.values.iter().enumerate() {
                let value = au[0] * bv[0];
                let grad = [au[1] * bv[0], au[0] * bv[1]];
                let hessian = [au[2] * bv[0], au[1] * bv[1], au[0] * bv[2]];
                if value == 0.0 && grad == [0.0; 2] && hessian == [0.0; 3] {
                    continue;
                }
                out.push(BasisValue {
                    index: self.flat(eu.first + a, ev.first + b),
                    value,
                    grad,
                    hessian,
                });
            }
        }
        Ok(out)
    }
}
