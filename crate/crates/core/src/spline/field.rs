use std::sync::Arc;

use super::mesh::LocalBasis;
use super::tensor::TensorSplineSpace;
use crate::error::{FlowError, Result};

/// Coefficients of a scalar (`D = 1`) or vector-valued (`D = 3`) spline on a
/// tensor space. Layout is component-major: entry `c * N + j` multiplies
/// basis `j` in component `c`.
#[derive(Debug, Clone)]
pub struct SplineField {
    space: Arc<TensorSplineSpace>,
    components: usize,
    coeffs: Vec<f64>,
}

/// Fields are equal when they live on equivalent spaces and carry identical
/// coefficients.
impl PartialEq for SplineField {
    fn eq(&self, other: &Self) -> bool {
        let (a, b) = (&self.space, &other.space);
        let same_space = Arc::ptr_eq(a, b)
            || (a.degree() == b.degree() && a.smoothness() == b.smoothness() && a.elements() == b.elements());
        same_space && self.components == other.components && self.coeffs == other.coeffs
    }
}

impl SplineField {
    pub fn new(space: Arc<TensorSplineSpace>, components: usize, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != components * space.dim() {
            return Err(FlowError::Evaluation(format!(
                "expected {} coefficients, got {}",
                components * space.dim(),
                coeffs.len()
            )));
        }
        if let Some(bad) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(FlowError::Evaluation(format!("non-finite coefficient at {bad}")));
        }
        Ok(SplineField { space, components, coeffs })
    }

    pub fn zeros(space: Arc<TensorSplineSpace>, components: usize) -> Self {
        let n = space.dim();
        SplineField { space, components, coeffs: vec![0.0; components * n] }
    }

    /// The constant function `value`; exact because the basis is a partition of unity.
    pub fn constant(space: Arc<TensorSplineSpace>, value: &[f64]) -> Self {
        let n = space.dim();
        let coeffs = value.iter().flat_map(|&c| std::iter::repeat_n(c, n)).collect();
        SplineField { space, components: value.len(), coeffs }
    }

    /// Scalar field with the given interior coefficients and zero trace.
    pub fn from_interior(space: Arc<TensorSplineSpace>, interior: &[f64]) -> Self {
        let mut coeffs = vec![0.0; space.dim()];
        for (&j, &c) in space.interior_indices().iter().zip(interior) {
            coeffs[j] = c;
        }
        SplineField { space, components: 1, coeffs }
    }

    pub fn space(&self) -> &Arc<TensorSplineSpace> {
        &self.space
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.space.dim();
        &self.coeffs[c * n..(c + 1) * n]
    }

    /// Interior coefficients of a scalar field.
    pub fn interior_coeffs(&self) -> Vec<f64> {
        self.space.interior_indices().iter().map(|&j| self.coeffs[j]).collect()
    }

    /// Sets every coefficient of a boundary basis function to zero.
    pub fn zero_boundary(&mut self) {
        let n = self.space.dim();
        for c in 0..self.components {
            for &j in self.space.boundary_indices() {
                self.coeffs[c * n + j] = 0.0;
            }
        }
    }

    pub fn eval(&self, u: f64, v: f64) -> Result<Vec<f64>> {
        let basis = self.space.eval_basis(u, v, 0)?;
        let n = self.space.dim();
        Ok((0..self.components)
            .map(|c| basis.iter().map(|b| b.value * self.coeffs[c * n + b.index]).sum())
            .collect())
    }

    /// Values and parametric gradients per component.
    pub fn eval_grad(&self, u: f64, v: f64) -> Result<(Vec<f64>, Vec<[f64; 2]>)> {
        let basis = self.space.eval_basis(u, v, 1)?;
        let n = self.space.dim();
        let mut val = vec![0.0; self.components];
        let mut grad = vec![[0.0; 2]; self.components];
        for c in 0..self.components {
            for b in &basis {
                let x = self.coeffs[c * n + b.index];
                val[c] += b.value * x;
                grad[c][0] += b.grad[0] * x;
                grad[c][1] += b.grad[1] * x;
            }
        }
        Ok((val, grad))
    }

    /// Value and gradient of component `c` from tabulated local basis data.
    #[inline]
    pub fn local(&self, c: usize, dofs: &[usize], lb: &LocalBasis) -> (f64, [f64; 2]) {
        let base = c * self.space.dim();
        let mut val = 0.0;
        let mut g = [0.0; 2];
        for (k, &j) in dofs.iter().enumerate() {
            let x = self.coeffs[base + j];
            val += lb.val[k] * x;
            g[0] += lb.du[k] * x;
            g[1] += lb.dv[k] * x;
        }
        (val, g)
    }

    /// Three-component value and Jacobian columns `(d_u, d_v)`.
    #[inline]
    pub fn local3(&self, dofs: &[usize], lb: &LocalBasis) -> ([f64; 3], [[f64; 3]; 2]) {
        let mut val = [0.0; 3];
        let mut jac = [[0.0; 3]; 2];
        for c in 0..3 {
            let (x, g) = self.local(c, dofs, lb);
            val[c] = x;
            jac[0][c] = g[0];
            jac[1][c] = g[1];
        }
        (val, jac)
    }

    /// Maximum absolute coefficient difference to another field on the same space.
    pub fn max_diff(&self, other: &SplineField) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
