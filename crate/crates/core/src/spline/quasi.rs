//! Quasi-interpolation with local least-squares dual functionals.
//!
//! The functional dual to basis `B_j` is the `j`-th coefficient of the
//! `L^2` projection onto the spline space restricted to `supp B_j`. Writing
//! `G` for the local Gram matrix, `lambda_j(f) = ∫ f Φ_j` with
//! `Φ_j = Σ_k (G^{-1})_{jk} B_k`. Every function that coincides with a spline
//! on `supp B_j` is reproduced, so `lambda_j(B_i) = δ_ij` and the operator
//! is a projector onto the space. Integrals use `p + 2` Gauss points per element.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::Mat;
use rayon::prelude::*;

use super::field::SplineField;
use super::tensor::TensorSplineSpace;
use super::univariate::UnivariateSpline;
use crate::error::Result;
use crate::quadrature::GaussRule;

/// Dual functionals of a univariate B-spline basis as weighted point sums.
#[derive(Debug, Clone)]
pub struct UnivariateQuasi {
    space: UnivariateSpline,
    points: Vec<f64>,
    functionals: Vec<Vec<(usize, f64)>>,
}

impl UnivariateQuasi {
    pub fn new(space: &UnivariateSpline) -> Self {
        let p = space.degree();
        let nq = p + 2;
        let rule = GaussRule::new(nq);
        let ne = space.num_elements();
        let mut points = Vec::with_capacity(ne * nq);
        let mut weights = Vec::with_capacity(ne * nq);
        let mut tab = Vec::with_capacity(ne * nq);
        for e in 0..ne {
            let (a, b) = space.element_bounds(e);
            for (t, w) in rule.mapped(a, b) {
                points.push(t);
                weights.push(w);
                tab.push(space.eval_on_element(e, t, 0));
            }
        }
        let functionals = (0..space.dim())
            .map(|j| {
                let (lo, hi) = space.support(j);
                let first = space.first_basis(lo);
                let last = space.first_basis(hi) + p;
                let n = last - first + 1;
                let mut gram = Mat::<f64>::zeros(n, n);
                for idx in lo * nq..(hi + 1) * nq {
                    let ev = &tab[idx];
                    for (a, va) in ev.values.iter().enumerate() {
                        for (b, vb) in ev.values.iter().enumerate() {
                            gram[(ev.first + a - first, ev.first + b - first)] +=
                                weights[idx] * va[0] * vb[0];
                        }
                    }
                }
                let mut rhs = Mat::<f64>::zeros(n, 1);
                rhs[(j - first, 0)] = 1.0;
                let y = gram.partial_piv_lu().solve(&rhs);
                (lo * nq..(hi + 1) * nq)
                    .map(|idx| {
                        let ev = &tab[idx];
                        let phi: f64 = ev
                            .values
                            .iter()
                            .enumerate()
                            .map(|(a, va)| y[(ev.first + a - first, 0)] * va[0])
                            .sum();
                        (idx, weights[idx] * phi)
                    })
                    .collect()
            })
            .collect();
        UnivariateQuasi {
            space: space.clone(),
            points,
            functionals,
        }
    }

    pub fn space(&self) -> &UnivariateSpline {
        &self.space
    }

    /// Global sample points read by the functionals.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn functional(&self, j: usize) -> &[(usize, f64)] {
        &self.functionals[j]
    }

    /// Applies every functional to samples given at [`Self::points`].
    pub fn apply_samples(&self, samples: &[f64]) -> Vec<f64> {
        self.functionals
            .iter()
            .map(|f| f.iter().map(|&(i, w)| w * samples[i]).sum())
            .collect()
    }

    pub fn apply(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let samples: Vec<f64> = self.points.iter().map(|&t| f(t)).collect();
        self.apply_samples(&samples)
    }
}

/// Tensor-product quasi-interpolant `Q(f) = Σ_j lambda_j(f) b_j`.
#[derive(Debug, Clone)]
pub struct QuasiInterpolant {
    space: Arc<TensorSplineSpace>,
    qu: UnivariateQuasi,
    qv: UnivariateQuasi,
}

impl QuasiInterpolant {
    pub fn new(space: Arc<TensorSplineSpace>) -> Self {
        let qu = UnivariateQuasi::new(space.u_space());
        let qv = UnivariateQuasi::new(space.v_space());
        QuasiInterpolant { space, qu, qv }
    }

    pub fn space(&self) -> &Arc<TensorSplineSpace> {
        &self.space
    }

    pub fn u_functionals(&self) -> &UnivariateQuasi {
        &self.qu
    }

    pub fn v_functionals(&self) -> &UnivariateQuasi {
        &self.qv
    }

    /// Number of distinct elements read by functional `j`.
    pub fn support_elements(&self, j: usize) -> usize {
        let (j1, j2) = self.space.pair(j);
        let (a, b) = self.space.u_space().support(j1);
        let (c, d) = self.space.v_space().support(j2);
        (b - a + 1) * (d - c + 1)
    }

    /// Quasi-interpolates a `D`-valued function given on the parametric square.
    pub fn apply<const D: usize>(&self, f: impl Fn(f64, f64) -> [f64; D] + Sync) -> SplineField {
        self.try_apply(|u, v| Ok(f(u, v))).expect("infallible evaluation")
    }

    /// As [`Self::apply`], propagating evaluation failures of `f`.
    pub fn try_apply<const D: usize>(
        &self,
        f: impl Fn(f64, f64) -> Result<[f64; D]> + Sync,
    ) -> Result<SplineField> {
        let pu = self.qu.points();
        let pv = self.qv.points();
        let nv = pv.len();
        // samples[(iu + nu * iv) * D + c]
        let rows: Vec<Vec<[f64; D]>> = pv
            .par_iter()
            .map(|&v| pu.iter().map(|&u| f(u, v)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let (du, dv) = self.space.dims();
        // Contract along u: partial[iv][j1][c]
        let partial: Vec<Vec<[f64; D]>> = rows
            .par_iter()
            .map(|row| {
                (0..du)
                    .map(|j1| {
                        let mut acc = [0.0; D];
                        for &(iu, w) in self.qu.functional(j1) {
                            for c in 0..D {
                                acc[c] += w * row[iu][c];
                            }
                        }
                        acc
                    })
                    .collect()
            })
            .collect();
        debug_assert_eq!(partial.len(), nv);
        let n = self.space.dim();
        let mut coeffs = vec![0.0; D * n];
        for j2 in 0..dv {
            for j1 in 0..du {
                let j = self.space.flat(j1, j2);
                for &(iv, w) in self.qv.functional(j2) {
                    for c in 0..D {
                        coeffs[c * n + j] += w * partial[iv][j1][c];
                    }
                }
            }
        }
        SplineField::new(self.space.clone(), D, coeffs)
    }

    /// Quasi-interpolant with boundary coefficients set to zero, for
    /// functions that vanish on the boundary.
    pub fn apply_vanishing<const D: usize>(
        &self,
        f: impl Fn(f64, f64) -> [f64; D] + Sync,
    ) -> SplineField {
        let mut field = self.apply(f);
        field.zero_boundary();
        field
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_basis(space: &TensorSplineSpace, i: usize, u: f64, v: f64) -> f64 {
        space
            .eval_basis(u, v, 0)
            .unwrap()
            .iter()
            .find(|b| b.index == i)
            .map_or(0.0, |b| b.value)
    }

    #[test]
    fn univariate_dual_basis() {
        for (p, l, n) in [(2, 1, 5), (3, 0, 3), (3, 2, 6), (4, 1, 2)] {
            let s = UnivariateSpline::new(p, l, n).unwrap();
            let q = UnivariateQuasi::new(&s);
            for i in 0..s.dim() {
                let c = q.apply(|t| {
                    let ev = s.eval(t, 0);
                    if i >= ev.first && i <= ev.first + p {
                        ev.values[i - ev.first][0]
                    } else {
                        0.0
                    }
                });
                for (j, &x) in c.iter().enumerate() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((x - want).abs() < 1e-10, "p={p} i={i} j={j} x={x}");
                }
            }
        }
    }

    #[test]
    fn tensor_dual_basis() {
        let s = Arc::new(TensorSplineSpace::new(2, 1, 3).unwrap());
        let q = QuasiInterpolant::new(s.clone());
        for i in 0..s.dim() {
            let c = q.apply(|u, v| [eval_basis(&s, i, u, v)]);
            for (j, &x) in c.coeffs().iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((x - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn constant_reproduced() {
        let s = Arc::new(TensorSplineSpace::new(2, 1, 6).unwrap());
        let q = QuasiInterpolant::new(s);
        let c = q.apply(|_, _| [1.0]);
        assert!(c.coeffs().iter().all(|x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn bilinear_reproduced_pointwise() {
        let s = Arc::new(TensorSplineSpace::new(2, 1, 5).unwrap());
        let q = QuasiInterpolant::new(s);
        let f = q.apply(|u, v| [u * v]);
        for k in 0..100 {
            let u = ((k * 37 + 11) % 100) as f64 / 99.0;
            let v = ((k * 53 + 7) % 100) as f64 / 99.0;
            assert!((f.eval(u, v).unwrap()[0] - u * v).abs() < 1e-12);
        }
    }

    #[test]
    fn locality_bound() {
        let s = Arc::new(TensorSplineSpace::new(3, 1, 6).unwrap());
        let q = QuasiInterpolant::new(s.clone());
        for j in 0..s.dim() {
            assert!(q.support_elements(j) <= 16);
        }
    }

    #[test]
    fn vanishing_variant_zeroes_boundary() {
        let s = Arc::new(TensorSplineSpace::new(2, 1, 4).unwrap());
        let q = QuasiInterpolant::new(s.clone());
        let f = q.apply_vanishing(|u, v| [u * (1.0 - u) * v * (1.0 - v)]);
        for &j in s.boundary_indices() {
            assert_eq!(f.coeffs()[j], 0.0);
        }
    }

    #[test]
    fn evaluation_errors_propagate() {
        let s = Arc::new(TensorSplineSpace::new(2, 1, 2).unwrap());
        let q = QuasiInterpolant::new(s);
        let r = q.try_apply(|u, _| {
            if u > 0.5 {
                Err(crate::error::FlowError::Evaluation("boom".into()))
            } else {
                Ok([u])
            }
        });
        assert!(r.is_err());
    }
}
