//! Sparse direct solves with a residual check.

use faer::linalg::solvers::Solve;
use faer::Col;

use crate::assembly::SparseMatrix;
use crate::error::{FlowError, Result};

/// Largest accepted relative residual `‖b − Ax‖ / ‖b‖`.
pub const MAX_RELATIVE_RESIDUAL: f64 = 1e-9;

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A sparse LU factorization kept for repeated solves with one matrix.
pub struct Factorization {
    matrix: SparseMatrix,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl Factorization {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(FlowError::SolverFailure(format!(
                "matrix is {}x{}, expected square",
                a.rows(),
                a.cols()
            )));
        }
        let lu = a
            .to_faer()
            .sp_lu()
            .map_err(|e| FlowError::SolverFailure(format!("LU factorization: {e:?}")))?;
        Ok(Factorization {
            matrix: a.clone(),
            lu,
        })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    fn apply(&self, rhs: &[f64]) -> Vec<f64> {
        let col = Col::<f64>::from_fn(rhs.len(), |i| rhs[i]);
        let sol = self.lu.solve(&col);
        (0..rhs.len()).map(|i| sol[i]).collect()
    }

    /// Solves with one step of iterative refinement. Returns the solution
    /// and its relative residual.
    pub fn solve(&self, b: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.solve_within(b, MAX_RELATIVE_RESIDUAL)
    }

    /// As [`Factorization::solve`], failing above the relative residual `tol`.
    pub fn solve_within(&self, b: &[f64], tol: f64) -> Result<(Vec<f64>, f64)> {
        self.solve_scaled(b, norm2(b), tol)
    }

    /// Solves `A d = r` for a defect `r`, with the residual measured relative
    /// to `scale`, the size of the right-hand side the defect was formed from.
    /// Solving for corrections keeps round-off proportional to the change.
    pub fn solve_scaled(&self, r: &[f64], scale: f64, tol: f64) -> Result<(Vec<f64>, f64)> {
        let a = &self.matrix;
        if a.rows() != r.len() {
            return Err(FlowError::SolverFailure(format!(
                "{}x{} system with rhs of length {}",
                a.rows(),
                a.cols(),
                r.len()
            )));
        }
        if r.iter().all(|&v| v == 0.0) {
            return Ok((vec![0.0; r.len()], 0.0));
        }
        let scale = if scale > 0.0 { scale } else { norm2(r) };
        let residual = |x: &[f64]| {
            let ax = a.mul_vec(x);
            let res: Vec<f64> = r.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
            let rel = norm2(&res) / scale;
            (res, rel)
        };
        let mut x = self.apply(r);
        let (res, mut rel) = residual(&x);
        if rel > 1e-14 {
            let refined: Vec<f64> = x.iter().zip(self.apply(&res)).map(|(x, d)| x + d).collect();
            let (_, rel2) = residual(&refined);
            if rel2 < rel {
                x = refined;
                rel = rel2;
            }
        }
        if !rel.is_finite() || rel > tol {
            return Err(FlowError::SolverFailure(format!(
                "relative residual {rel:.3e} exceeds {tol:.0e}"
            )));
        }
        Ok((x, rel))
    }
}

/// Solves `A x = b` by sparse LU with one step of iterative refinement.
/// Returns the solution and its relative residual.
pub fn solve(a: &SparseMatrix, b: &[f64]) -> Result<(Vec<f64>, f64)> {
    if b.len() == a.rows() && b.iter().all(|&v| v == 0.0) {
        return Ok((vec![0.0; b.len()], 0.0));
    }
    Factorization::new(a)?.solve(b)
}

/// Assembles `[K  Sᵀ; S  0]`.
pub fn saddle_matrix(k: &SparseMatrix, s: &SparseMatrix) -> SparseMatrix {
    assert_eq!(k.cols(), s.cols());
    let n = k.rows();
    let m = s.rows();
    let st = s.transpose();
    SparseMatrix::from_blocks(n + m, n + m, &[(0, 0, k), (0, n, &st), (n, 0, s)])
}

/// Solves the saddle system `[K Sᵀ; S 0] (x, λ) = (f, 0)`.
/// Returns `(x, λ, relative residual)`.
pub fn solve_saddle(k: &SparseMatrix, s: &SparseMatrix, f: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let n = k.rows();
    let mut rhs = f.to_vec();
    rhs.resize(n + s.rows(), 0.0);
    let (mut sol, rel) = solve(&saddle_matrix(k, s), &rhs)?;
    let lambda = sol.split_off(n);
    Ok((sol, lambda, rel))
}

/// A factorized saddle matrix `[K Sᵀ; S 0]`.
pub struct SaddleSolver {
    n: usize,
    m: usize,
    factor: Factorization,
}

impl SaddleSolver {
    pub fn new(k: &SparseMatrix, s: &SparseMatrix) -> Result<Self> {
        Ok(SaddleSolver {
            n: k.rows(),
            m: s.rows(),
            factor: Factorization::new(&saddle_matrix(k, s))?,
        })
    }

    /// Solves with right-hand side `(f, 0)`; returns `(x, λ, residual)`.
    pub fn solve(&self, f: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        self.solve_within(f, MAX_RELATIVE_RESIDUAL)
    }

    pub fn solve_within(&self, f: &[f64], tol: f64) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        self.solve_scaled(f, &vec![0.0; self.m], norm2(f), tol)
    }

    /// Solves `[K Sᵀ; S 0] (x, λ) = (f, g)` with the residual relative to
    /// `scale`; see [`Factorization::solve_scaled`].
    pub fn solve_scaled(&self, f: &[f64], g: &[f64], scale: f64, tol: f64) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        if f.len() != self.n || g.len() != self.m {
            return Err(FlowError::SolverFailure(format!(
                "saddle system of size {}+{} with rhs of length {}+{}",
                self.n,
                self.m,
                f.len(),
                g.len()
            )));
        }
        let rhs = [f, g].concat();
        let (mut sol, rel) = self.factor.solve_scaled(&rhs, scale, tol)?;
        let lambda = sol.split_off(self.n);
        Ok((sol, lambda, rel))
    }
}
