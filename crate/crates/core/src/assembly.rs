//! Sparse assembly of surface matrices, the boundary constraint and the
//! nonlinear load vectors.
//!
//! Element contributions are computed in parallel into local buffers and
//! scattered sequentially in element order, so results do not depend on the
//! number of threads.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{cross, dot, norm, scale, Edge, GeometrySample, Vec3, Weingarten};
use crate::quadrature::GaussRule;
use crate::spline::{BoundaryTrace, LocalBasis, ParametricMesh, SplineField, TensorSplineSpace, TraceField};

/// Compressed sparse row matrix with sorted, duplicate-free column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds the matrix summing duplicate entries.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last = None;
        for (i, j, v) in triplets {
            assert!(i < rows && j < cols, "entry ({i}, {j}) out of bounds");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                values.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..rows {
            indptr[i + 1] += indptr[i];
        }
        SparseMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_triplets(rows, cols, Vec::new())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.cols, self.rows, self.triplets().map(|(i, j, v)| (j, i, v)).collect())
    }

    /// `max |M_ij - M_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        self.triplets()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    /// Submatrix on the given rows and columns, renumbered in the order given.
    pub fn restrict(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_pos = vec![usize::MAX; self.cols];
        for (k, &j) in cols.iter().enumerate() {
            col_pos[j] = k;
        }
        let trip = rows
            .iter()
            .enumerate()
            .flat_map(|(ri, &i)| {
                let col_pos = &col_pos;
                self.row(i)
                    .filter(move |(j, _)| col_pos[*j] != usize::MAX)
                    .map(move |(j, v)| (ri, col_pos[j], v))
            })
            .collect();
        Self::from_triplets(rows.len(), cols.len(), trip)
    }

    /// `a X + b Y` for matrices of equal shape.
    pub fn linear_combination(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        assert_eq!((x.rows, x.cols), (y.rows, y.cols));
        let trip = x
            .triplets()
            .map(|(i, j, v)| (i, j, a * v))
            .chain(y.triplets().map(|(i, j, v)| (i, j, b * v)))
            .collect();
        Self::from_triplets(x.rows, x.cols, trip)
    }

    /// Places `blocks` on a grid with the given offsets.
    pub fn from_blocks(rows: usize, cols: usize, blocks: &[(usize, usize, &Self)]) -> Self {
        let trip = blocks
            .iter()
            .flat_map(|&(r0, c0, m)| m.triplets().map(move |(i, j, v)| (r0 + i, c0 + j, v)))
            .collect();
        Self::from_triplets(rows, cols, trip)
    }

    /// Three copies of `self` on the diagonal.
    pub fn block_diag3(&self) -> Self {
        let (r, c) = (self.rows, self.cols);
        Self::from_blocks(3 * r, 3 * c, &[(0, 0, self), (r, c, self), (2 * r, 2 * c, self)])
    }

    pub fn to_faer(&self) -> faer::sparse::SparseColMat<usize, f64> {
        let trip: Vec<_> = self
            .triplets()
            .map(|(i, j, v)| faer::sparse::Triplet::new(i, j, v))
            .collect();
        faer::sparse::SparseColMat::try_new_from_triplets(self.rows, self.cols, &trip)
            .expect("valid triplets")
    }

    /// MatrixMarket coordinate format, 1-based indices.
    pub fn write_matrix_market(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.rows, self.cols, self.nnz())?;
        for (i, j, v) in self.triplets() {
            writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v)?;
        }
        Ok(())
    }
}

/// Mass and stiffness on the full space and their zero-trace restrictions,
/// together with the surface loads.
#[derive(Debug, Clone)]
pub struct SurfaceAssembly {
    pub mass: SparseMatrix,
    pub stiffness: SparseMatrix,
    /// `∫ |A_h|² κ_h b_i` over all `N` basis functions.
    pub f1_full: Vec<f64>,
    /// `∫ |A_h|² ν_h · e_c b_i`, component-major.
    pub f2: Vec<f64>,
}

struct ElementBlock {
    dofs: Vec<usize>,
    mass: Vec<f64>,
    stiffness: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
}

/// How the magnitude of the discrete normal enters the nonlinear terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalScaling {
    /// `|A_h|²` and the velocity direction use `ν_h / |ν_h|`. Agrees with
    /// `Raw` whenever `|ν_h| = 1`, and keeps drift of `|ν_h|` from feeding
    /// back through `|A_h|² ν_h`.
    #[default]
    Unit,
    /// `|A_h|² = |∇_Γ ν_h|²` and `v_h = Q(-κ_h ν_h)` as written.
    Raw,
}

impl NormalScaling {
    /// Factor applied to `|∇_Γ ν_h|²` at a point where the normal is `nu`.
    pub fn weingarten_factor(self, nu: Vec3) -> f64 {
        match self {
            NormalScaling::Raw => 1.0,
            NormalScaling::Unit => 1.0 / dot(nu, nu),
        }
    }

    /// The direction used in the velocity `-κ_h ν_h`.
    pub fn direction(self, nu: Vec3) -> Vec3 {
        match self {
            NormalScaling::Raw => nu,
            NormalScaling::Unit => scale(nu, 1.0 / norm(nu)),
        }
    }
}

/// Row layout of the constraint matrix `S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintRows {
    /// One row per basis function of each edge, so a corner function gets a
    /// separate row on each of its two edges. The tangent jumps at a corner
    /// and a single merged row only constrains the sum of both conditions.
    #[default]
    Edgewise,
    /// One row per boundary trace DOF. Each trace row is the sum of the
    /// corresponding edgewise rows.
    Trace,
}

/// Integrates basis products on the surface `x`. When `kappa_nu` is given the
/// nonlinear loads `f1` and `f2` are computed with `A_h = ∇_Γ ν_h`, weighted
/// according to `scaling`.
pub fn assemble_surface(
    mesh: &ParametricMesh,
    x: &SplineField,
    kappa_nu: Option<(&SplineField, &SplineField)>,
    scaling: NormalScaling,
) -> Result<SurfaceAssembly> {
    let space = mesh.space();
    let n = space.dim();
    let blocks: Vec<ElementBlock> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let dofs = mesh.element_dofs(e);
            let nb = dofs.len();
            let mut blk = ElementBlock {
                mass: vec![0.0; nb * nb],
                stiffness: vec![0.0; nb * nb],
                f1: vec![0.0; nb],
                f2: vec![0.0; 3 * nb],
                dofs,
            };
            let mut lb = LocalBasis::default();
            for q in 0..mesh.qp_per_element() {
                mesh.fill_local(e, q, &mut lb);
                let (_, jac) = x.local3(&blk.dofs, &lb);
                let g = GeometrySample::from_jacobian(lb.point, jac)?;
                let dw = g.area_element * lb.weight;
                for a in 0..nb {
                    let ga = lb.grad(a);
                    let va = lb.val[a] * dw;
                    for b in a..nb {
                        let m = va * lb.val[b];
                        let s = g.gradient_dot(ga, lb.grad(b)) * dw;
                        blk.mass[a * nb + b] += m;
                        blk.stiffness[a * nb + b] += s;
                    }
                }
                if let Some((kappa, nu)) = kappa_nu {
                    let (k, _) = kappa.local(0, &blk.dofs, &lb);
                    let mut grads = [[0.0; 2]; 3];
                    let mut nv = [0.0; 3];
                    for c in 0..3 {
                        let (val, gr) = nu.local(c, &blk.dofs, &lb);
                        nv[c] = val;
                        grads[c] = gr;
                    }
                    let w = Weingarten::from_parametric(grads, &g);
                    let wt = w.frob_sq * scaling.weingarten_factor(nv);
                    for a in 0..nb {
                        let va = lb.val[a] * dw * wt;
                        blk.f1[a] += va * k;
                        for c in 0..3 {
                            blk.f2[c * nb + a] += va * nv[c];
                        }
                    }
                }
            }
            for a in 0..nb {
                for b in 0..a {
                    blk.mass[a * nb + b] = blk.mass[b * nb + a];
                    blk.stiffness[a * nb + b] = blk.stiffness[b * nb + a];
                }
            }
            Ok(blk)
        })
        .collect::<Result<_>>()?;

    let nnz_est: usize = blocks.iter().map(|b| b.mass.len()).sum();
    let mut mt = Vec::with_capacity(nnz_est);
    let mut at = Vec::with_capacity(nnz_est);
    let mut f1_full = vec![0.0; n];
    let mut f2 = vec![0.0; 3 * n];
    for blk in &blocks {
        let nb = blk.dofs.len();
        for (a, &i) in blk.dofs.iter().enumerate() {
            for (b, &j) in blk.dofs.iter().enumerate() {
                mt.push((i, j, blk.mass[a * nb + b]));
                at.push((i, j, blk.stiffness[a * nb + b]));
            }
            f1_full[i] += blk.f1[a];
            for c in 0..3 {
                f2[c * n + i] += blk.f2[c * nb + a];
            }
        }
    }
    Ok(SurfaceAssembly {
        mass: SparseMatrix::from_triplets(n, n, mt),
        stiffness: SparseMatrix::from_triplets(n, n, at),
        f1_full,
        f2,
    })
}

/// Generic element-parallel load assembly. `f` receives the tabulated basis
/// at each quadrature point with the element's DOFs and accumulates into a
/// local buffer laid out as `c * nb + a`. The result is component-major over
/// the full space.
pub fn assemble_vector(
    mesh: &ParametricMesh,
    components: usize,
    f: impl Fn(&LocalBasis, &[usize], &mut [f64]) -> Result<()> + Sync,
) -> Result<Vec<f64>> {
    let n = mesh.space().dim();
    let blocks: Vec<(Vec<usize>, Vec<f64>)> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let dofs = mesh.element_dofs(e);
            let mut local = vec![0.0; components * dofs.len()];
            let mut lb = LocalBasis::default();
            for q in 0..mesh.qp_per_element() {
                mesh.fill_local(e, q, &mut lb);
                f(&lb, &dofs, &mut local)?;
            }
            Ok((dofs, local))
        })
        .collect::<Result<_>>()?;
    let mut out = vec![0.0; components * n];
    for (dofs, local) in &blocks {
        let nb = dofs.len();
        for c in 0..components {
            for (a, &i) in dofs.iter().enumerate() {
                out[c * n + i] += local[c * nb + a];
            }
        }
    }
    Ok(out)
}

/// `(M, A, M_0, A_0)` on the surface `x`.
pub fn assemble_mass_stiffness(
    mesh: &ParametricMesh,
    x: &SplineField,
) -> Result<(SparseMatrix, SparseMatrix, SparseMatrix, SparseMatrix)> {
    let s = assemble_surface(mesh, x, None, NormalScaling::Raw)?;
    let interior = mesh.space().interior_indices();
    let m0 = s.mass.restrict(interior, interior);
    let a0 = s.stiffness.restrict(interior, interior);
    Ok((s.mass, s.stiffness, m0, a0))
}

/// `f1_i = ∫_Γh |A_h|² κ_h b_i` for the interior basis functions.
pub fn assemble_f1(
    mesh: &ParametricMesh,
    x: &SplineField,
    kappa: &SplineField,
    nu: &SplineField,
    scaling: NormalScaling,
) -> Result<Vec<f64>> {
    let s = assemble_surface(mesh, x, Some((kappa, nu)), scaling)?;
    Ok(restrict_vec(&s.f1_full, mesh.space().interior_indices()))
}

pub fn restrict_vec(v: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| v[i]).collect()
}

/// One boundary quadrature point with tabulated trace basis values.
#[derive(Debug, Clone)]
pub struct BoundaryPoint {
    pub edge: Edge,
    /// Running coordinate along the edge.
    pub t: f64,
    /// Gauss weight times the length element.
    pub weight: f64,
    /// First univariate basis index on the element.
    pub first: usize,
    pub vals: Vec<f64>,
    /// Flat tensor indices of the trace basis functions.
    pub dofs: Vec<usize>,
    pub tangent: Vec3,
    pub curvature: Vec3,
}

impl BoundaryPoint {
    pub fn tangent_hat(&self) -> Vec3 {
        scale(self.tangent, 1.0 / norm(self.tangent))
    }

    /// Value of a three-component field from its flat coefficients.
    pub fn eval3(&self, field: &SplineField) -> Vec3 {
        let n = field.space().dim();
        let c = field.coeffs();
        let mut out = [0.0; 3];
        for (k, &j) in self.dofs.iter().enumerate() {
            for (d, o) in out.iter_mut().enumerate() {
                *o += self.vals[k] * c[d * n + j];
            }
        }
        out
    }
}

/// Gauss quadrature on the four edges of the boundary, `p + 1` points per
/// boundary element.
#[derive(Debug, Clone)]
pub struct BoundaryQuadrature {
    trace: BoundaryTrace,
    points: Vec<BoundaryPoint>,
}

impl BoundaryQuadrature {
    /// Builds the rule from a per-point callback returning
    /// `(length element, tangent, curvature vector)` at `(edge, t)`.
    pub fn from_fn(
        trace: BoundaryTrace,
        points_per_element: usize,
        data: impl Fn(Edge, f64) -> Result<(f64, Vec3, Vec3)>,
    ) -> Result<Self> {
        let rule = GaussRule::new(points_per_element);
        let mut points = Vec::new();
        for edge in Edge::ALL {
            let sp = trace.edge_space(edge);
            let edge_dofs = trace.edge_dofs(edge);
            for e in 0..sp.num_elements() {
                let (a, b) = sp.element_bounds(e);
                for (t, w) in rule.mapped(a, b) {
                    let ev = sp.eval_on_element(e, t, 0);
                    let (len, tangent, curvature) = data(edge, t)?;
                    points.push(BoundaryPoint {
                        edge,
                        t,
                        weight: w * len,
                        first: ev.first,
                        vals: ev.values.iter().map(|v| v[0]).collect(),
                        dofs: (0..ev.values.len()).map(|k| edge_dofs[ev.first + k]).collect(),
                        tangent,
                        curvature,
                    });
                }
            }
        }
        Ok(BoundaryQuadrature { trace, points })
    }

    /// Rule on the discrete boundary `∂Γ_{h,0}` of `x0` carrying the boundary
    /// interpolants `τ_h` and `κ_{∂,h}`.
    pub fn discrete(
        trace: BoundaryTrace,
        x0: &SplineField,
        tau_h: &TraceField,
        kappa_h: &TraceField,
    ) -> Result<Self> {
        let p = trace.space().degree();
        let tr = trace.clone();
        Self::from_fn(trace, p + 1, |edge, t| {
            let sp = tr.edge_space(edge);
            let ev = sp.eval(t, 1);
            let mut d1 = [0.0; 3];
            for (k, b) in ev.values.iter().enumerate() {
                let j = tr.edge_dofs(edge)[ev.first + k];
                for (c, d) in d1.iter_mut().enumerate() {
                    *d += b[1] * x0.component(c)[j];
                }
            }
            let dim = sp.dim();
            let vals: Vec<f64> = ev.values.iter().map(|v| v[0]).collect();
            Ok((
                norm(d1),
                tau_h.eval3_local(edge, dim, ev.first, &vals),
                kappa_h.eval3_local(edge, dim, ev.first, &vals),
            ))
        })
    }

    pub fn trace(&self) -> &BoundaryTrace {
        &self.trace
    }

    pub fn space(&self) -> &Arc<TensorSplineSpace> {
        self.trace.space()
    }

    pub fn points(&self) -> &[BoundaryPoint] {
        &self.points
    }

    /// Boundary length.
    pub fn length(&self) -> f64 {
        self.points.iter().map(|p| p.weight).sum()
    }

    /// `S^k_{ij} = ∫ b_i b_j (τ̂_h)_k`, columns over `3N`, rows laid out
    /// according to `rows`.
    pub fn constraint(&self, rows: ConstraintRows) -> SparseMatrix {
        let n = self.space().dim();
        let mut offsets = [0; 4];
        let mut edgewise = 0;
        for (k, e) in Edge::ALL.iter().enumerate() {
            offsets[k] = edgewise;
            edgewise += self.trace.edge_dofs(*e).len();
        }
        let mut trip = Vec::new();
        for pt in &self.points {
            let th = pt.tangent_hat();
            let edge = Edge::ALL.iter().position(|&e| e == pt.edge).expect("known edge");
            for (a, &i) in pt.dofs.iter().enumerate() {
                let row = match rows {
                    ConstraintRows::Edgewise => offsets[edge] + pt.first + a,
                    ConstraintRows::Trace => self.trace.trace_dof(i).expect("trace basis is on the boundary"),
                };
                for (b, &j) in pt.dofs.iter().enumerate() {
                    let m = pt.weight * pt.vals[a] * pt.vals[b];
                    for (k, t) in th.iter().enumerate() {
                        trip.push((row, k * n + j, m * t));
                    }
                }
            }
        }
        let m = match rows {
            ConstraintRows::Edgewise => edgewise,
            ConstraintRows::Trace => self.trace.num_dofs(),
        };
        SparseMatrix::from_triplets(m, 3 * n, trip)
    }

    /// Boundary mass `∫ b_i b_j` on the trace DOFs.
    pub fn mass(&self) -> SparseMatrix {
        let mut trip = Vec::new();
        for pt in &self.points {
            for (a, &i) in pt.dofs.iter().enumerate() {
                let row = self.trace.trace_dof(i).expect("trace basis is on the boundary");
                for (b, &j) in pt.dofs.iter().enumerate() {
                    let col = self.trace.trace_dof(j).expect("trace basis is on the boundary");
                    trip.push((row, col, pt.weight * pt.vals[a] * pt.vals[b]));
                }
            }
        }
        let nb = self.trace.num_dofs();
        SparseMatrix::from_triplets(nb, nb, trip)
    }

    /// `∫ (w·κ_∂)(w × τ)·ψ_i` for the vector basis, with `w` given pointwise.
    pub fn conormal_load(&self, mut w: impl FnMut(&BoundaryPoint) -> Vec3) -> Vec<f64> {
        let n = self.space().dim();
        let mut out = vec![0.0; 3 * n];
        for pt in &self.points {
            let wv = w(pt);
            let alpha = dot(wv, pt.curvature);
            let mu = cross(wv, pt.tangent);
            for (a, &i) in pt.dofs.iter().enumerate() {
                let s = pt.weight * alpha * pt.vals[a];
                for c in 0..3 {
                    out[c * n + i] += s * mu[c];
                }
            }
        }
        out
    }

    /// `f_b(ν_h)`.
    pub fn fb(&self, nu: &SplineField) -> Vec<f64> {
        self.conormal_load(|pt| pt.eval3(nu))
    }
}

/// `(f2, f_b)` on the surface `x` for the normal field `nu`.
pub fn assemble_f2_fb(
    mesh: &ParametricMesh,
    bq: &BoundaryQuadrature,
    x: &SplineField,
    nu: &SplineField,
    scaling: NormalScaling,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let zero = SplineField::zeros(mesh.space().clone(), 1);
    let s = assemble_surface(mesh, x, Some((&zero, nu)), scaling)?;
    Ok((s.f2, bq.fb(nu)))
}

/// Everything one time step needs, assembled on one surface.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub mass_full: SparseMatrix,
    pub mass_zero_trace: SparseMatrix,
    pub stiffness_full: SparseMatrix,
    pub stiffness_zero_trace: SparseMatrix,
    pub constraint_s: SparseMatrix,
    pub boundary_mass: SparseMatrix,
    pub load_f1: Vec<f64>,
    pub load_f2: Vec<f64>,
    pub load_fb: Vec<f64>,
}

impl AssembledSystem {
    /// Assembles on `x` with the nonlinear loads at `(kappa, nu)`. The
    /// constraint and boundary mass live on the fixed initial boundary and
    /// are taken from `bq`'s cache when given.
    pub fn assemble(
        mesh: &ParametricMesh,
        bq: &BoundaryQuadrature,
        x: &SplineField,
        kappa: &SplineField,
        nu: &SplineField,
        cached: Option<(&SparseMatrix, &SparseMatrix)>,
        scaling: NormalScaling,
    ) -> Result<Self> {
        let s = assemble_surface(mesh, x, Some((kappa, nu)), scaling)?;
        let interior = mesh.space().interior_indices();
        let (constraint_s, boundary_mass) = match cached {
            Some((c, m)) => (c.clone(), m.clone()),
            None => (bq.constraint(ConstraintRows::default()), bq.mass()),
        };
        Ok(AssembledSystem {
            mass_zero_trace: s.mass.restrict(interior, interior),
            stiffness_zero_trace: s.stiffness.restrict(interior, interior),
            load_f1: restrict_vec(&s.f1_full, interior),
            load_fb: bq.fb(nu),
            mass_full: s.mass,
            stiffness_full: s.stiffness,
            constraint_s,
            boundary_mass,
            load_f2: s.f2,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::QuasiInterpolant;
    use proptest::prelude::*;

    fn setup(n: usize) -> (Arc<TensorSplineSpace>, ParametricMesh, QuasiInterpolant) {
        let s = Arc::new(TensorSplineSpace::new(2, 1, n).unwrap());
        let mesh = ParametricMesh::assembly(s.clone());
        let q = QuasiInterpolant::new(s.clone());
        (s, mesh, q)
    }

    fn quad_form(m: &SparseMatrix, z: &[f64]) -> f64 {
        m.mul_vec(z).iter().zip(z).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = SparseMatrix::from_triplets(2, 3, vec![(0, 2, 1.0), (1, 0, 2.0), (0, 2, 0.5)]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 2), 1.5);
        assert_eq!(m.mul_vec(&[1.0, 0.0, 2.0]), vec![3.0, 2.0]);
        let t = m.transpose();
        assert_eq!(t.get(2, 0), 1.5);
        assert_eq!((t.rows(), t.cols()), (3, 2));
    }

    #[test]
    fn unit_flat_mass_totals_domain_area() {
        let (s, mesh, q) = setup(4);
        let x = q.apply(|u, v| [u, v, 0.0]);
        let (m, a, _, _) = assemble_mass_stiffness(&mesh, &x).unwrap();
        let total: f64 = m.triplets().map(|t| t.2).sum();
        assert!((total - 1.0).abs() < 1e-13);
        let ones = vec![1.0; s.dim()];
        assert!(quad_form(&a, &ones).abs() < 1e-12);
        assert!(m.max_asymmetry() <= 1e-12 && a.max_asymmetry() <= 1e-12);
    }

    #[test]
    fn scaling_the_plane_scales_mass_only() {
        let (_, mesh, q) = setup(3);
        let x1 = q.apply(|u, v| [u, v, 0.0]);
        let x2 = q.apply(|u, v| [2.0 * u, 2.0 * v, 0.0]);
        let (m1, a1, _, _) = assemble_mass_stiffness(&mesh, &x1).unwrap();
        let (m2, a2, _, _) = assemble_mass_stiffness(&mesh, &x2).unwrap();
        for (i, j, v) in m1.triplets() {
            assert!((m2.get(i, j) - 4.0 * v).abs() < 1e-13);
            assert!((a2.get(i, j) - a1.get(i, j)).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_mass_is_exact_at_assembly_quadrature() {
        let (s, mesh, q) = setup(3);
        let x = q.apply(|u, v| [2.0 * u - 1.0, 2.0 * v - 1.0, 0.0]);
        let (m, _, _, _) = assemble_mass_stiffness(&mesh, &x).unwrap();
        let fine = ParametricMesh::new(s, 6);
        let (mf, _, _, _) = assemble_mass_stiffness(&fine, &x).unwrap();
        for (i, j, v) in mf.triplets() {
            assert!((m.get(i, j) - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn entries_only_where_supports_overlap() {
        let (s, mesh, q) = setup(5);
        let x = q.apply(|u, v| [u, v, 0.1 * u * v]);
        let (m, _, _, _) = assemble_mass_stiffness(&mesh, &x).unwrap();
        for (i, j, _) in m.triplets() {
            let (i1, i2) = s.pair(i);
            let (j1, j2) = s.pair(j);
            let overlap = |a: (usize, usize), b: (usize, usize)| a.0 <= b.1 && b.0 <= a.1;
            assert!(overlap(s.u_space().support(i1), s.u_space().support(j1)));
            assert!(overlap(s.v_space().support(i2), s.v_space().support(j2)));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn mass_positive_and_zero_trace_stiffness_positive(seed in proptest::collection::vec(-1.0f64..1.0, 49)) {
            let (s, mesh, q) = setup(5);
            let x = q.apply(|u, v| [u, v, 0.3 * (u * u - v)]);
            let (m, _, _, a0) = assemble_mass_stiffness(&mesh, &x).unwrap();
            let z: Vec<f64> = (0..s.dim()).map(|k| seed[k % seed.len()] + 1e-3).collect();
            prop_assert!(quad_form(&m, &z) > 0.0);
            let z0: Vec<f64> = (0..a0.rows()).map(|k| seed[k % seed.len()] + 1e-3).collect();
            prop_assert!(quad_form(&a0, &z0) > 0.0);
        }
    }

    fn flat_boundary(n: usize) -> (Arc<TensorSplineSpace>, SplineField, BoundaryQuadrature) {
        let (s, _, q) = setup(n);
        let x = q.apply(|u, v| [2.0 * u - 1.0, 2.0 * v - 1.0, 0.0]);
        let trace = BoundaryTrace::new(s.clone());
        let tau = TraceField::interpolate(&trace, |e, _| {
            let d = e.direction();
            [d[0], d[1], 0.0]
        });
        let kappa = TraceField::zeros(&trace, 3);
        let bq = BoundaryQuadrature::discrete(trace, &x, &tau, &kappa).unwrap();
        (s, x, bq)
    }

    #[test]
    fn square_boundary_length_and_constraint() {
        let (s, _, bq) = flat_boundary(4);
        assert!((bq.length() - 8.0).abs() < 1e-12);
        let sm = bq.constraint(ConstraintRows::Trace);
        assert_eq!((sm.rows(), sm.cols()), (bq.trace().num_dofs(), 3 * s.dim()));
        let n = s.dim();
        for &j in s.interior_indices() {
            for row in 0..sm.rows() {
                for k in 0..3 {
                    assert_eq!(sm.get(row, k * n + j), 0.0);
                }
            }
        }
        let up = SplineField::constant(s.clone(), &[0.0, 0.0, 1.0]);
        assert!(sm.mul_vec(up.coeffs()).iter().all(|v| v.abs() < 1e-12));
        let mut inner = SplineField::constant(s, &[0.3, -0.2, 0.9]);
        inner.zero_boundary();
        assert!(sm.mul_vec(inner.coeffs()).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn trace_rows_sum_edgewise_rows() {
        let (s, _, bq) = flat_boundary(4);
        let trace = bq.constraint(ConstraintRows::Trace);
        let edge = bq.constraint(ConstraintRows::Edgewise);
        assert_eq!(edge.rows(), 4 * (4 + 2));
        assert_eq!(edge.rows(), trace.rows() + 4);
        let mut summed = vec![vec![0.0; 3 * s.dim()]; trace.rows()];
        let mut row = 0;
        for e in Edge::ALL {
            for &i in bq.trace().edge_dofs(e) {
                let r = bq.trace().trace_dof(i).unwrap();
                for (c, out) in summed[r].iter_mut().enumerate() {
                    *out += edge.get(row, c);
                }
                row += 1;
            }
        }
        for (r, want) in summed.iter().enumerate() {
            for (c, w) in want.iter().enumerate() {
                assert!((trace.get(r, c) - w).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn boundary_mass_totals_length() {
        let (_, _, bq) = flat_boundary(3);
        let total: f64 = bq.mass().triplets().map(|t| t.2).sum();
        assert!((total - 8.0).abs() < 1e-12);
    }

    #[test]
    fn loads_vanish_for_trivial_data() {
        let (s, mesh, q) = setup(4);
        let x = q.apply(|u, v| [u, v, 0.2 * u * (1.0 - v)]);
        let up = SplineField::constant(s.clone(), &[0.0, 0.0, 1.0]);
        let kappa = q.apply_vanishing(|u, v| [u * (1.0 - u) * v * (1.0 - v)]);
        let f1 = assemble_f1(&mesh, &x, &kappa, &up, NormalScaling::Raw).unwrap();
        assert!(f1.iter().all(|v| v.abs() < 1e-14));
        let bent = q.apply(|u, v| [u, v * v, 1.0]);
        let zero = SplineField::zeros(s.clone(), 1);
        let f1 = assemble_f1(&mesh, &x, &zero, &bent, NormalScaling::Raw).unwrap();
        assert!(f1.iter().all(|&v| v == 0.0));
        let (_, _, bq) = flat_boundary(4);
        let (f2, fb) = assemble_f2_fb(&mesh, &bq, &x, &up, NormalScaling::Raw).unwrap();
        assert!(f2.iter().all(|v| v.abs() < 1e-14));
        assert!(fb.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_scaling_is_homogeneous_of_degree_one() {
        let (s, mesh, q) = setup(4);
        let x = q.apply(|u, v| [u, v, 0.1 * u * v]);
        let nu = q.apply(|u, v| [0.3 * u, -0.2 * v * v, 1.0]);
        let nu2 = SplineField::new(s.clone(), 3, nu.coeffs().iter().map(|c| 2.0 * c).collect()).unwrap();
        let (_, _, bq) = flat_boundary(4);
        for (scaling, power) in [(NormalScaling::Unit, 2.0), (NormalScaling::Raw, 8.0)] {
            let (a, _) = assemble_f2_fb(&mesh, &bq, &x, &nu, scaling).unwrap();
            let (b, _) = assemble_f2_fb(&mesh, &bq, &x, &nu2, scaling).unwrap();
            let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(scale > 1e-6);
            for (a, b) in a.iter().zip(&b) {
                assert!((b - power * a).abs() <= 1e-12 * scale * power, "{scaling:?}");
            }
        }
        assert_eq!(NormalScaling::Unit.direction([0.0, 0.0, 3.0]), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn restriction_and_blocks() {
        let m = SparseMatrix::from_triplets(3, 3, vec![(0, 0, 1.0), (1, 2, 2.0), (2, 1, 3.0)]);
        let r = m.restrict(&[2, 1], &[1, 2]);
        assert_eq!(r.get(0, 0), 3.0);
        assert_eq!(r.get(1, 1), 2.0);
        let b = m.block_diag3();
        assert_eq!(b.get(8, 7), 3.0);
        assert_eq!(b.get(4, 5), 2.0);
        assert_eq!(b.nnz(), 9);
        let c = SparseMatrix::linear_combination(2.0, &m, -1.0, &m);
        assert_eq!(c, m);
        let mut buf = Vec::new();
        m.write_matrix_market(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real general\n3 3 3\n"));
    }
}
