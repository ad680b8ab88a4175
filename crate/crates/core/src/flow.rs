//! Linearly implicit BDF time stepping of the coupled curvature, normal and
//! position system.

use std::sync::Arc;
use std::time::Instant;

use crate::analytic::InitialSurface;
use crate::assembly::{AssembledSystem, BoundaryQuadrature, ConstraintRows, NormalScaling, SparseMatrix};
use crate::error::{FlowError, Result};
use crate::linalg::{self, SaddleSolver};
use crate::projections::{nonlinear_ritz_normal, project_velocity, BoundaryData, RitzConfig, RitzOutcome};
use crate::spline::{BoundaryTrace, LocalBasis, ParametricMesh, QuasiInterpolant, SplineField, TensorSplineSpace};

/// Derivative weights `δ_0..δ_q` and extrapolation weights `γ_0..γ_{q-1}`
/// from `δ(ζ) = Σ_{ℓ=1}^q (1−ζ)^ℓ / ℓ` and `γ(ζ) = (1 − (1−ζ)^q) / ζ`.
pub fn bdf_coefficients(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    match order {
        1 => Ok((vec![1.0, -1.0], vec![1.0])),
        2 => Ok((vec![1.5, -2.0, 0.5], vec![2.0, -1.0])),
        q => Err(FlowError::InvalidBdfOrder(q)),
    }
}

/// One time level of the discrete flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub time: f64,
    pub x: SplineField,
    /// Scalar curvature on the full space with zero boundary coefficients.
    pub kappa: SplineField,
    pub nu: SplineField,
    pub v: SplineField,
    /// Multiplier of the last normal solve, one entry per trace DOF.
    pub multiplier: Vec<f64>,
}

impl FlowState {
    /// Zero-trace curvature coefficients.
    pub fn kappa_coeffs(&self) -> Vec<f64> {
        self.kappa.interior_coeffs()
    }

    fn linear_combination(weights: &[f64], states: &[&FlowState], pick: impl Fn(&FlowState) -> &SplineField) -> SplineField {
        let first = pick(states[0]);
        let mut out = vec![0.0; first.coeffs().len()];
        for (w, s) in weights.iter().zip(states) {
            for (o, c) in out.iter_mut().zip(pick(s).coeffs()) {
                *o += w * c;
            }
        }
        SplineField::new(first.space().clone(), first.components(), out).expect("finite combination")
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub time: f64,
    pub area: f64,
    pub max_abs_kappa: f64,
    /// `‖S ν‖_∞`.
    pub constraint_residual: f64,
    /// Relative residuals of the curvature and normal solves.
    pub linear_solver_residuals: Vec<f64>,
    pub wallclock: f64,
}

impl StepDiagnostics {
    pub fn max_solver_residual(&self) -> f64 {
        self.linear_solver_residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// BDF order, coefficients and the most recent states, newest first.
#[derive(Debug, Clone)]
pub struct BdfScheme {
    pub order: usize,
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
    history: Vec<FlowState>,
}

impl BdfScheme {
    pub fn new(order: usize) -> Result<Self> {
        let (delta, gamma) = bdf_coefficients(order)?;
        Ok(BdfScheme {
            order,
            delta,
            gamma,
            history: Vec::with_capacity(order),
        })
    }

    /// Adds the newest state, dropping the oldest beyond the order.
    pub fn push(&mut self, state: FlowState) {
        self.history.insert(0, state);
        self.history.truncate(self.order);
    }

    pub fn history(&self) -> &[FlowState] {
        &self.history
    }

    pub fn latest(&self) -> Option<&FlowState> {
        self.history.first()
    }

    pub fn is_ready(&self) -> bool {
        self.history.len() == self.order
    }
}

/// Knobs of the time stepper that do not change the discrete spaces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    pub normal_scaling: NormalScaling,
    pub constraint_rows: ConstraintRows,
    /// Largest accepted relative residual of each linear solve.
    pub solver_tolerance: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            normal_scaling: NormalScaling::default(),
            constraint_rows: ConstraintRows::default(),
            solver_tolerance: linalg::MAX_RELATIVE_RESIDUAL,
        }
    }
}

/// Discretization of one initial surface: spaces, interpolant, boundary
/// data and the constraint, all fixed in time.
pub struct FlowProblem {
    space: Arc<TensorSplineSpace>,
    mesh: ParametricMesh,
    q: QuasiInterpolant,
    boundary_data: BoundaryData,
    bq: BoundaryQuadrature,
    constraint: SparseMatrix,
    boundary_mass: SparseMatrix,
    x0: SplineField,
    ritz: Option<RitzOutcome>,
    options: FlowOptions,
}

impl FlowProblem {
    /// Builds the discrete problem and the initial state:
    /// `X_{h,0} = Q X_0`, `κ_{h,0}` the vanishing quasi-interpolant of `κ_0`,
    /// `ν_{h,0}` the nonlinear Ritz projection of `ν_0` and `v = Q(-κ ν)`.
    pub fn initialize(
        surface: &dyn InitialSurface,
        degree: usize,
        smoothness: usize,
        elements: usize,
        ritz: &RitzConfig,
    ) -> Result<(Self, FlowState)> {
        Self::initialize_with(surface, degree, smoothness, elements, ritz, FlowOptions::default())
    }

    /// As [`FlowProblem::initialize`] with explicit stepper options.
    pub fn initialize_with(
        surface: &dyn InitialSurface,
        degree: usize,
        smoothness: usize,
        elements: usize,
        ritz: &RitzConfig,
        options: FlowOptions,
    ) -> Result<(Self, FlowState)> {
        if !(options.solver_tolerance > 0.0) {
            return Err(FlowError::Config(format!(
                "solver tolerance {} must be positive",
                options.solver_tolerance
            )));
        }
        let space = Arc::new(TensorSplineSpace::new(degree, smoothness, elements)?);
        let mesh = ParametricMesh::assembly(space.clone());
        let q = QuasiInterpolant::new(space.clone());
        let x0 = q.apply(|u, v| surface.position(u, v));
        let trace = BoundaryTrace::new(space.clone());
        let boundary_data = BoundaryData::from_surface(&trace, surface)?;
        let bq = boundary_data.quadrature(trace, &x0)?;
        let constraint = bq.constraint(options.constraint_rows);
        let boundary_mass = bq.mass();
        let mut kappa = q.try_apply(|u, v| Ok([surface.sample(u, v)?.mean_curvature]))?;
        kappa.zero_boundary();
        let outcome = nonlinear_ritz_normal(&mesh, &q, &x0, surface, &bq, &constraint, ritz)?;
        let nu = outcome.normal.clone();
        let v = project_velocity(&q, &kappa, &nu, options.normal_scaling)?;
        let state = FlowState {
            time: 0.0,
            x: x0.clone(),
            kappa,
            nu,
            v,
            multiplier: outcome.multiplier.clone(),
        };
        let problem = FlowProblem {
            space,
            mesh,
            q,
            boundary_data,
            bq,
            constraint,
            boundary_mass,
            x0,
            ritz: Some(outcome),
            options,
        };
        Ok((problem, state))
    }

    pub fn space(&self) -> &Arc<TensorSplineSpace> {
        &self.space
    }

    pub fn mesh(&self) -> &ParametricMesh {
        &self.mesh
    }

    pub fn quasi_interpolant(&self) -> &QuasiInterpolant {
        &self.q
    }

    pub fn boundary_data(&self) -> &BoundaryData {
        &self.boundary_data
    }

    pub fn boundary_quadrature(&self) -> &BoundaryQuadrature {
        &self.bq
    }

    pub fn constraint(&self) -> &SparseMatrix {
        &self.constraint
    }

    pub fn initial_position(&self) -> &SplineField {
        &self.x0
    }

    pub fn options(&self) -> &FlowOptions {
        &self.options
    }

    /// Report of the nonlinear Ritz initialization.
    pub fn ritz_outcome(&self) -> Option<&RitzOutcome> {
        self.ritz.as_ref()
    }

    /// `‖S ν‖_∞`.
    pub fn constraint_residual(&self, nu: &SplineField) -> f64 {
        self.constraint
            .mul_vec(nu.coeffs())
            .iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Area and the largest `|κ_h|` over the assembly quadrature points.
    pub fn surface_stats(&self, state: &FlowState) -> Result<(f64, f64)> {
        let mesh = &self.mesh;
        let mut area = 0.0;
        let mut kmax: f64 = 0.0;
        let mut lb = LocalBasis::default();
        for e in 0..mesh.num_elements() {
            let dofs = mesh.element_dofs(e);
            for qp in 0..mesh.qp_per_element() {
                mesh.fill_local(e, qp, &mut lb);
                let (_, jac) = state.x.local3(&dofs, &lb);
                let g = crate::geometry::GeometrySample::from_jacobian(lb.point, jac)?;
                area += g.area_element * lb.weight;
                kmax = kmax.max(state.kappa.local(0, &dofs, &lb).0.abs());
            }
        }
        Ok((area, kmax))
    }

    pub fn diagnostics(&self, state: &FlowState, residuals: Vec<f64>, wallclock: f64) -> Result<StepDiagnostics> {
        let (area, max_abs_kappa) = self.surface_stats(state)?;
        Ok(StepDiagnostics {
            time: state.time,
            area,
            max_abs_kappa,
            constraint_residual: self.constraint_residual(&state.nu),
            linear_solver_residuals: residuals,
            wallclock,
        })
    }

    /// Assembles the step system on the surface `x` with loads at `(κ, ν)`.
    pub fn assemble(&self, x: &SplineField, kappa: &SplineField, nu: &SplineField) -> Result<AssembledSystem> {
        AssembledSystem::assemble(
            &self.mesh,
            &self.bq,
            x,
            kappa,
            nu,
            Some((&self.constraint, &self.boundary_mass)),
            self.options.normal_scaling,
        )
    }

    /// Advances the scheme by one step of size `dt`; the history must hold
    /// `order` states.
    pub fn step(&self, scheme: &BdfScheme, dt: f64) -> Result<(FlowState, StepDiagnostics)> {
        let start = Instant::now();
        if !scheme.is_ready() {
            return Err(FlowError::SolverFailure(format!(
                "BDF{} needs {} previous states, have {}",
                scheme.order,
                scheme.order,
                scheme.history.len()
            )));
        }
        let hist: Vec<&FlowState> = scheme.history.iter().collect();
        let (delta, gamma) = (&scheme.delta, &scheme.gamma);
        let n = self.space.dim();

        let x_ext = FlowState::linear_combination(gamma, &hist, |s| &s.x);
        let nu_ext = FlowState::linear_combination(gamma, &hist, |s| &s.nu);
        let kappa_ext = FlowState::linear_combination(gamma, &hist, |s| &s.kappa);
        let sys = self.assemble(&x_ext, &kappa_ext, &nu_ext)?;

        // Both solves are for the correction to the extrapolated state. The
        // defects are formed without cancellation of the large mass terms,
        // so stationary solutions stay stationary to round-off.
        let inv_dt = 1.0 / dt;
        let tol = self.options.solver_tolerance;
        let with_ext = |ext: &SplineField, pick: fn(&FlowState) -> &SplineField| {
            let past = FlowState::linear_combination(&delta[1..], &hist, pick);
            let d: Vec<f64> = ext
                .coeffs()
                .iter()
                .zip(past.coeffs())
                .map(|(e, p)| delta[0] * e + p)
                .collect();
            (past, d)
        };

        let (past_kappa, dk) = with_ext(&kappa_ext, |s| &s.kappa);
        let kappa_ext_int = kappa_ext.interior_coeffs();
        let interior = self.space.interior_indices();
        let dk: Vec<f64> = interior.iter().map(|&i| dk[i]).collect();
        let mk = sys.mass_zero_trace.mul_vec(&dk);
        let ak = sys.stiffness_zero_trace.mul_vec(&kappa_ext_int);
        let defect_k: Vec<f64> = (0..interior.len())
            .map(|i| sys.load_f1[i] - inv_dt * mk[i] - ak[i])
            .collect();
        let mp = sys.mass_zero_trace.mul_vec(&past_kappa.interior_coeffs());
        let scale_k = norm2(sys.load_f1.iter().zip(&mp).map(|(f, m)| f - inv_dt * m));
        let k_mat = SparseMatrix::linear_combination(delta[0] * inv_dt, &sys.mass_zero_trace, 1.0, &sys.stiffness_zero_trace);
        let (dkappa, res_k) = linalg::Factorization::new(&k_mat)?.solve_scaled(&defect_k, scale_k, tol)?;
        let kappa_int: Vec<f64> = kappa_ext_int.iter().zip(&dkappa).map(|(e, d)| e + d).collect();
        let kappa = SplineField::from_interior(self.space.clone(), &kappa_int);

        let (past_nu, dn) = with_ext(&nu_ext, |s| &s.nu);
        let m3 = sys.mass_full.block_diag3();
        let a3 = sys.stiffness_full.block_diag3();
        let mn = m3.mul_vec(&dn);
        let an = a3.mul_vec(nu_ext.coeffs());
        let m_rows = sys.constraint_s.rows();
        let last_multiplier = match hist[0].multiplier.len() == m_rows {
            true => hist[0].multiplier.clone(),
            false => vec![0.0; m_rows],
        };
        let st_lambda = sys.constraint_s.transpose().mul_vec(&last_multiplier);
        let defect_n: Vec<f64> = (0..3 * n)
            .map(|i| sys.load_f2[i] + sys.load_fb[i] - inv_dt * mn[i] - an[i] - st_lambda[i])
            .collect();
        let defect_s: Vec<f64> = sys.constraint_s.mul_vec(nu_ext.coeffs()).iter().map(|v| -v).collect();
        let mp = m3.mul_vec(past_nu.coeffs());
        let scale_n = norm2((0..3 * n).map(|i| sys.load_f2[i] + sys.load_fb[i] - inv_dt * mp[i]));
        let n_block = SparseMatrix::linear_combination(delta[0] * inv_dt, &sys.mass_full, 1.0, &sys.stiffness_full);
        let (dnu, dmult, res_n) = SaddleSolver::new(&n_block.block_diag3(), &sys.constraint_s)?
            .solve_scaled(&defect_n, &defect_s, scale_n, tol)?;
        let nu_coeffs: Vec<f64> = nu_ext.coeffs().iter().zip(&dnu).map(|(e, d)| e + d).collect();
        let multiplier: Vec<f64> = last_multiplier.iter().zip(&dmult).map(|(e, d)| e + d).collect();
        let nu = SplineField::new(self.space.clone(), 3, nu_coeffs)?;

        let v = project_velocity(&self.q, &kappa, &nu, self.options.normal_scaling)?;

        let past_x = FlowState::linear_combination(&delta[1..], &hist, |s| &s.x);
        let mut x_coeffs: Vec<f64> = v
            .coeffs()
            .iter()
            .zip(past_x.coeffs())
            .map(|(v, px)| (dt * v - px) / delta[0])
            .collect();
        let x0 = self.x0.coeffs();
        for &j in self.space.boundary_indices() {
            for c in 0..3 {
                x_coeffs[c * n + j] = x0[c * n + j];
            }
        }
        let state = FlowState {
            time: hist[0].time + dt,
            x: SplineField::new(self.space.clone(), 3, x_coeffs)?,
            kappa,
            nu,
            v,
            multiplier,
        };
        let diag = self.diagnostics(&state, vec![res_k, res_n], start.elapsed().as_secs_f64())?;
        Ok((state, diag))
    }

    /// Runs to `t_final` with BDF of the given order, starting with one
    /// BDF1 step when `order = 2`. `observer` sees every state with its
    /// diagnostics, including the initial one.
    pub fn run(
        &self,
        initial: FlowState,
        order: usize,
        dt: f64,
        t_final: f64,
        mut observer: impl FnMut(usize, &FlowState, &StepDiagnostics) -> Result<()>,
    ) -> RunOutcome {
        let steps = match step_count(dt, t_final) {
            Ok(k) => k,
            Err(e) => return RunOutcome::failed(initial, Vec::new(), e),
        };
        let mut diagnostics = Vec::with_capacity(steps + 1);
        match self.diagnostics(&initial, Vec::new(), 0.0) {
            Ok(d) => {
                if let Err(e) = observer(0, &initial, &d) {
                    return RunOutcome::failed(initial, vec![d], e);
                }
                diagnostics.push(d);
            }
            Err(e) => return RunOutcome::failed(initial, diagnostics, e),
        }
        let (mut startup, mut main) = match (BdfScheme::new(1), BdfScheme::new(order)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return RunOutcome::failed(initial, diagnostics, e),
        };
        startup.push(initial.clone());
        main.push(initial.clone());
        let mut last = initial;
        for k in 1..=steps {
            let scheme = if main.is_ready() { &main } else { &startup };
            let (mut state, diag) = match self.step(scheme, dt) {
                Ok(r) => r,
                Err(e) => return RunOutcome::failed(last, diagnostics, e),
            };
            // Times are set from the step index to avoid drift.
            state.time = k as f64 * dt;
            let diag = StepDiagnostics {
                time: state.time,
                ..diag
            };
            if let Err(e) = observer(k, &state, &diag) {
                return RunOutcome::failed(state, diagnostics, e);
            }
            diagnostics.push(diag);
            startup.push(state.clone());
            main.push(state.clone());
            last = state;
        }
        RunOutcome {
            final_state: last,
            diagnostics,
            failure: None,
        }
    }
}

fn norm2(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// Number of uniform steps `K` with `K dt = t_final`.
pub fn step_count(dt: f64, t_final: f64) -> Result<usize> {
    if !(dt > 0.0) || !(t_final >= 0.0) {
        return Err(FlowError::Config(format!("need dt > 0 and t_final >= 0, got {dt}, {t_final}")));
    }
    let k = (t_final / dt).round();
    if (k * dt - t_final).abs() > 1e-9 * t_final.max(dt) {
        return Err(FlowError::Config(format!("t_final {t_final} is not a multiple of dt {dt}")));
    }
    Ok(k as usize)
}

/// Trajectory of a run. On failure the last good state is kept.
#[derive(Debug)]
pub struct RunOutcome {
    pub final_state: FlowState,
    pub diagnostics: Vec<StepDiagnostics>,
    pub failure: Option<FlowError>,
}

impl RunOutcome {
    fn failed(state: FlowState, diagnostics: Vec<StepDiagnostics>, e: FlowError) -> Self {
        RunOutcome {
            final_state: state,
            diagnostics,
            failure: Some(e),
        }
    }

    pub fn into_result(self) -> Result<(FlowState, Vec<StepDiagnostics>)> {
        match self.failure {
            Some(e) => Err(e),
            None => Ok((self.final_state, self.diagnostics)),
        }
    }
}
