//! The two reference initial surfaces and the calibration of their free
//! parameter against a target initial area.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use crate::analytic::InitialSurface;
use crate::error::{FlowError, Result};
use crate::geometry::surface_area;
use crate::jet::Jet;
use crate::quadrature::GaussRule;
use crate::spline::{ParametricMesh, QuasiInterpolant, TensorSplineSpace};

/// Initial area the plane amplitude is calibrated to.
pub const PLANE_TARGET_AREA: f64 = 4.0442;
/// Initial area the sphere patch extent is calibrated to.
pub const SPHERE_TARGET_AREA: f64 = 5.859;

/// Amplitude giving the target discrete area at `p = 2`, `ℓ = 1`, `N = 20`.
pub const PLANE_AMPLITUDE: f64 = 0.13429697104241256;
/// Polar angle of the edge midpoints giving the target exact area.
pub const SPHERE_POLAR_EXTENT: f64 = 1.3936441282358265;

/// Graph of `a sin(πu) sin(πv)` over the square `[-1, 1]²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbedPlane {
    pub amplitude: f64,
}

impl PerturbedPlane {
    pub fn new(amplitude: f64) -> Result<Self> {
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(FlowError::Config(format!("perturbation amplitude {amplitude} must be >= 0")));
        }
        Ok(PerturbedPlane { amplitude })
    }

    pub fn calibrated() -> Self {
        PerturbedPlane {
            amplitude: PLANE_AMPLITUDE,
        }
    }
}

impl InitialSurface for PerturbedPlane {
    fn position_jet(&self, u: f64, v: f64) -> [Jet; 3] {
        let (ju, jv) = Jet::coords(u, v);
        let z = ju.sin_pi() * jv.sin_pi() * self.amplitude;
        [ju * 2.0 - 1.0, jv * 2.0 - 1.0, z]
    }
}

/// Square patch of the unit sphere around the south pole, parameterized
/// through the stereographic projection from the north pole. The chart is
/// conformal, `X_u × X_v` points into the sphere and the mean curvature is `-2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePatch {
    /// Polar angle, seen from the patch center, of the edge midpoints.
    pub polar_extent: f64,
    half_width: f64,
}

impl SpherePatch {
    pub fn new(polar_extent: f64) -> Result<Self> {
        if !(polar_extent > 0.0 && polar_extent < FRAC_PI_2) {
            return Err(FlowError::Config(format!(
                "patch polar extent {polar_extent} must lie in (0, pi/2)"
            )));
        }
        Ok(SpherePatch {
            polar_extent,
            half_width: (0.5 * polar_extent).tan(),
        })
    }

    pub fn calibrated() -> Self {
        Self::new(SPHERE_POLAR_EXTENT).expect("stored extent is valid")
    }

    /// Half-width `c` of the square `[-c, c]²` in the stereographic plane.
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Exact area, `∫∫ 4 / (1 + x² + y²)² dx dy` over `[-c, c]²`.
    pub fn exact_area(&self) -> f64 {
        let c = self.half_width;
        let rule = GaussRule::new(12);
        let cells = 32;
        let mut area = 0.0;
        for i in 0..cells {
            for j in 0..cells {
                let (a0, a1) = (-c + 2.0 * c * i as f64 / cells as f64, -c + 2.0 * c * (i + 1) as f64 / cells as f64);
                let (b0, b1) = (-c + 2.0 * c * j as f64 / cells as f64, -c + 2.0 * c * (j + 1) as f64 / cells as f64);
                for (x, wx) in rule.mapped(a0, a1) {
                    for (y, wy) in rule.mapped(b0, b1) {
                        let d = 1.0 + x * x + y * y;
                        area += wx * wy * 4.0 / (d * d);
                    }
                }
            }
        }
        area
    }
}

impl InitialSurface for SpherePatch {
    fn position_jet(&self, u: f64, v: f64) -> [Jet; 3] {
        let (ju, jv) = Jet::coords(u, v);
        let c = self.half_width;
        let x = (ju * 2.0 - 1.0) * c;
        let y = (jv * 2.0 - 1.0) * c;
        let r2 = x * x + y * y;
        let inv = (r2 + 1.0).recip();
        [x * inv * 2.0, y * inv * 2.0, (r2 - 1.0) * inv]
    }

    fn mean_curvature_override(&self, _u: f64, _v: f64) -> Option<f64> {
        Some(-2.0)
    }
}

/// Area of `Q X_0` for the plane with amplitude `a` at the given resolution.
pub fn plane_discrete_area(amplitude: f64, degree: usize, smoothness: usize, elements: usize) -> Result<f64> {
    let space = Arc::new(TensorSplineSpace::new(degree, smoothness, elements)?);
    let q = QuasiInterpolant::new(space.clone());
    let plane = PerturbedPlane::new(amplitude)?;
    let x = q.apply(|u, v| plane.position(u, v));
    surface_area(&x, &ParametricMesh::assembly(space))
}

/// Bisection for an increasing function `f` on `[lo, hi]` with `f(lo) < target < f(hi)`.
pub fn bisect(mut lo: f64, mut hi: f64, target: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if !(flo < target && target < fhi) {
        return Err(FlowError::Config(format!(
            "target {target} not bracketed by [{flo}, {fhi}]"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Amplitude whose discrete initial area at `p = 2`, `ℓ = 1`, `N = 20` is `target`.
pub fn calibrate_plane_amplitude(target: f64) -> Result<f64> {
    bisect(0.0, 1.0, target, |a| plane_discrete_area(a, 2, 1, 20))
}

/// Polar extent whose exact patch area is `target`.
pub fn calibrate_sphere_extent(target: f64) -> Result<f64> {
    bisect(1e-3, FRAC_PI_2 - 1e-9, target, |t| Ok(SpherePatch::new(t)?.exact_area()))
}
