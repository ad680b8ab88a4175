//! Tensor-product B-spline spaces on the unit square.

mod field;
mod mesh;
mod quasi;
mod tensor;
mod trace;
mod univariate;

pub use field::SplineField;
pub use mesh::{LocalBasis, ParametricMesh};
pub use quasi::{QuasiInterpolant, UnivariateQuasi};
pub use tensor::{BasisValue, TensorSplineSpace};
pub use trace::{BoundaryTrace, TraceField};
pub use univariate::{UnivariateEval, UnivariateSpline};
