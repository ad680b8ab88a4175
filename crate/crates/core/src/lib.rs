//! Isogeometric mean curvature flow for spline surfaces with a fixed boundary.
//!
//! The surface, its mean curvature and a discrete normal field are tensor
//! B-splines on the unit square. Curvature and normal evolve by their own
//! parabolic equations; the normal is kept weakly orthogonal to the fixed
//! boundary tangent through a Lagrange multiplier. Time stepping is
//! linearly implicit BDF.

pub mod analytic;
pub mod assembly;
pub mod config;
pub mod convergence;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod io;
pub mod jet;
pub mod linalg;
pub mod projections;
pub mod quadrature;
pub mod scenarios;
pub mod spline;

pub use error::{FlowError, Result};
