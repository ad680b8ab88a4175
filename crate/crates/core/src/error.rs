use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the spline, assembly and time-stepping layers.
#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid spline space: {0}")]
    InvalidSpace(String),

    #[error("point ({0}, {1}) lies outside the unit square")]
    OutsideDomain(f64, f64),

    #[error("degenerate surface at ({u:.6}, {v:.6}): det G = {det:.3e}")]
    DegenerateSurface { u: f64, v: f64, det: f64 },

    #[error("linear solve failed: {0}")]
    SolverFailure(String),

    #[error("nonlinear Ritz iteration did not contract after {iterations} iterations (last lambda {lambda})")]
    NoContraction { iterations: usize, lambda: f64 },

    #[error("invalid BDF order {0}, expected 1 or 2")]
    InvalidBdfOrder(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("function evaluation failed: {0}")]
    Evaluation(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FlowError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FlowError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, FlowError>;
