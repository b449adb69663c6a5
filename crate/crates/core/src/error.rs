use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the solver pipeline.
#[derive(Debug, Error)]
pub enum FracError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error(
        "quadrature did not converge after {depth} refinements (last estimate {last:e}, previous {previous:e})"
    )]
    Convergence {
        last: f64,
        previous: f64,
        depth: usize,
    },

    #[error("operator expects {expected}-sided terms, found a term anchored at {anchor} on the other side")]
    Sidedness { expected: &'static str, anchor: f64 },

    #[error("result leaves the truncated-power class: exponent {exponent} is not > -1")]
    Representability { exponent: f64 },

    #[error("function is not evaluable: {0}")]
    Evaluability(String),

    #[error("evaluation at x = {x} hits a singular term anchored there")]
    Singularity { x: f64 },

    #[error("product is not integrable: combined exponent {exponent} at x = {at}")]
    Integrability { exponent: f64, at: f64 },

    #[error(
        "matrix is numerically singular: pivot {pivot:e} in row {row} against row scale {scale:e}"
    )]
    NearSingular { pivot: f64, row: usize, scale: f64 },

    #[error("solve residual {residual:e} exceeds the bound {bound:e}")]
    Residual { residual: f64, bound: f64 },

    #[error("convergence rate undefined: {0}")]
    RateUndefined(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, FracError>;
