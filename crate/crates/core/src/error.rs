use thiserror::Error;

use crate::numgrid::Axis;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("point outside the grid: {axis} = {coordinate}")]
    OutOfDomain { axis: Axis, coordinate: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eigensolver did not converge at clock index {index}: {reason}")]
    EigenNonConvergence { index: usize, reason: String },

    #[error("degenerate state: {0}")]
    DegenerateState(String),

    #[error("norm drifted to {norm} at t = {t}")]
    NormDrift { norm: f64, t: f64 },

    #[error("empty field: {0}")]
    EmptyField(String),

    #[error("malformed container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
