use thiserror::Error;

use crate::space::Grid;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("incompatible discretizations: {0} vs {1}")]
    GridMismatch(Grid, Grid),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("basis is not orthonormal (max Gram deviation {deviation:.3e})")]
    NotOrthonormal { deviation: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("sensors {dependent:?} are linearly dependent on the preceding sensors")]
    DependentSensors { dependent: Vec<usize> },

    #[error("inf-sup constant {beta:.3e} is below {threshold:.1e}; use a smaller background or more sensors")]
    IllPosed { beta: f64, threshold: f64 },

    #[error("background dimension {n} exceeds the number of sensors {m}")]
    TooManyModes { n: usize, m: usize },

    #[error("infeasible box at coefficient {index}: [{lo}, {hi}]")]
    InfeasibleBox { index: usize, lo: f64, hi: f64 },

    #[error("subspaces are not orthogonal (max cross inner product {max_inner:.3e}); re-orthogonalize the slow space against the background first")]
    NotOrthogonal { max_inner: f64 },

    /// `location` is `line N` for config files and `--set K` for overrides.
    #[error("config {location}: {message}")]
    Config { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
