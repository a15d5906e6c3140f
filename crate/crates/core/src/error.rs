use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite values in {0}")]
    NonFinite(String),

    #[error("field must have zero mean, found mean {mean:e}")]
    NonZeroMean { mean: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("negative density {value:e} at cell ({i}, {j})")]
    NegativeDensity { i: usize, j: usize, value: f64 },

    #[error("{solver} did not converge: relative residual {residual:e} after {iterations} iterations")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("degenerate vector-field family: I = {value:e} at ({x:.4}, {y:.4})")]
    Degenerate { value: f64, x: f64, y: f64 },

    #[error("marker {index} left the admissible region at ({x:.4}, {y:.4})")]
    MarkerEscaped { index: usize, x: f64, y: f64 },

    #[error("patch geometry: {0}")]
    Geometry(String),

    #[error("not enough samples: need {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("constants file: {0}")]
    Constants(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
