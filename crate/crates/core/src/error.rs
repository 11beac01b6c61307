use thiserror::Error;

/// Errors raised by the geometry, flow and verification layers.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("degenerate complex dimension n = {n}: {reason}")]
    Degenerate { n: usize, reason: String },

    #[error("degree error: {0}")]
    Degree(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("metric is not positive definite at node {node} (coords {coords:?}): smallest eigenvalue {min_eigenvalue:e}")]
    Positivity {
        node: usize,
        coords: Vec<f64>,
        min_eigenvalue: f64,
    },

    #[error("singular pointwise system at node {node} (coords {coords:?}), condition estimate {condition:e}")]
    SingularSystem {
        node: usize,
        coords: Vec<f64>,
        condition: f64,
    },

    #[error("valence of length {valence} declared for a rank-{rank} tensor")]
    Valence { rank: usize, valence: usize },

    #[error("source error: {0}")]
    Source(String),

    #[error("not conformally balanced: defect {defect:e} exceeds {tolerance:e}")]
    NotBalanced { defect: f64, tolerance: f64 },

    #[error("trajectory error: {0}")]
    Trajectory(String),

    #[error("snapshot i/o error at byte offset {offset}: {message}")]
    Snapshot { offset: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
