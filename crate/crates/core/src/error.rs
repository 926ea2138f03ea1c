use thiserror::Error;

/// Errors produced by the grids, solvers and experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unstable stratification: rho_s/rho_b = {0} (need 0 < rho_s < rho_b)")]
    UnstableStratification(f64),

    #[error("state point is not in the hyperbolic regime (regime {regime}, margin {margin})")]
    NotHyperbolic { regime: String, margin: f64 },

    #[error("no admissible symmetrizer shift: {0}")]
    NoAdmissibleShift(String),

    #[error("depth positivity violated at t = {t}: min depth {min_depth}")]
    DepthPositivity { t: f64, min_depth: f64 },

    #[error("time step {dt} exceeds the stability limit {limit}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("non-finite state at t = {t}")]
    BlowUp { t: f64 },

    #[error("level grid has no cell edge at r = {0}")]
    MissingInterfaceEdge(f64),

    #[error("time {t} outside the reference horizon [{start}, {end}]")]
    OutsideHorizon { t: f64, start: f64, end: f64 },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
