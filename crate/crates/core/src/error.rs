use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("expected {expected} entries, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("cannot normalize a zero vector")]
    ZeroNorm,

    #[error("reflectivity {0} outside [0, 1]")]
    InvalidReflectivity(f64),

    #[error("beam splitter needs two distinct modes, got ({0}, {0})")]
    ModeCollision(usize),

    #[error("mode {mode} out of range for {n_modes} modes")]
    ModeOutOfRange { mode: usize, n_modes: usize },

    #[error("{what} must be at least {min}, got {got}")]
    TooSmall {
        what: &'static str,
        min: usize,
        got: usize,
    },

    #[error("matrix is not unitary (max deviation {deviation:e} > tol {tol:e})")]
    NotUnitary { deviation: f64, tol: f64 },

    #[error("observable is not dichotomic: {0}")]
    NotDichotomic(String),

    #[error("expectation value has imaginary part {0:e}; observable is not Hermitian")]
    ComplexExpectation(f64),

    #[error("postselection empty: no outcome passes the coincidence rule")]
    PostselectionEmpty,

    #[error("target {0} outside the admissible range [0, 4]")]
    InvalidTarget(f64),

    #[error("coincidence window {window} must be positive and shorter than the delay {delta_t}")]
    InvalidPumpConfig { delta_t: f64, window: f64 },

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
