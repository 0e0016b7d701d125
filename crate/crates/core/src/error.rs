use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian (max |A - A^dagger| = {residual:e})")]
    NotHermitian { residual: f64 },
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("operator is not positive (min eigenvalue {min_eigenvalue:e})")]
    NotPositive { min_eigenvalue: f64 },
    #[error("projectors do not sum to identity (residual {residual:e})")]
    NotComplete { residual: f64 },
    #[error("projectors {i} and {j} are not orthogonal (residual {residual:e})")]
    NotOrthogonal { i: usize, j: usize, residual: f64 },
    #[error("matrix is not a projector (residual {residual:e})")]
    NotProjector { residual: f64 },
    #[error("matrix is not unitary (residual {residual:e})")]
    NotUnitary { residual: f64 },
    #[error("state is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },
    #[error("probabilities sum to {sum}, expected 1")]
    ProbabilityNotNormalized { sum: f64 },
    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),
    #[error("non-finite entry encountered")]
    NonFinite,
    #[error("index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid meter grid: {0}")]
    InvalidGrid(String),
    #[error("meter displacement {shift} pushes support off the grid")]
    ShiftOutOfGrid { shift: f64 },
    #[error("pre- and post-selected states are orthogonal (|overlap| = {overlap:e})")]
    OrthogonalSelection { overlap: f64 },
    #[error("invalid probability: {0}")]
    InvalidProbability(String),
    #[error("no trial survived post-selection")]
    NoPostSelectedSamples,
    #[error("Kraus operators are incomplete (residual {residual:e})")]
    IncompleteKrausSet { residual: f64 },
    #[error("integration step too large at t = {time}: {reason}")]
    StepTooLarge { time: f64, reason: String },
    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),
    #[error("unknown experiment '{0}'")]
    UnknownExperiment(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
