use thiserror::Error;

use crate::linalg::SolveReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("under-resolved region: radius {radius} is below two cells (spacing {spacing})")]
    UnderResolvedRegion { radius: f64, spacing: f64 },

    #[error("wrapping ball: radius {radius} is not below half the side length {side}")]
    WrappingBall { radius: f64, side: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unknown coefficient family `{0}`")]
    UnknownFamily(String),

    #[error("invalid parameter for {family}: {message}")]
    InvalidParameter { family: String, message: String },

    #[error("ellipticity violated: minimum {observed} below declared bound {declared}")]
    EllipticityViolated { observed: f64, declared: f64 },

    #[error("unsupported coefficient field: {0}")]
    UnsupportedField(String),

    #[error("stationarity solve failed after {iterations} iterations (residual {residual:e})")]
    StationaritySolveFailed { iterations: usize, residual: f64 },

    #[error("positivity violated: invariant weight {value:e} at cell {cell}")]
    PositivityViolated { cell: usize, value: f64 },

    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),

    #[error("solver stagnated after {} iterations (relative residual {:e})", .0.iterations, .0.relative_residual)]
    SolverStagnated(SolveReport),

    #[error("source outside domain: cell {0}")]
    SourceOutsideDomain(usize),

    #[error("regions not separated: {0}")]
    RegionsNotSeparated(String),

    #[error("equilibrium positivity violated: weight {value:e} at cell {cell}")]
    EquilibriumPositivityViolated { cell: usize, value: f64 },

    #[error("kernel undefined in dimension {0}")]
    KernelUndefined(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
