use thiserror::Error;

/// Errors raised anywhere in the exploration pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("row `{0}` has no nonzero coefficient")]
    EmptyRow(String),
    #[error("variable `{name}` has lower bound {lower} above upper bound {upper}")]
    InvertedBounds { name: String, lower: f64, upper: f64 },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid exploration spec: {0}")]
    InvalidSpec(String),
    #[error("exploratory direction `{0}` is unbounded and the cost cut is disabled")]
    UnboundedDirection(String),
    #[error("optimal value {v_star} is not positive; an absolute slack is required")]
    DegenerateBudget { v_star: f64 },

    #[error("solver backend `{0}` is not available")]
    SolverUnavailable(String),
    #[error("solver numerical failure: {0}")]
    NumericalFailure(String),
    #[error("model is infeasible")]
    Infeasible,
    #[error("model is unbounded")]
    Unbounded,
    #[error("time limit reached before an incumbent was found")]
    TimeLimitNoIncumbent,

    #[error("point is not near-optimal (distance {distance:e})")]
    NotNearOptimal { distance: f64 },
    #[error("cut excludes stored inner point {index} by {violation:e}")]
    InvalidCut { index: usize, violation: f64 },
    #[error("halfspace normal is zero")]
    ZeroNormal,
    #[error("region is empty")]
    EmptyRegion,
    #[error("region is unbounded")]
    UnboundedRegion,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("outer region has zero volume")]
    ZeroVolume,
    #[error("exact volume supports dimensions 2 and 3, got {0}")]
    UnsupportedDimension(usize),
    #[error("hull is degenerate (affine dimension {rank} < {dim}); enable affine-span sampling")]
    DegenerateHull { rank: usize, dim: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures that originate in the solver rather than in the inputs.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::SolverUnavailable(_)
                | Error::NumericalFailure(_)
                | Error::TimeLimitNoIncumbent
                | Error::InvalidCut { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
