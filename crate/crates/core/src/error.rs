use thiserror::Error;

/// Errors raised by the discretization, the solvers and the optimizer.
#[derive(Debug, Error)]
pub enum SlipError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error(
        "incompatible normal flux: boundary integral of a is {integral:.3e} (tolerance {tolerance:.1e}); injection and suction must balance"
    )]
    IncompatibleFlux { integral: f64, tolerance: f64 },

    #[error("linear solver failed: {0}")]
    SolverDivergence(String),

    #[error("base trajectory missing or incomplete")]
    BaseTrajectoryMissing,

    #[error("trajectories do not share the same base state ({left} vs {right})")]
    TrajectoryMismatch { left: String, right: String },

    #[error("time step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<SlipError>,
    },

    #[error("time slice {slice}: {source}")]
    AtSlice {
        slice: usize,
        #[source]
        source: Box<SlipError>,
    },

    #[error("line search failed after {backtracks} backtracks at iteration {iteration}")]
    LineSearchFailure { iteration: usize, backtracks: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed data: {0}")]
    Format(String),
}

impl SlipError {
    pub fn at_step(step: usize, source: SlipError) -> Self {
        SlipError::AtStep {
            step,
            source: Box::new(source),
        }
    }

    pub fn at_slice(slice: usize, source: SlipError) -> Self {
        SlipError::AtSlice {
            slice,
            source: Box::new(source),
        }
    }

    /// Innermost error, with step/slice wrappers stripped.
    pub fn root(&self) -> &SlipError {
        match self {
            SlipError::AtStep { source, .. } | SlipError::AtSlice { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<serde_json::Error> for SlipError {
    fn from(err: serde_json::Error) -> Self {
        SlipError::Format(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SlipError>;
