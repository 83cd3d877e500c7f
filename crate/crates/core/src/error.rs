use std::fmt;

use crate::sparse::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which linear system a solver failure refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    Pressure,
    Concentration,
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemKind::Pressure => f.write_str("pressure"),
            SystemKind::Concentration => f.write_str("concentration"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mesh construction failed: {0}")]
    MeshConstruction(String),

    #[error("mesh parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    MeshParse {
        line: Option<usize>,
        message: String,
    },

    #[error(
        "viscosity {viscosity} at ({:.6}, {:.6}) left the admissible range [{}, {}]",
        point[0], point[1], range.0, range.1
    )]
    CoefficientBlowup {
        viscosity: f64,
        point: [f64; 2],
        range: (f64, f64),
    },

    #[error("{system} solve did not converge at step {step}: {report}")]
    SolverFailed {
        step: usize,
        system: SystemKind,
        report: SolveReport,
    },

    #[error("time step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
