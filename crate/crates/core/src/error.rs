use thiserror::Error;

/// Spring path identifier used when reporting singular stiffness matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpringPath {
    Position,
    Spiral,
    Joint,
}

impl std::fmt::Display for SpringPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpringPath::Position => write!(f, "position (P)"),
            SpringPath::Spiral => write!(f, "spiral (S)"),
            SpringPath::Joint => write!(f, "joint (J)"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("singular stiffness matrix in the {path} path: {message}")]
    Singular { path: SpringPath, message: String },

    #[error(
        "infeasible stiffness target{}: eigenvalue {eigenvalue:.6e} violates bound {bound:.6e}",
        q_s.map(|q| format!(" at q_s = {q:.6} rad")).unwrap_or_default()
    )]
    InfeasibleTarget {
        eigenvalue: f64,
        bound: f64,
        q_s: Option<f64>,
    },

    #[error("stiffness target does not match the coupled 2-DoF structure (residual {residual:.3e})")]
    Structure { residual: f64 },

    #[error("invalid sample grid: {0}")]
    Grid(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("fixed point failed to converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("integration unstable (energy grew by {growth:.3e}); reduce the time step")]
    StepSize { growth: f64 },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown configuration key(s): {}", keys.join(", "))]
    UnknownKey { keys: Vec<String> },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse error category, used by the CLI to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad configuration or input file (exit 2).
    Config,
    /// Stiffness target outside the feasible range (exit 3).
    Infeasible,
    /// Numerical or convergence failure (exit 4).
    Numerical,
    /// Filesystem failure (exit 5).
    Io,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Validation { .. }
            | Error::Shape(_)
            | Error::Parse { .. }
            | Error::UnknownKey { .. } => ErrorCategory::Config,
            Error::InfeasibleTarget { .. } | Error::Structure { .. } => ErrorCategory::Infeasible,
            Error::Singular { .. }
            | Error::Grid(_)
            | Error::State(_)
            | Error::Domain(_)
            | Error::Numerical(_)
            | Error::Convergence { .. }
            | Error::StepSize { .. } => ErrorCategory::Numerical,
            Error::Io { .. } => ErrorCategory::Io,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
