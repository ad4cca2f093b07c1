use std::path::PathBuf;

/// Errors produced anywhere in the simulation and estimation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("mesh parse error at line {line}: {message}")]
    MeshParse { line: usize, message: String },

    #[error("invalid mesh: {violation} (entity {entity})")]
    MeshInvalid {
        violation: &'static str,
        entity: usize,
    },

    #[error("meshes are not in a parent-child refinement relation")]
    NotRefinement,

    #[error("parameter out of range: {name} = {value}")]
    ParameterRange { name: &'static str, value: f64 },

    #[error("point ({x}, {y}) lies outside the domain")]
    PointOutside { x: f64, y: f64 },

    #[error("point ({x}, {y}) lies on the fracture; fracture side is ambiguous")]
    PointOnFracture { x: f64, y: f64 },

    #[error("non-finite assembly at dof {dof}")]
    NonFiniteAssembly { dof: usize },

    #[error("Newton did not converge: {iterations} iterations, residual {residual:e}")]
    NewtonFailed { iterations: usize, residual: f64 },

    #[error("BiCGStab {reason} after {iterations} iterations (relative residual {residual:e})")]
    KrylovFailed {
        reason: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("zero pivot in row {row}")]
    ZeroPivot { row: usize },

    #[error("singular matrix in direct solve (column {column})")]
    Singular { column: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("rate fit failed: {0}")]
    FitFailed(String),

    #[error("time step failed at t = {time} s after {halvings} step halvings: {source}")]
    StepFailed {
        time: f64,
        halvings: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("sampling failure budget exceeded: {failures} failed samples, budget {budget}")]
    FailureBudget { failures: usize, budget: usize },

    /// A numerical failure read back from a results log.
    #[error("logged failure: {0}")]
    Replayed(String),

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical stack (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteAssembly { .. }
                | Error::NewtonFailed { .. }
                | Error::KrylovFailed { .. }
                | Error::ZeroPivot { .. }
                | Error::Singular { .. }
                | Error::StepFailed { .. }
                | Error::FailureBudget { .. }
                | Error::FitFailed(_)
                | Error::Replayed(_)
        )
    }
}
