use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("matrix is not hyperbolic: eigenvalue real part {gap:.3e} within {tol:.3e} of the imaginary axis")]
    Hyperbolicity { gap: f64, tol: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("convergence error: {0}")]
    Convergence(String),

    #[error("inconsistent kernel: {0}")]
    InconsistentKernel(String),

    #[error("path endpoint at {at} is singular (gap {gap:.3e})")]
    EndpointSingular { at: f64, gap: f64 },

    #[error("partition refinement exceeded {segments} segments")]
    Partition { segments: usize },

    #[error("crossings at {first} and {second} are not separated; refine the grid")]
    ClusteredCrossing { first: f64, second: f64 },

    #[error("crossing at {at} is degenerate ({zero_count} null directions of the crossing form)")]
    DegenerateCrossing { at: f64, zero_count: usize },

    #[error("no non-degenerate base point found: {0}")]
    BasePoint(String),

    #[error("certificate unavailable: hypothesis ({hypothesis}) fails: {detail}")]
    CertificateUnavailable { hypothesis: String, detail: String },
}

impl Error {
    /// Stable identifier used in reports and exit messages.
    pub fn name(&self) -> &'static str {
        match self {
            Error::Validation(_) => "ValidationError",
            Error::Hyperbolicity { .. } => "HyperbolicityError",
            Error::Numerical(_) => "NumericalError",
            Error::Convergence(_) => "ConvergenceError",
            Error::InconsistentKernel(_) => "InconsistentKernelError",
            Error::EndpointSingular { .. } => "EndpointSingularError",
            Error::Partition { .. } => "PartitionError",
            Error::ClusteredCrossing { .. } => "ClusteredCrossingError",
            Error::DegenerateCrossing { .. } => "DegenerateCrossingError",
            Error::BasePoint(_) => "BasePointError",
            Error::CertificateUnavailable { .. } => "CertificateUnavailable",
        }
    }
}

pub(crate) fn validation<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
