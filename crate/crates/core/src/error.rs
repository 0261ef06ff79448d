use thiserror::Error;

/// Errors raised by the simulator and the analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// The analysis basis is not linear, so the branch operator is not unitary
    /// and cannot be undone by an rf pulse.
    #[error("unsupported correction: {0}")]
    UnsupportedCorrection(String),

    #[error("unknown sequence `{name}` (known: {known})")]
    UnknownSequence { name: String, known: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Tomography settings without any record.
    #[error("incomplete tomography data: no records for settings {missing:?}")]
    IncompleteData { missing: Vec<usize> },

    #[error("underdetermined fit: {bins} usable bins for {params} parameters")]
    Underdetermined { bins: usize, params: usize },

    #[error(
        "CPTP projection did not converge after {iterations} iterations \
         (trace-preservation residual {tp_residual:.3e}, min eigenvalue {min_eigenvalue:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        tp_residual: f64,
        min_eigenvalue: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
