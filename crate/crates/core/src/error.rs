use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// A parameter is outside the range where the model is defined.
    Domain { what: &'static str, value: f64 },
    /// The covariance matrix violates the uncertainty principle.
    InvalidState { min_symplectic: f64 },
    /// Division by a vanishing quantity.
    Singular(&'static str),
    /// The Fock cutoff loses more norm than allowed.
    Truncation { norm_defect: f64, suggested_cutoff: usize },
    /// Conditioning on an outcome with (numerically) zero probability.
    Conditioning { probability: f64 },
    /// A statistic could not be estimated from the sample.
    Estimation(&'static str),
    /// A reconciliation block with a vanishing norm.
    DegenerateBlock { index: usize },
    /// Not enough samples for the requested workload.
    InsufficientData { required: usize, available: usize },
    /// Malformed parity-check matrix or inconsistent block layout.
    Code(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain { what, value } => write!(f, "{what} out of range: {value}"),
            Error::InvalidState { min_symplectic } => write!(
                f,
                "non-physical covariance matrix (smallest symplectic eigenvalue {min_symplectic})"
            ),
            Error::Singular(what) => write!(f, "singular input: {what}"),
            Error::Truncation { norm_defect, suggested_cutoff } => write!(
                f,
                "Fock cutoff too small (norm defect {norm_defect:e}); try cutoff {suggested_cutoff}"
            ),
            Error::Conditioning { probability } => {
                write!(f, "cannot condition on outcome with probability {probability:e}")
            }
            Error::Estimation(what) => write!(f, "estimation failed: {what}"),
            Error::DegenerateBlock { index } => write!(f, "degenerate block {index}"),
            Error::InsufficientData { required, available } => write!(
                f,
                "insufficient data: {required} samples required, {available} available"
            ),
            Error::Code(msg) => write!(f, "invalid code: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn domain(what: &'static str, value: f64) -> Error {
    Error::Domain { what, value }
}
