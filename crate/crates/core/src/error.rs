use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure mode of the simulator.
///
/// Variants are grouped by the exit code the command-line front end maps them
/// to: configuration problems, model/physicality violations and numerical
/// convergence failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("coefficient singularity at omega = {omega} rad/s (gamma = 0 on the Raman resonance)")]
    Singular { omega: f64 },

    #[error("slab propagation did not converge at omega = {omega} rad/s after {slabs} slabs")]
    Convergence { omega: f64, slabs: usize },

    #[error("physicality violated: {0}")]
    Physicality(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("spectral coverage error: {0}")]
    Coverage(String),

    #[error("Fock cutoff too small: retained norm {norm:.3e} below 1 - 1e-8 at cutoff {cutoff}")]
    Cutoff { cutoff: usize, norm: f64 },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("bracket error: {0}")]
    Bracket(String),

    #[error("power matching error: {0}")]
    Matching(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Domain(_) => 2,
            Error::Convergence { .. } | Error::Calibration(_) | Error::Bracket(_) => 4,
            Error::Io(_) => 1,
            _ => 3,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
