use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("quadrature did not converge: estimate {estimate} ueV, error bound {error_bound} ueV")]
    QuadratureNonConvergence { estimate: f64, error_bound: f64 },

    #[error("gate-time solver failed: {0}")]
    GateTimeSolver(String),

    #[error("device {device_index} failed: {source}")]
    Device {
        device_index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 1 config, 2 numerical, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) => 1,
            Error::Io(_) | Error::Serde(_) => 3,
            Error::Device { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
