use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value in state at cell {cell}")]
    NonFinite { cell: usize },

    #[error("time {t} outside [{lo}, {hi}]")]
    TimeOutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("time {0} is not a knot of the Brownian path")]
    NotOnPathGrid(f64),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("{0} has no closed-form solution")]
    NoClosedForm(String),

    #[error("ensemble too small: {got} members, need at least {need}")]
    EnsembleTooSmall { got: usize, need: usize },

    #[error("degenerate fit input: {0}")]
    DegenerateFit(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
