use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("degenerate geometry: {0}")]
    Geometry(String),
    #[error("surface degeneracy: {0}")]
    SurfaceDegeneracy(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("solver error in {block}: {msg}")]
    Solver { block: String, msg: String },
    #[error("ambiguous trace: {0}")]
    AmbiguousTrace(String),
    #[error("finite-difference geometry: {0}")]
    FdGeometry(String),
    #[error("Marussi condition violated: {0}")]
    Marussi(String),
    #[error("state error: {0}")]
    State(String),
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
