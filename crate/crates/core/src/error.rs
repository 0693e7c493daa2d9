use thiserror::Error;

/// Errors raised anywhere in the pipeline. Each variant names the stage
/// that failed so the command line can report it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry: {0}")]
    Geometry(String),

    #[error("mesh: {0}")]
    Mesh(String),

    #[error("mesh file line {line}: {msg}")]
    MeshParse { line: usize, msg: String },

    #[error("fem: {0}")]
    Fem(String),

    #[error("lambda0 = {lambda0} lies within {margin:e} of Neumann eigenvalue mu_{index} = {mu}")]
    NearNeumannEigenvalue {
        lambda0: f64,
        index: usize,
        mu: f64,
        margin: f64,
    },

    #[error("eigensolver did not converge: {0}")]
    Eigensolver(String),

    #[error("transverse: {0}")]
    Transverse(String),

    #[error("special function: {0}")]
    SpecialFunction(String),

    #[error("ntd: {0}")]
    Ntd(String),

    #[error("solver: {0}")]
    Solver(String),

    #[error("resonance: {0}")]
    Resonance(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
