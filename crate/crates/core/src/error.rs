use thiserror::Error;

/// Errors raised by geometry, flow and generator routines.
#[derive(Debug, Error)]
pub enum LagflowError {
    /// The induced metric or tangent frame degenerated at a grid node.
    #[error("degenerate graph at node ({i}, {j}): {detail}")]
    DegenerateGraph { i: usize, j: usize, detail: String },

    /// A NaN or infinite value appeared.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// The twist deformation field vanished (only possible next to a pole).
    #[error("twist field degenerate near pole at node {node} (|W| = {norm:e})")]
    NearPole { node: usize, norm: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("generator failure: {0}")]
    Generator(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LagflowError>;
