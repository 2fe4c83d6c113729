use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("variable x{index} at byte {offset} out of range for dimension {dim}")]
    VariableOutOfRange {
        offset: usize,
        index: usize,
        dim: usize,
    },
    #[error("domain error at node #{node} ({op}): {message}")]
    Domain {
        node: usize,
        op: &'static str,
        message: String,
    },
    #[error("non-finite value in layer {layer}")]
    NonFinite { layer: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite loss at iteration {iter}")]
    NonFiniteLoss { iter: usize },
    #[error("empty sample")]
    EmptySample,
}
