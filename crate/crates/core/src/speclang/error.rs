use thiserror::Error;

use super::ast::{Sort, Span};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("{span}: syntax error: {message}")]
    Syntax { span: Span, message: String, expected: Vec<String> },
    #[error("{span}: unterminated string literal")]
    UnterminatedString { span: Span },
    #[error("{span}: unterminated comment")]
    UnterminatedComment { span: Span },
    #[error("{span}: duplicate goal name `{name}`")]
    DuplicateGoalName { name: String, span: Span },
    #[error("{span}: `{name}` is already defined")]
    DuplicateDefinition { name: String, span: Span },
    #[error("{span}: unbound identifier `{name}`")]
    UnboundIdentifier { name: String, span: Span },
    #[error("{span}: sort mismatch: expected {expected}, found {found}")]
    SortMismatch { expected: String, found: String, span: Span },
    #[error("{span}: dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize, span: Span },
    #[error("{span}: unknown model `{name}`")]
    UnknownModel { name: String, span: Span },
    #[error("{span}: unknown dataset `{name}`")]
    UnknownDataset { name: String, span: Span },
    #[error("{span}: `{name}` expects {expected} arguments, got {found}")]
    ArityMismatch { name: String, expected: usize, found: usize, span: Span },
    #[error("predicate `{name}` is recursive")]
    RecursivePredicate { name: String },
    #[error("{span}: predicate expansion exceeded depth {limit}")]
    ExpansionDepthExceeded { limit: usize, span: Span },
    #[error("{span}: integer quantifier over `{var}` needs constant bounds `lo <= {var} < hi`")]
    UnboundedIntQuantifier { var: String, span: Span },
    #[error("{span}: index {index} out of range for vector of length {len}")]
    IndexOutOfRange { index: i64, len: usize, span: Span },
}

impl SpecError {
    pub fn sort_mismatch(expected: impl ToString, found: Sort, span: Span) -> Self {
        SpecError::SortMismatch { expected: expected.to_string(), found: found.to_string(), span }
    }
}
