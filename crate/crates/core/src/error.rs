use thiserror::Error;

/// Errors raised by the solver stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("block index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate half-space with zero normal and positive offset {offset:e} is empty")]
    EmptyHalfSpace { offset: f64 },

    #[error("no feasible candidate for the projection onto H_k ∩ W_k at k = {k}: {detail}")]
    InfeasibleProjection { k: usize, detail: String },

    #[error(
        "inner solver violated the relative-error criterion at k = {k}, block {block}: \
         lhs {lhs:e} > rhs {rhs:e}"
    )]
    ContractViolation { k: usize, block: usize, lhs: f64, rhs: f64 },

    #[error("separator gradient vanished at k = {k} with eps sum {eps_sum:e} > 0 and nonnegative value")]
    DegenerateSeparator { k: usize, eps_sum: f64 },

    #[error("operator oracle failed: {0}")]
    Oracle(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by a broken solver contract rather than bad input.
    pub fn is_contract_error(&self) -> bool {
        matches!(
            self,
            Error::ContractViolation { .. }
                | Error::InfeasibleProjection { .. }
                | Error::DegenerateSeparator { .. }
                | Error::Oracle(_)
        )
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
