use crate::schemes::DescentTrace;

/// Errors produced by the rating kernels.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A constructor, loader, or precondition check rejected its input.
    /// `field` names the offending quantity.
    #[error("invalid {field}: {message}")]
    InvalidInput { field: &'static str, message: String },

    /// The stationary solve for one (class, quadrature-node) pair failed to
    /// reach the residual tolerance even after the power-iteration fallback.
    /// `class` is the 1-based risk class, `node` the 0-based node index.
    #[error(
        "stationary distribution did not converge for class {class}, \
         quadrature node {node} (residual {residual:.3e})"
    )]
    StationarySolve {
        class: usize,
        node: usize,
        residual: f64,
    },

    /// A BM level carries no stationary probability mass across the whole
    /// portfolio, so a shared relativity at that level is undetermined.
    /// Usually a sign of a mis-specified transition rule.
    #[error("BM level {level} is unreachable (zero stationary mass)")]
    UnreachableLevel { level: usize },

    /// Same as [`Error::UnreachableLevel`] but for a single risk class in an
    /// individualized table. Both indices are 1-based.
    #[error("BM level {level} is unreachable for risk class {class}")]
    UnreachableClassLevel { class: usize, level: usize },

    /// Coordinate descent hit the cycle cap before the objective stabilized.
    /// The partial trace is carried for diagnostics.
    #[error("coordinate descent did not converge within {cycles} cycles")]
    DescentDidNotConverge {
        cycles: usize,
        trace: Box<DescentTrace>,
    },
}

impl Error {
    pub(crate) fn invalid(field: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidInput {
            field,
            message: message.into(),
        }
    }

    /// True for failures of the numeric machinery (as opposed to rejected
    /// input). Front ends use this to pick an exit code.
    pub fn is_numeric(&self) -> bool {
        !matches!(self, Error::InvalidInput { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
