use thiserror::Error;

/// Errors produced by basis construction, operator assembly and the solver stack.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("site {0:?} lies outside the region")]
    SiteOutsideRegion(Vec<i64>),
    #[error("subset contains sites outside the region")]
    SubsetOutsideRegion,
    #[error("no lattice path connects the requested sites")]
    Unreachable,
    #[error("region has no sites")]
    EmptyRegion,
    #[error("oscillator sum did not converge below the tail target within {max_terms} terms")]
    TruncationNotConverged { max_terms: usize },
    #[error("basis would contain {count} states, above the configured cap {cap}")]
    BasisTooLarge { count: usize, cap: usize },
    #[error("walk metric limited to 12 waypoints, got {0}")]
    TooManyWaypoints(usize),
    #[error("selector is incompatible with the enumeration: {0}")]
    SelectorMismatch(String),
    #[error("dimension {dim} exceeds the dense solver limit {limit}")]
    DimensionTooLarge { dim: usize, limit: usize },
    #[error("shift z = {re}+{im}i sits on the spectrum; no resolvent")]
    SingularShift { re: f64, im: f64 },
    #[error("linear solve residual {residual:.3e} above tolerance {tol:.3e}")]
    SolveNotConverged { residual: f64, tol: f64 },
    #[error("spectral gap violated: {0}")]
    GapViolated(String),
    #[error("decay fit needs at least {needed} distinct distances, got {got}")]
    InsufficientDistances { needed: usize, got: usize },
    #[error("decay fit requires positive means; pair at distance {distance} has mean {mean:.3e}")]
    NonpositiveMean { distance: f64, mean: f64 },
    #[error("eigendecomposition failed to converge")]
    EigenFailed,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
