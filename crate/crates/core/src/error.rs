//! Error taxonomy shared by every module of the crate.

/// Failure modes surfaced by the solvers.
///
/// Numerical diagnostics are carried as `f64` snapshots of the offending
/// quantities; the working values themselves stay at configured precision.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("degenerate Floquet indices at epsilon = {epsilon}: |discriminant| ratio {disc:e}")]
    DegenerateIndices { epsilon: f64, disc: f64 },

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("index refinement stalled after {iters} iterations, last |delta nu| = {last_step:e}")]
    NonConvergence { iters: u32, last_step: f64 },

    #[error("index refinement diverged after {iters} iterations")]
    Divergence { iters: u32 },

    #[error("coefficient window exhausted: {0}")]
    WindowExhausted(String),

    #[error("series truncation exhausted: {0}")]
    TruncationExhausted(String),

    #[error("consistency check failed: {0}")]
    Inconsistency(String),

    #[error("degenerate denominator: {0}")]
    DegenerateDenominator(String),

    #[error("precision exhausted: {0}; retry with higher precision_bits")]
    PrecisionExhausted(String),

    #[error("integration failure: {0}")]
    IntegrationFailure(String),

    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),

    #[error("no sign change: {0}")]
    NoSignChange(String),

    #[error("root refinement failed: {0}")]
    RootRefinement(String),
}

pub type Result<T> = std::result::Result<T, Error>;
