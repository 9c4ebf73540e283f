//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by model construction, designers, and solvers.
///
/// Infeasibility of a well-posed design problem is *not* an error: designer
/// entry points return it as a value. These variants cover domain violations,
/// degenerate geometry, and solver breakdowns.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An angle, range, or parameter outside its documented domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A geometric singularity (zero range, coincident points).
    #[error("singular geometry: {0}")]
    Singularity(String),

    /// Tag and user channels too close to collinear for zero-forcing.
    #[error("degenerate geometry: relative singular value {sigma_ratio:.3e} below threshold {threshold:.1e}")]
    DegenerateGeometry { sigma_ratio: f64, threshold: f64 },

    /// Sensing beam has no coupling to the tag channel.
    #[error("unreachable tag: |g^H f_s| = 0")]
    UnreachableTag,

    /// Closed-form allocation exceeded the power budget.
    #[error("power budget exceeded: required {required:.6} W > budget {budget:.6} W")]
    BudgetExceeded { required: f64, budget: f64 },

    /// The conic solver failed numerically; residuals attached for diagnosis.
    #[error("conic solver failure: {status}: primal {primal:.3e}, dual {dual:.3e}, complementarity {complementarity:.3e}")]
    SolverFailure {
        status: String,
        primal: f64,
        dual: f64,
        complementarity: f64,
    },

    /// Master problem has no optimality cut and is unbounded below.
    #[error("master problem unbounded: no optimality cut present")]
    UnboundedMaster,

    /// A grid construction produced no points.
    #[error("empty grid: {0}")]
    EmptyGrid(String),

    /// Scenario file or configuration problem.
    #[error("invalid configuration: {0}")]
    Config(String),
}
