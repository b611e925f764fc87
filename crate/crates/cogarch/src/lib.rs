//! Simulation, moment structure, and estimation of COGARCH(p,q) volatility
//! models driven by symmetric pure-jump Levy processes.
//!
//! The observed log-price `G`, instantaneous variance `V`, and latent state
//! `Y` (dimension `q`) follow
//!
//! ```text
//! dG_t = sqrt(V_t) dL_t
//! V_t  = a0 + a' Y_{t-}
//! dY_t = A Y_{t-} dt + e (a0 + a' Y_{t-}) d[L,L]_t
//! ```
//!
//! where `A` is the q x q companion matrix of the autoregressive coefficients
//! `b`, `e` is the last unit vector, and `[L,L]` is the discrete quadratic
//! variation of the driving Levy process.
//!
//! The crate is organised around the pipeline of a typical study:
//!
//! * [`model`] — specification, companion matrices, stationarity /
//!   nonnegativity / moment-existence diagnostics;
//! * [`levy`] — compound-Poisson and variance-gamma drivers: sampling,
//!   Levy-measure moments, increment likelihoods, maximum likelihood;
//! * [`moments`] — matrix exponentials, Lyapunov integrals, and the
//!   second-order structure (variance / autocovariance / autocorrelation)
//!   of lagged squared returns;
//! * [`simulate`] — Euler, mixed (exact state solution), and exact
//!   compound-Poisson path generation on an equally spaced grid;
//! * [`estimate`] — ACF-matching GMM (L1 / L2 / continuously-updated),
//!   asymptotic covariance, noise recovery, and the Levy MLE hand-off;
//! * [`report`] — machine-readable JSON/CSV reports used by the CLI.
//!
//! All public operations are pure functions of their inputs plus explicit
//! seeds; identical seeds give identical results on one platform.

pub mod estimate;
pub mod levy;
pub mod linalg;
pub mod model;
pub mod moments;
pub mod optim;
pub mod report;
pub mod simulate;

pub use estimate::{gmm, recover_noise, EmpiricalAcf, GmmFit, GmmOptions, IncrementSeries, Objective};
pub use levy::{LevyFit, LevyMoments, LevySpec};
pub use model::{CogarchSpec, CompanionMatrices, DiagnosticsReport, EigenReport, TriState};
pub use moments::AcfCurve;
pub use simulate::{SamplingGrid, Scheme, Trajectory};

use thiserror::Error;

/// Crate-wide error type; variants mirror the failure modes of the
/// individual operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Model orders violate `q >= p >= 1`.
    #[error("order error: {0}")]
    Order(String),
    /// A parameter value is out of range or inconsistent.
    #[error("invalid value: {0}")]
    Value(String),
    /// An iterative numerical routine failed to converge or overflowed.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// A precondition of the operation does not hold.
    #[error("precondition violated: {0}")]
    Precond(String),
    /// A matrix that must be inverted is numerically singular.
    #[error("singular matrix: {0}")]
    Singular(String),
    /// Parameters leave the feasible region of the moment formulas.
    #[error("infeasible parameters: {0}")]
    Feasibility(String),
    /// A matrix that must be stable has an eigenvalue with nonnegative
    /// real part.
    #[error("unstable matrix: {0}")]
    Stability(String),
    /// The operation requires a different Levy family.
    #[error("unsupported Levy family: {0}")]
    Family(String),
    /// The data do not satisfy the estimator's requirements.
    #[error("data error: {0}")]
    Data(String),
    /// An optimizer stopped before reaching its tolerance; the message
    /// carries the best point found.
    #[error("optimizer did not converge: {0}")]
    Convergence(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
