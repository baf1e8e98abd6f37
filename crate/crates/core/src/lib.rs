//! Generalised Bayesian inference for discrete models with intractable
//! normalising constants.
//!
//! The centrepiece is a divergence between probability mass functions that
//! only ever looks at *ratios* of masses at neighbouring states, so the
//! normalising constant of the model cancels everywhere. For exponential
//! family models the induced empirical loss is exactly quadratic in the
//! natural parameter, which turns the generalised posterior update into a
//! closed-form Gaussian computation — no MCMC required for the main fit.
//!
//! Module map:
//!
//! * [`domain`] — discrete sample spaces, matching sets, connectivity checks
//! * [`pmf`] — empirical PMFs, Laplace smoothing, local conditional tables
//! * [`lrm`] — the divergence, its quadratic loss form, conjugate updates
//! * [`models`] — Conway–Maxwell–Poisson family, INGARCH time series, MRFs
//! * [`samplers`] — exact and MCMC samplers, chain diagnostics
//! * [`baselines`] — discrete Fisher divergence, pseudo-likelihood,
//!   truncated likelihood targets for comparison runs
//! * [`calibrate`] — bootstrap-coverage calibration of the loss weight β

pub mod baselines;
pub mod calibrate;
pub mod domain;
pub mod linalg;
pub mod lrm;
pub mod models;
pub mod numeric;
pub mod pmf;
pub mod samplers;

pub(crate) mod exec;

use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A domain, matching set, or model was built from inconsistent pieces.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// The requested operation needs an exhaustive enumeration that would
    /// exceed the configured state cap.
    #[error("state space too large to enumerate: {size} states exceeds cap {cap}")]
    TooLarge { size: u128, cap: u64 },

    /// A PMF violated a standing positivity/normalisation assumption.
    #[error("probability mass assumption violated: {0}")]
    BadPmf(String),

    /// Every loss term was dropped, so the loss carries no information.
    #[error("degenerate loss: every matching-set term was omitted or empty")]
    DegenerateLoss,

    /// A matrix that must be positive definite was not, even after adding
    /// diagonal jitter up to the documented ladder.
    #[error("matrix not positive definite (condition estimate {cond:.3e}): {context}")]
    NotPositiveDefinite { context: String, cond: f64 },

    /// A numerical routine left its valid input range or failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A sampler was asked to run under conditions where it cannot produce
    /// exact draws.
    #[error("sampler failure: {0}")]
    Sampler(String),

    /// Observed data are inconsistent with the operation's requirements.
    #[error("bad data: {0}")]
    BadData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
