//! Error type shared across the crate.

use num_complex::Complex64;
use thiserror::Error;

/// Everything that can go wrong while building states, generators, solvers
/// or running the scenario pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("not Hermitian: max |A - A\u{2020}| entry {deviation:.3e} exceeds {tol:.1e}")]
    NotHermitian { deviation: f64, tol: f64 },

    #[error("invalid state{}: {reason}", field_label(field))]
    InvalidState {
        field: Option<String>,
        reason: String,
    },

    #[error("invalid factor set {keep:?} for {n_factors} tensor factors")]
    InvalidFactorSet { keep: Vec<usize>, n_factors: usize },

    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    #[error("step too large: |generator|*h = {product:.3e} exceeds the 0.1 stability guard (h = {h:.3e})")]
    StepTooLarge { h: f64, product: f64 },

    #[error("state invariant violated at step {step}: {reason}")]
    StateInvariantViolated { step: usize, reason: String },

    #[error("implicit quadrature step singular (endpoint weight gamma*tau/2 = {weight:.3e}); reduce tau")]
    SingularImplicitStep { weight: f64 },

    #[error("series truncation not converged at grid index {index}: last-term norm {last:.3e} > 1e-6 * |Lambda| = {bound:.3e}; raise k_max")]
    TruncationNotConverged { index: usize, last: f64, bound: f64 },

    #[error("chain of {n} ancillas exceeds n_max = {n_max}")]
    ChainTooLarge { n: usize, n_max: usize },

    #[error("resolvent ill-conditioned at s = {s}: estimated condition number {cond:.3e}")]
    IllConditioned { s: Complex64, cond: f64 },

    #[error("I - Gamma*E(s+Gamma) numerically singular at s = {s}")]
    SeriesDivergence { s: Complex64 },

    #[error("Laplace inversion not converged at t = {t}: relative change {change:.3e} after doubling nodes")]
    NonConvergent { t: f64, change: f64 },

    #[error("Fock truncation {n_trunc} too small; need n_trunc >= 2")]
    TruncationTooSmall { n_trunc: usize },

    #[error("config error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn field_label(field: &Option<String>) -> String {
    match field {
        Some(f) => format!(" `{f}`"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
