use thiserror::Error;

use crate::local_caprini::CapriniState;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} is outside the domain ({domain})")]
    Domain { what: String, domain: &'static str },

    #[error("quadrature did not converge (estimated error {estimate:.3e})")]
    Quadrature { estimate: f64 },

    #[error("imaginary residue {0:.3e} above tolerance for a real eigenfunction sample")]
    ImaginaryResidue(f64),

    #[error("spectral tail mass {tail:.3e} exceeds tolerance at mu_max = {mu_max}")]
    TailRule { mu_max: f64, tail: f64 },

    #[error("no sign change on [{lo:.6e}, {hi:.6e}]: {detail}")]
    NoBracket { lo: f64, hi: f64, detail: String },

    #[error("infeasible offset delta = {delta:.6e}: need delta > {min:.6e}")]
    Infeasible { delta: f64, min: f64 },

    #[error("eps = {eps:.6e} is beyond the reachable residual {sup:.6e}")]
    Unreachable { eps: f64, sup: f64 },

    #[error("exchange iteration stopped after {iterations} steps with certificate minimum {cert_min:.3e}")]
    NotConverged {
        iterations: usize,
        cert_min: f64,
        state: Box<CapriniState>,
    },

    #[error("eps2 = {eps2:.3e} is below the dense-solve resolution (condition estimate {cond:.3e})")]
    IllConditioned { eps2: f64, cond: f64 },

    #[error("singular linear system")]
    Singular,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(what: impl Into<String>, domain: &'static str) -> Error {
    Error::Domain {
        what: what.into(),
        domain,
    }
}
