use thiserror::Error;

/// Every failure surfaced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("unsupported combination: {0}")]
    Unsupported(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("factorization failed: {message} (best residual {best_residual:.3e})")]
    Factorization { message: String, best_residual: f64 },
    #[error("incidence matrix not verified: residual {residual:.3e} exceeds {tol:.1e}")]
    Unverified { residual: f64, tol: f64 },
    #[error("cannot normalize a zero state")]
    Normalization,
    #[error("step size underflow at t = {t}: h = {h:.3e}")]
    Stiffness { t: f64, h: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for errors caused by bad input rather than by the numerics.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Topology(_) | Error::Unsupported(_) | Error::Dimension(_) | Error::Domain(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
