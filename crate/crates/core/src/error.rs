use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("root bracket failure on [{lo}, {hi}]: f(lo)={f_lo:e}, f(hi)={f_hi:e}")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("renewal kernel is not contractive (factor {factor:.6} >= 1)")]
    NotContractive { factor: f64 },

    #[error("singular boundary constant: chi(b) = {chi:e}")]
    Singular { chi: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Bracket { .. }
                | Error::NotContractive { .. }
                | Error::Singular { .. }
                | Error::Numerical(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
