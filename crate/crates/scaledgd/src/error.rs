use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("rank out of range: {0}")]
    Rank(String),

    #[error("mode-{mode} matricization is rank-deficient below the requested rank (sigma_{index} = {sigma:.3e})")]
    DegenerateRank { mode: usize, index: usize, sigma: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("ill-conditioned iterate: mode-{mode} preconditioner Gram is numerically singular")]
    IllConditioned { mode: usize },

    #[error("spectral initialization failed: {0}")]
    Init(String),

    #[error("file format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
