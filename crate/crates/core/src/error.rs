use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("inversion failed: {what} (min singular value {min_sv:e})")]
    Inversion { what: String, min_sv: f64 },
    #[error("design error: {0}")]
    Design(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("no bracket: {0}")]
    NoBracket(String),
}

pub type Result<T> = std::result::Result<T, Error>;
