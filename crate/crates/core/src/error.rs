use thiserror::Error;

/// Errors raised by the pricing engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} outside the supported range [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("drift adjustment singular at s={s}, t={t} (proxy intensity {proxy})")]
    Singular { s: f64, t: f64, proxy: f64 },

    #[error("degenerate curve at t={t}: h(t)G(t) vanishes")]
    DegenerateCurve { t: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_range(t: f64, lo: f64, hi: f64) -> Result<()> {
    // small slack so that grid points produced by float arithmetic are accepted
    let eps = 1e-12 * hi.abs().max(1.0);
    if t.is_nan() || t < lo - eps || t > hi + eps {
        Err(Error::OutOfRange { t, lo, hi })
    } else {
        Ok(())
    }
}
