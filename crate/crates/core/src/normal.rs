//! Standard normal density, distribution and quantile functions.

use statrs::distribution::{ContinuousCDF, Normal};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// φ(x)
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Φ(x), evaluated through erfc so both tails keep full relative precision.
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Φ⁻¹(p) for p in (0, 1).
pub fn inv_cdf(p: f64) -> f64 {
    // unit normal; construction cannot fail
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    n.inverse_cdf(p)
}
