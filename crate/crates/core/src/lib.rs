//! Credit valuation adjustment under wrong-way risk.
//!
//! Two routes are provided for the survival-weighted expected positive
//! exposure of a portfolio facing a counterparty with stochastic affine
//! default intensity:
//!
//! * a semi-analytic route, where the dependence is moved into a deterministic
//!   drift adjustment of the exposure under the wrong-way measure ([`wwm`]);
//! * a full bivariate Monte Carlo benchmark ([`mc`]), next to a closed-form
//!   Gaussian-copula baseline.
//!
//! [`engine`] assembles CVA figures from either route.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod affine;
pub mod engine;
pub mod error;
pub mod exposure;
pub mod mc;
pub mod normal;
pub mod quad;
pub mod termstructure;
pub mod wwm;

pub use error::{Error, Result};

/// Formats a number with at most 10 significant digits, plain notation where possible.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.9e}").parse().unwrap_or(x);
    format!("{rounded}")
}
