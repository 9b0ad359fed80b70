//! Stylized exposure models and their closed-form marginal laws under Q.

use crate::error::{check_range, Error, Result};
use crate::normal;

/// Deterministic rate function of time (lognormal exposure drift).
#[derive(Debug, Clone, PartialEq)]
pub enum RateFunction {
    Constant(f64),
    /// `values[i]` applies on `[grid[i], grid[i+1])`; the last value extends to infinity.
    Piecewise {
        grid: Vec<f64>,
        values: Vec<f64>,
    },
}

impl RateFunction {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Self::Constant(a) => *a,
            Self::Piecewise { grid, values } => {
                let i = grid.partition_point(|&x| x <= t).saturating_sub(1);
                values[i.min(values.len() - 1)]
            }
        }
    }

    /// ∫₀ᵗ α(s) ds
    pub fn integral(&self, t: f64) -> f64 {
        match self {
            Self::Constant(a) => a * t,
            Self::Piecewise { grid, values } => {
                let mut acc = 0.0;
                for (i, &v) in values.iter().enumerate() {
                    let lo = grid[i];
                    if t <= lo {
                        break;
                    }
                    let hi = grid.get(i + 1).copied().unwrap_or(f64::INFINITY).min(t);
                    acc += v * (hi - lo);
                }
                acc
            }
        }
    }
}

/// Exposure process `dV = α ds + β dW^V`.
#[derive(Debug, Clone, PartialEq)]
pub enum ExposureSpec {
    /// Rescaled Brownian motion, `V_t ~ N(0, ν√t)`.
    Forward { nu: f64, maturity: f64 },
    /// Drifted Brownian bridge pinned at 0 at maturity (swap-like pull to par).
    Swap { nu: f64, gamma_v: f64, maturity: f64 },
    /// Geometric Brownian motion with deterministic drift `α(·)` and log-vol `ν`.
    Lognormal { nu: f64, v0: f64, drift: RateFunction, maturity: f64 },
}

impl ExposureSpec {
    pub fn forward(nu: f64, maturity: f64) -> Result<Self> {
        check_positive(nu, maturity)?;
        Ok(Self::Forward { nu, maturity })
    }

    pub fn swap(nu: f64, gamma_v: f64, maturity: f64) -> Result<Self> {
        check_positive(nu, maturity)?;
        if !gamma_v.is_finite() {
            return Err(Error::InvalidParameter("gamma_v must be finite".into()));
        }
        Ok(Self::Swap { nu, gamma_v, maturity })
    }

    pub fn lognormal(nu: f64, v0: f64, drift: RateFunction, maturity: f64) -> Result<Self> {
        check_positive(nu, maturity)?;
        if !(v0 > 0.0) {
            return Err(Error::InvalidParameter(format!("v0 must be positive, got {v0}")));
        }
        Ok(Self::Lognormal { nu, v0, drift, maturity })
    }

    pub fn nu(&self) -> f64 {
        match self {
            Self::Forward { nu, .. } | Self::Swap { nu, .. } | Self::Lognormal { nu, .. } => *nu,
        }
    }

    pub fn maturity(&self) -> f64 {
        match self {
            Self::Forward { maturity, .. } | Self::Swap { maturity, .. } | Self::Lognormal { maturity, .. } => {
                *maturity
            }
        }
    }

    pub fn is_gaussian(&self) -> bool {
        !matches!(self, Self::Lognormal { .. })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Forward { .. } => "forward",
            Self::Swap { .. } => "swap",
            Self::Lognormal { .. } => "lognormal",
        }
    }
}

fn check_positive(nu: f64, maturity: f64) -> Result<()> {
    if !(nu > 0.0) || !(maturity > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "exposure needs nu > 0 and maturity > 0 (nu={nu}, maturity={maturity})"
        )));
    }
    Ok(())
}

/// Normal law `N(mean, stdev)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianLaw {
    pub mean: f64,
    pub stdev: f64,
}

impl GaussianLaw {
    pub fn new(mean: f64, stdev: f64) -> Result<Self> {
        if !(stdev > 0.0) || !mean.is_finite() || !stdev.is_finite() {
            return Err(Error::Domain(format!("Gaussian law needs stdev > 0, got {stdev}")));
        }
        Ok(Self { mean, stdev })
    }
}

/// `E[max(X, 0)]` for `X ~ N(μ, σ)`: `σφ(μ/σ) + μΦ(μ/σ)`.
pub fn gaussian_epe(law: &GaussianLaw) -> f64 {
    let z = law.mean / law.stdev;
    law.stdev * normal::pdf(z) + law.mean * normal::cdf(z)
}

/// Same as [`gaussian_epe`] but accepts `stdev = 0` (point mass: `max(μ, 0)`).
pub fn positive_part(mean: f64, stdev: f64) -> f64 {
    if stdev > 0.0 {
        gaussian_epe(&GaussianLaw { mean, stdev })
    } else {
        mean.max(0.0)
    }
}

/// `(mean, stdev)` of `V_t` under Q; may have zero stdev at the end points.
pub(crate) fn q_moments(spec: &ExposureSpec, t: f64) -> Result<(f64, f64)> {
    check_range(t, 0.0, spec.maturity())?;
    match spec {
        ExposureSpec::Forward { nu, .. } => Ok((0.0, nu * t.sqrt())),
        ExposureSpec::Swap { nu, gamma_v, maturity } => {
            let tm = *maturity;
            let t = t.min(tm);
            Ok((gamma_v * t * (tm - t), nu * (t * (1.0 - t / tm)).max(0.0).sqrt()))
        }
        ExposureSpec::Lognormal { .. } => {
            Err(Error::Unsupported("lognormal exposure has no Gaussian law; use lognormal_epe".into()))
        }
    }
}

/// Marginal law of a Gaussian exposure under Q.
pub fn q_law(spec: &ExposureSpec, t: f64) -> Result<GaussianLaw> {
    let (m, s) = q_moments(spec, t)?;
    if !(s > 0.0) {
        return Err(Error::OutOfRange { t, lo: 0.0, hi: spec.maturity() });
    }
    GaussianLaw::new(m, s)
}

/// EPE without wrong-way risk, `E[V_t⁺]`, defined by continuity where the law degenerates.
pub fn independent_epe(spec: &ExposureSpec, t: f64) -> Result<f64> {
    match spec {
        ExposureSpec::Lognormal { .. } => lognormal_epe(spec, 0.0, t),
        _ => {
            let (m, s) = q_moments(spec, t)?;
            Ok(positive_part(m, s))
        }
    }
}

/// `V₀·exp(∫₀ᵗα)·exp(Θ(t))`; `theta_integral = 0` gives the independent EPE.
pub fn lognormal_epe(spec: &ExposureSpec, theta_integral: f64, t: f64) -> Result<f64> {
    match spec {
        ExposureSpec::Lognormal { v0, drift, .. } => {
            if !(t >= 0.0) {
                return Err(Error::OutOfRange { t, lo: 0.0, hi: spec.maturity() });
            }
            Ok(v0 * (drift.integral(t) + theta_integral).exp())
        }
        _ => Err(Error::Unsupported("lognormal_epe needs a lognormal exposure".into())),
    }
}
