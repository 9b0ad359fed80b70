//! Exposure dynamics under the wrong-way measure.
//!
//! Changing numéraire to the price of default protection over `(t, t+dt]` moves
//! the wrong-way dependence into the exposure drift. With the intensity replaced
//! by a deterministic proxy `λ(s)` the adjustment becomes
//!
//! ```text
//! θ(s,t) = ρ β(s) σ^λ(λ(s)) · ( A B_t / (A B_t λ(s) − A_t) − B )
//! ```
//!
//! where `A, B, A_t, B_t` are the shifted-model coefficients at `(s, t)`.
//! Gaussian exposures stay Gaussian with the same variance and a mean shifted by
//! the integrated adjustment.

use std::fmt;
use std::sync::Arc;

use crate::affine::ShiftedAffineModel;
use crate::error::{Error, Result};
use crate::exposure::{lognormal_epe, positive_part, q_moments, ExposureSpec, GaussianLaw};
use crate::quad::simpson;
use crate::termstructure::CreditCurve;

/// Sub-intervals of the composite Simpson rule used for `Θ(t)`.
pub const THETA_QUAD_INTERVALS: usize = 200;

/// Smallest proxy intensity used on the diagonal `s = t`.
pub const PROXY_FLOOR: f64 = 1e-8;

const SINGULAR_TOL: f64 = 1e-14;

/// Deterministic stand-in for the stochastic intensity inside the adjustment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftProxy {
    /// Hazard rate `h(s)` of the survival curve.
    Hazard,
    /// Expected intensity `E[λ_s]`.
    MeanIntensity,
}

/// Constant instantaneous correlation between exposure and intensity drivers.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Correlation(f64);

impl Correlation {
    pub fn new(rho: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::InvalidParameter(format!("correlation {rho} outside [-1, 1]")));
        }
        Ok(Self(rho))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// How `θ(·, t)` is integrated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weighting {
    /// `∫₀ᵗ θ(u,t) du`
    Flat,
    /// `(t − T) ∫₀ᵗ θ(u,t)/(u − T) du`, for the Brownian-bridge exposure maturing at `T`.
    Bridge { maturity: f64 },
}

/// Diffusion coefficient `β(s)` of the exposure.
#[derive(Clone)]
pub enum Beta {
    Constant(f64),
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Beta {
    pub fn at(&self, s: f64) -> f64 {
        match self {
            Self::Constant(b) => *b,
            Self::Function(f) => f(s),
        }
    }
}

impl fmt::Debug for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(b) => write!(f, "Beta::Constant({b})"),
            Self::Function(_) => write!(f, "Beta::Function(..)"),
        }
    }
}

/// Diagnostics raised while evaluating the adjustment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ThetaFlags {
    /// A negative proxy was met under a square-root model; `σ^λ` used `max(λ, 0)`.
    pub negative_proxy: bool,
    /// The proxy on the diagonal was floored at [`PROXY_FLOOR`].
    pub floored: bool,
}

impl ThetaFlags {
    fn merge(&mut self, other: ThetaFlags) {
        self.negative_proxy |= other.negative_proxy;
        self.floored |= other.floored;
    }

    pub fn any(&self) -> bool {
        self.negative_proxy || self.floored
    }
}

/// Deterministic drift adjustment `θ(s,t)` and its integrals.
#[derive(Clone)]
pub struct DriftAdjustment {
    model: ShiftedAffineModel,
    curve: Arc<dyn CreditCurve>,
    proxy: DriftProxy,
    rho: Correlation,
    beta: Beta,
}

impl fmt::Debug for DriftAdjustment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftAdjustment")
            .field("model", &self.model)
            .field("proxy", &self.proxy)
            .field("rho", &self.rho)
            .field("beta", &self.beta)
            .finish_non_exhaustive()
    }
}

impl DriftAdjustment {
    pub fn new(
        model: ShiftedAffineModel,
        curve: Arc<dyn CreditCurve>,
        proxy: DriftProxy,
        rho: Correlation,
        beta: Beta,
    ) -> Self {
        Self { model, curve, proxy, rho, beta }
    }

    /// Adjustment for an exposure whose diffusion coefficient is its `ν`.
    pub fn for_exposure(
        exposure: &ExposureSpec,
        model: ShiftedAffineModel,
        curve: Arc<dyn CreditCurve>,
        proxy: DriftProxy,
        rho: Correlation,
    ) -> Self {
        Self::new(model, curve, proxy, rho, Beta::Constant(exposure.nu()))
    }

    pub fn rho(&self) -> Correlation {
        self.rho
    }

    pub fn proxy(&self) -> DriftProxy {
        self.proxy
    }

    /// Proxy value `λ(s)`.
    pub fn proxy_intensity(&self, s: f64) -> Result<f64> {
        match self.proxy {
            DriftProxy::Hazard => self.curve.hazard_rate(s),
            DriftProxy::MeanIntensity => Ok(self.model.mean_intensity(s)),
        }
    }

    pub fn theta(&self, s: f64, t: f64) -> Result<f64> {
        self.theta_with_flags(s, t).map(|(v, _)| v)
    }

    pub fn theta_with_flags(&self, s: f64, t: f64) -> Result<(f64, ThetaFlags)> {
        let rho = self.rho.value();
        if rho == 0.0 {
            // still validates the time arguments
            self.model.coeffs(s, t)?;
            return Ok((0.0, ThetaFlags::default()));
        }
        let mut flags = ThetaFlags::default();
        let mut lam = self.proxy_intensity(s)?;
        if s == t && lam < PROXY_FLOOR {
            lam = PROXY_FLOOR;
            flags.floored = true;
        }
        if lam < 0.0 && self.model.base.is_square_root() {
            flags.negative_proxy = true;
        }
        let c = self.model.coeffs(s, t)?;
        let den = c.a * c.b_t * lam - c.a_t;
        if den.abs() < SINGULAR_TOL {
            return Err(Error::Singular { s, t, proxy: lam });
        }
        let bracket = c.a * c.b_t / den - c.b;
        let value = rho * self.beta.at(s) * self.model.base.diffusion(lam) * bracket;
        Ok((value, flags))
    }

    /// `Θ(t)` with the requested weighting, by composite Simpson on a fixed grid.
    pub fn integrated(&self, t: f64, weighting: Weighting) -> Result<f64> {
        self.integrated_with_flags(t, weighting).map(|(v, _)| v)
    }

    pub fn integrated_with_flags(&self, t: f64, weighting: Weighting) -> Result<(f64, ThetaFlags)> {
        if !(t >= 0.0) {
            return Err(Error::OutOfRange { t, lo: 0.0, hi: f64::INFINITY });
        }
        if let Weighting::Bridge { maturity } = weighting {
            if t >= maturity {
                return Err(Error::OutOfRange { t, lo: 0.0, hi: maturity });
            }
        }
        if t == 0.0 || self.rho.value() == 0.0 {
            return Ok((0.0, ThetaFlags::default()));
        }
        let mut flags = ThetaFlags::default();
        // the bridge weight 1/(u − T) is nearly singular at u = t when t → T:
        // integrate (θ(u,t) − θ(t,t))/(u − T) and add θ(t,t)·ln((T − t)/T) exactly
        let diagonal = match weighting {
            Weighting::Flat => 0.0,
            Weighting::Bridge { .. } => {
                let (v, f) = self.theta_with_flags(t, t)?;
                flags.merge(f);
                v
            }
        };
        let mut err = None;
        let mut eval = |u: f64| match self.theta_with_flags(u.min(t), t) {
            Ok((v, f)) => {
                flags.merge(f);
                match weighting {
                    Weighting::Flat => v,
                    Weighting::Bridge { maturity } => (v - diagonal) / (u - maturity),
                }
            }
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        };
        let integral = simpson(&mut eval, 0.0, t, THETA_QUAD_INTERVALS);
        if let Some(e) = err {
            return Err(e);
        }
        let value = match weighting {
            Weighting::Flat => integral,
            Weighting::Bridge { maturity } => (t - maturity) * (integral + diagonal * ((maturity - t) / maturity).ln()),
        };
        Ok((value, flags))
    }
}

/// `(mean, stdev)` under the wrong-way measure; the stdev is the Q one.
fn wwm_moments(exposure: &ExposureSpec, adj: &DriftAdjustment, t: f64) -> Result<((f64, f64), ThetaFlags)> {
    let (q_mean, stdev) = q_moments(exposure, t)?;
    match exposure {
        ExposureSpec::Forward { .. } => {
            let (shift, flags) = adj.integrated_with_flags(t, Weighting::Flat)?;
            Ok(((q_mean + shift, stdev), flags))
        }
        ExposureSpec::Swap { maturity, .. } => {
            if t >= *maturity {
                return Ok(((0.0, 0.0), ThetaFlags::default()));
            }
            let (shift, flags) = adj.integrated_with_flags(t, Weighting::Bridge { maturity: *maturity })?;
            Ok(((q_mean + shift, stdev), flags))
        }
        ExposureSpec::Lognormal { .. } => unreachable!("q_moments rejects lognormal"),
    }
}

/// Marginal law of a Gaussian exposure under the wrong-way measure.
pub fn wwm_gaussian_law(exposure: &ExposureSpec, adj: &DriftAdjustment, t: f64) -> Result<GaussianLaw> {
    if !(t > 0.0) || (matches!(exposure, ExposureSpec::Swap { .. }) && t >= exposure.maturity()) {
        return Err(Error::OutOfRange { t, lo: 0.0, hi: exposure.maturity() });
    }
    let ((m, s), _) = wwm_moments(exposure, adj, t)?;
    GaussianLaw::new(m, s)
}

/// EPE with wrong-way risk, `E^{WWM}[V_t⁺]`, for any exposure kind.
pub fn wwm_epe(exposure: &ExposureSpec, adj: &DriftAdjustment, t: f64) -> Result<(f64, ThetaFlags)> {
    match exposure {
        ExposureSpec::Lognormal { .. } => {
            let (theta, flags) = adj.integrated_with_flags(t, Weighting::Flat)?;
            Ok((lognormal_epe(exposure, theta, t)?, flags))
        }
        _ => {
            let ((m, s), flags) = wwm_moments(exposure, adj, t)?;
            Ok((positive_part(m, s), flags))
        }
    }
}
