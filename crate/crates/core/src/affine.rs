//! Closed-form bond coefficients for affine intensities.
//!
//! For a latent process `y` the survival bond is `P(s,t) = A(s,t)·exp(−B(s,t)·y_s)`.
//! The intensity is `λ_t = y_t + ψ(t)`, which is affine again with
//! `A^λ(s,t) = A^y(s,t)·exp(B^y(s,t)ψ(s) − Ψ(s,t))` and `B^λ = B^y`.
//!
//! The CIR and JCIR formulas are written in terms of `w = exp(−hτ)` and
//! `log1p`, which keeps them finite for large `τ` and exact in the small-`σ`
//! and `d → 0` limits.

use crate::error::{Error, Result};
use crate::termstructure::{calibrate_shift, CreditCurve, ShiftFunction, SurvivalCurve};

/// `A`, `B` and their derivatives in the maturity argument `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineCoeffs {
    pub a: f64,
    pub b: f64,
    pub a_t: f64,
    pub b_t: f64,
}

impl AffineCoeffs {
    pub const IDENTITY: AffineCoeffs = AffineCoeffs { a: 1.0, b: 0.0, a_t: 0.0, b_t: 1.0 };

    /// `A·exp(−B·x)`
    pub fn bond(&self, x: f64) -> f64 {
        self.a * (-self.b * x).exp()
    }
}

/// Ornstein-Uhlenbeck (Vasicek) latent process `dy = κ(θ − y)dt + σ dW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuParams {
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    pub y0: f64,
}

impl OuParams {
    pub fn new(kappa: f64, theta: f64, sigma: f64, y0: f64) -> Result<Self> {
        if !(kappa > 0.0) || !(sigma >= 0.0) || !theta.is_finite() || !y0.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "OU needs kappa > 0 and sigma >= 0 (kappa={kappa}, sigma={sigma})"
            )));
        }
        Ok(Self { kappa, theta, sigma, y0 })
    }
}

/// Cox-Ingersoll-Ross latent process `dy = κ(θ − y)dt + σ√y dW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirParams {
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    pub y0: f64,
}

impl CirParams {
    /// `sigma = 0` is accepted and gives the deterministic-intensity limit.
    pub fn new(kappa: f64, theta: f64, sigma: f64, y0: f64) -> Result<Self> {
        if !(kappa > 0.0) || !(theta >= 0.0) || !(sigma >= 0.0) || !(y0 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "CIR needs kappa > 0, theta >= 0, sigma >= 0, y0 >= 0 \
                 (kappa={kappa}, theta={theta}, sigma={sigma}, y0={y0})"
            )));
        }
        Ok(Self { kappa, theta, sigma, y0 })
    }

    /// `2κθ − σ²`; negative values mean the Feller condition fails.
    pub fn feller_margin(&self) -> f64 {
        2.0 * self.kappa * self.theta - self.sigma * self.sigma
    }

    /// `h = √(κ² + 2σ²)`
    pub fn h(&self) -> f64 {
        (self.kappa * self.kappa + 2.0 * self.sigma * self.sigma).sqrt()
    }

    /// Parameter sets 1–4 used for the CVA comparison table (rates in decimals).
    pub fn table_set(n: u8) -> Result<Self> {
        let (y0, kappa, theta, sigma) = match n {
            1 => (0.0300, 0.02, 0.1610, 0.08),
            2 => (0.0350, 0.35, 0.0450, 0.15),
            3 => (0.0100, 0.80, 0.0200, 0.20),
            4 => (0.0300, 0.50, 0.0500, 0.50),
            _ => return Err(Error::InvalidParameter(format!("unknown parameter set {n}"))),
        };
        Self::new(kappa, theta, sigma, y0)
    }

    /// Looks up `"set1"`..`"set4"` (or a bare digit).
    pub fn named(name: &str) -> Result<Self> {
        let n = name
            .trim()
            .trim_start_matches("set")
            .parse::<u8>()
            .map_err(|_| Error::InvalidParameter(format!("unknown parameter set {name:?}")))?;
        Self::table_set(n)
    }
}

/// CIR with compound Poisson jumps: rate `jump_rate` (α), exponential sizes with mean `jump_mean` (γ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JcirParams {
    pub cir: CirParams,
    pub jump_rate: f64,
    pub jump_mean: f64,
}

impl JcirParams {
    pub fn new(cir: CirParams, jump_rate: f64, jump_mean: f64) -> Result<Self> {
        if !(jump_rate >= 0.0) || !(jump_mean > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "JCIR needs jump_rate >= 0 and jump_mean > 0 (got {jump_rate}, {jump_mean})"
            )));
        }
        Ok(Self { cir, jump_rate, jump_mean })
    }

    /// `d = σ² − 2κγ − 2γ²`
    pub fn d(&self) -> f64 {
        let (k, s, g) = (self.cir.kappa, self.cir.sigma, self.jump_mean);
        s * s - 2.0 * k * g - 2.0 * g * g
    }
}

fn tau_of(s: f64, t: f64) -> Result<f64> {
    if !(s >= 0.0) || !(t >= s) {
        return Err(Error::InvalidParameter(format!("need 0 <= s <= t, got s={s}, t={t}")));
    }
    Ok(t - s)
}

/// `[log1p(r) − log1p(r·w)] / r`, continuous at `r = 0` where it equals `1 − w`.
fn log1p_ratio(r: f64, w: f64) -> f64 {
    if r.abs() < 1e-6 {
        (1.0 - w) - r * (1.0 - w * w) / 2.0 + r * r * (1.0 - w * w * w) / 3.0
    } else {
        (r.ln_1p() - (r * w).ln_1p()) / r
    }
}

pub fn ou_coeffs(p: &OuParams, s: f64, t: f64) -> Result<AffineCoeffs> {
    let tau = tau_of(s, t)?;
    if tau == 0.0 {
        return Ok(AffineCoeffs::IDENTITY);
    }
    let (k, th, sg) = (p.kappa, p.theta, p.sigma);
    let b = -(-k * tau).exp_m1() / k;
    let b_t = (-k * tau).exp();
    let drift = th - sg * sg / (2.0 * k * k);
    let a = (drift * (b - tau) - sg * sg / (4.0 * k) * b * b).exp();
    let a_t = a * ((b_t - 1.0) * drift - sg * sg / (2.0 * k) * b * b_t);
    Ok(AffineCoeffs { a, b, a_t, b_t })
}

/// `(ln A, B, B_t)` for CIR at time-to-maturity `tau`.
fn cir_parts(p: &CirParams, tau: f64) -> (f64, f64, f64) {
    let (k, s) = (p.kappa, p.sigma);
    let h = p.h();
    let w = (-h * tau).exp();
    let den = 2.0 * h * w + (k + h) * (1.0 - w);
    let b = 2.0 * (1.0 - w) / den;
    let b_t = 4.0 * h * h * w / (den * den);
    // q = (h − κ)/(h + κ) = 2σ²/(h + κ)²
    let q = 2.0 * s * s / ((h + k) * (h + k));
    let ln_a = 2.0 * k * p.theta * (2.0 * log1p_ratio(q, w) / ((h + k) * (h + k)) - tau / (h + k));
    (ln_a, b, b_t)
}

pub fn cir_coeffs(p: &CirParams, s: f64, t: f64) -> Result<AffineCoeffs> {
    let tau = tau_of(s, t)?;
    if tau == 0.0 {
        return Ok(AffineCoeffs::IDENTITY);
    }
    let (ln_a, b, b_t) = cir_parts(p, tau);
    let a = ln_a.exp();
    // d ln A / dτ = −κθB
    let a_t = -a * p.kappa * p.theta * b;
    Ok(AffineCoeffs { a, b, a_t, b_t })
}

/// Log of the jump factor multiplying `A^CIR`.
fn jcir_log_jump_factor(p: &JcirParams, tau: f64) -> f64 {
    let (alpha, g) = (p.jump_rate, p.jump_mean);
    if alpha == 0.0 {
        return 0.0;
    }
    let c = &p.cir;
    let h = c.h();
    let xi = (h + c.kappa + 2.0 * g) / 2.0;
    let d = p.d();
    let w = (-h * tau).exp();
    if d.abs() < 1e-12 {
        -(alpha * g / xi) * (tau + (w - 1.0) / h)
    } else {
        // ν[ξτ − ln(1 + ξ/h·(e^{hτ} − 1))] with ν = 2αγ/d, rewritten around r = (h − ξ)/ξ = d/(2ξ²)
        let r = d / (2.0 * xi * xi);
        -alpha * g * tau / xi + alpha * g / (xi * xi) * log1p_ratio(r, w)
    }
}

pub fn jcir_coeffs(p: &JcirParams, s: f64, t: f64) -> Result<AffineCoeffs> {
    let tau = tau_of(s, t)?;
    if tau == 0.0 {
        return Ok(AffineCoeffs::IDENTITY);
    }
    let (ln_a_cir, b, b_t) = cir_parts(&p.cir, tau);
    let a = (ln_a_cir + jcir_log_jump_factor(p, tau)).exp();
    let g = p.jump_mean;
    // d ln A / dτ = −κθB − αγB/(1 + γB)
    let dln = -p.cir.kappa * p.cir.theta * b - p.jump_rate * g * b / (1.0 + g * b);
    Ok(AffineCoeffs { a, b, a_t: a * dln, b_t })
}

/// Latent homogeneous affine process `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatentModel {
    Ou(OuParams),
    Cir(CirParams),
    Jcir(JcirParams),
}

impl LatentModel {
    pub fn coeffs(&self, s: f64, t: f64) -> Result<AffineCoeffs> {
        match self {
            Self::Ou(p) => ou_coeffs(p, s, t),
            Self::Cir(p) => cir_coeffs(p, s, t),
            Self::Jcir(p) => jcir_coeffs(p, s, t),
        }
    }

    pub fn y0(&self) -> f64 {
        match self {
            Self::Ou(p) => p.y0,
            Self::Cir(p) => p.y0,
            Self::Jcir(p) => p.cir.y0,
        }
    }

    /// `P^y(0,t)`
    pub fn zero_bond(&self, t: f64) -> Result<f64> {
        Ok(self.coeffs(0.0, t)?.bond(self.y0()))
    }

    /// `E[y_s]`
    pub fn mean(&self, s: f64) -> f64 {
        let (k, th, y0) = match self {
            Self::Ou(p) => (p.kappa, p.theta, p.y0),
            Self::Cir(p) => (p.kappa, p.theta, p.y0),
            Self::Jcir(p) => (p.cir.kappa, p.cir.theta, p.cir.y0),
        };
        let decay = (-k * s).exp();
        let mut m = y0 * decay + th * (1.0 - decay);
        if let Self::Jcir(p) = self {
            // compensator of the jump part: αγ per unit time, mean-reverted at speed κ
            m += p.jump_rate * p.jump_mean / k * (1.0 - decay);
        }
        m
    }

    /// Diffusion coefficient `σ^λ(x)` of the intensity at level `x`.
    /// Square-root models are evaluated at `max(x, 0)`.
    pub fn diffusion(&self, x: f64) -> f64 {
        match self {
            Self::Ou(p) => p.sigma,
            Self::Cir(p) => p.sigma * x.max(0.0).sqrt(),
            Self::Jcir(p) => p.cir.sigma * x.max(0.0).sqrt(),
        }
    }

    pub fn is_square_root(&self) -> bool {
        !matches!(self, Self::Ou(_))
    }
}

/// Largest knot spacing used when calibrating a shift.
pub const CALIBRATION_STEP: f64 = 0.01;

/// `λ_t = y_t + ψ(t)`: CIR++, JCIR++ or Hull-White depending on the base.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedAffineModel {
    pub base: LatentModel,
    pub shift: ShiftFunction,
}

impl ShiftedAffineModel {
    pub fn new(base: LatentModel, shift: ShiftFunction) -> Self {
        Self { base, shift }
    }

    /// No shift: the model curve is `P^y(0,·)` itself.
    pub fn unshifted(base: LatentModel) -> Self {
        Self::new(base, ShiftFunction::Zero)
    }

    /// Shift implied from a market curve, on the market grid refined to
    /// [`CALIBRATION_STEP`] so that `P^λ(0,·)` tracks `G` between sparse knots.
    pub fn calibrated(base: LatentModel, market: &SurvivalCurve) -> Result<Self> {
        let market = &market.refined(CALIBRATION_STEP)?;
        let mut err = None;
        let shift = calibrate_shift(
            |t| match base.zero_bond(t) {
                Ok(p) => p,
                Err(e) => {
                    err.get_or_insert(e);
                    f64::NAN
                }
            },
            market,
        );
        if let Some(e) = err {
            return Err(e);
        }
        Ok(Self::new(base, shift?))
    }

    pub fn coeffs(&self, s: f64, t: f64) -> Result<AffineCoeffs> {
        shifted_coeffs(self, s, t)
    }

    /// `λ_0 = y_0 + ψ(0)`
    pub fn initial_intensity(&self) -> f64 {
        self.base.y0() + self.shift.psi(0.0)
    }

    /// `P^λ(0,t) = P^y(0,t)·exp(−Ψ(t))`
    pub fn zero_bond(&self, t: f64) -> Result<f64> {
        Ok(self.base.zero_bond(t)? * (-self.shift.integral(t)).exp())
    }

    /// Hazard rate of the model curve, `−∂_t ln P^λ(0,t)`.
    pub fn model_hazard(&self, t: f64) -> Result<f64> {
        let c = self.base.coeffs(0.0, t)?;
        Ok(-c.a_t / c.a + c.b_t * self.base.y0() + self.shift.psi(t))
    }

    /// `E[λ_s]`
    pub fn mean_intensity(&self, s: f64) -> f64 {
        mean_intensity(&self.base, &self.shift, s)
    }
}

/// Applies the deterministic-shift identities to the base coefficients.
pub fn shifted_coeffs(m: &ShiftedAffineModel, s: f64, t: f64) -> Result<AffineCoeffs> {
    let base = m.base.coeffs(s, t)?;
    if matches!(m.shift, ShiftFunction::Zero) {
        return Ok(base);
    }
    let psi_s = m.shift.psi(s);
    let factor = (base.b * psi_s - m.shift.integral_between(s, t)).exp();
    let a = base.a * factor;
    let a_t = a * (base.a_t / base.a + base.b_t * psi_s - m.shift.psi(t));
    Ok(AffineCoeffs { a, b: base.b, a_t, b_t: base.b_t })
}

/// `E[λ_s] = ψ(s) + E[y_s]`
pub fn mean_intensity(base: &LatentModel, shift: &ShiftFunction, s: f64) -> f64 {
    shift.psi(s) + base.mean(s)
}

/// Survival curve implied by a shifted model, evaluated in closed form.
#[derive(Debug, Clone)]
pub struct ModelCurve {
    model: ShiftedAffineModel,
    horizon: f64,
}

impl ModelCurve {
    pub fn new(model: ShiftedAffineModel, horizon: f64) -> Self {
        Self { model, horizon }
    }

    pub fn model(&self) -> &ShiftedAffineModel {
        &self.model
    }

    /// Tabulates the curve on `[0, horizon]` with `intervals` steps.
    pub fn to_survival_curve(&self, intervals: usize) -> Result<SurvivalCurve> {
        let grid = crate::quad::linspace(0.0, self.horizon, intervals);
        let mut log_g = Vec::with_capacity(grid.len());
        for &t in &grid {
            log_g.push(if t == 0.0 { 0.0 } else { self.model.zero_bond(t)?.ln() });
        }
        SurvivalCurve::from_log_survival(grid, log_g)
    }
}

impl CreditCurve for ModelCurve {
    fn survival(&self, t: f64) -> Result<f64> {
        crate::error::check_range(t, 0.0, self.horizon)?;
        self.model.zero_bond(t)
    }

    fn hazard_rate(&self, t: f64) -> Result<f64> {
        crate::error::check_range(t, 0.0, self.horizon)?;
        self.model.model_hazard(t)
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }
}
