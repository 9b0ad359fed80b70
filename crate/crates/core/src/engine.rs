//! CVA assembly and experiment orchestration.

use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use crate::affine::{LatentModel, ModelCurve, ShiftedAffineModel};
use crate::error::{Error, Result};
use crate::exposure::{independent_epe, ExposureSpec};
use crate::fmt_sig;
use crate::mc::{self, copula_epe, epe_wwr_mc, Scheme, SimulationPlan};
use crate::termstructure::{CreditCurve, SurvivalCurve};
use crate::wwm::{wwm_epe, Correlation, DriftAdjustment, DriftProxy};

/// Intervals of the CVA quadrature.
pub const CVA_INTERVALS: usize = 500;

/// Basis points per unit notional.
pub const BPS: f64 = 1e4;

/// Survival curve used for pricing.
#[derive(Debug, Clone)]
pub enum CurveSource {
    Market(SurvivalCurve),
    /// `G := P^λ(0,·)` from the intensity model itself.
    ModelImplied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    WwmHazard,
    WwmMean,
    McFullTruncation,
    McReflected,
    Copula,
    Independent,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Self::WwmHazard, Self::WwmMean, Self::McFullTruncation, Self::McReflected, Self::Copula, Self::Independent];

    pub fn name(self) -> &'static str {
        match self {
            Self::WwmHazard => "wwm_h",
            Self::WwmMean => "wwm_mean",
            Self::McFullTruncation => "mc_full_truncation",
            Self::McReflected => "mc_reflected",
            Self::Copula => "copula",
            Self::Independent => "independent",
        }
    }

    pub fn is_mc(self) -> bool {
        self.scheme().is_some()
    }

    pub fn is_wwm(self) -> bool {
        self.proxy().is_some()
    }

    fn scheme(self) -> Option<Scheme> {
        match self {
            Self::McFullTruncation => Some(Scheme::FullTruncation),
            Self::McReflected => Some(Scheme::Reflected),
            _ => None,
        }
    }

    fn proxy(self) -> Option<DriftProxy> {
        match self {
            Self::WwmHazard => Some(DriftProxy::Hazard),
            Self::WwmMean => Some(DriftProxy::MeanIntensity),
            _ => None,
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::Parse(format!("unknown method {s:?}")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Monte Carlo settings; the scheme comes from the method and the grid is every
/// step up to maturity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSettings {
    pub n_paths: usize,
    pub n_batches: usize,
    pub dt: f64,
    pub seed: u64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self { n_paths: 10_000, n_batches: 10, dt: 0.01, seed: 42 }
    }
}

impl McSettings {
    fn plan(&self, scheme: Scheme, rho: Correlation, maturity: f64) -> Result<SimulationPlan> {
        SimulationPlan::every_step(self.n_paths, self.dt, scheme, self.seed, rho, maturity, self.n_batches)
    }
}

#[derive(Debug, Clone)]
pub struct CvaRequest {
    pub exposure: ExposureSpec,
    pub model: ShiftedAffineModel,
    pub curve: CurveSource,
    pub rho_list: Vec<f64>,
    pub recovery: f64,
    pub method: Method,
    pub mc: Option<McSettings>,
}

impl CvaRequest {
    /// Request on the model-implied curve with `R = 0`.
    pub fn new(exposure: ExposureSpec, model: ShiftedAffineModel, method: Method, rho_list: Vec<f64>) -> Self {
        Self {
            exposure,
            model,
            curve: CurveSource::ModelImplied,
            rho_list,
            recovery: 0.0,
            method,
            mc: method.is_mc().then(McSettings::default),
        }
    }

    pub fn with_method(&self, method: Method) -> Self {
        Self { method, mc: self.mc.or_else(|| method.is_mc().then(McSettings::default)), ..self.clone() }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.recovery) {
            return Err(Error::InvalidParameter(format!("recovery must be in [0, 1), got {}", self.recovery)));
        }
        if let CurveSource::Market(c) = &self.curve {
            let t = self.exposure.maturity();
            if t > c.horizon() * (1.0 + 1e-12) {
                return Err(Error::OutOfRange { t, lo: 0.0, hi: c.horizon() });
            }
        }
        if self.method == Method::Copula && !self.exposure.is_gaussian() {
            return Err(Error::Unsupported("copula method with a lognormal exposure".into()));
        }
        if self.method.is_mc() && self.mc.is_none() {
            return Err(Error::InvalidParameter(format!("{} needs Monte Carlo settings", self.method)));
        }
        for &r in &self.rho_list {
            Correlation::new(r)?;
        }
        Ok(())
    }

    /// The survival curve `G` used for weighting.
    pub fn resolved_curve(&self) -> Arc<dyn CreditCurve> {
        match &self.curve {
            CurveSource::Market(c) => Arc::new(c.clone()),
            CurveSource::ModelImplied => Arc::new(ModelCurve::new(self.model.clone(), self.exposure.maturity())),
        }
    }
}

/// CVA at one correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct CvaPoint {
    pub rho: f64,
    pub bps: f64,
    /// Monte Carlo methods only.
    pub half_width_bps: Option<f64>,
    /// EPE profile as `(t, epe)`.
    pub profile: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvaResult {
    pub method: Method,
    pub points: Vec<CvaPoint>,
    pub warnings: Vec<String>,
}

/// `−(1 − R)∫₀ᵀ epe dG` as a Stieltjes trapezoid on [`CVA_INTERVALS`] intervals.
pub fn cva_from_epe<F>(epe: F, curve: &dyn CreditCurve, recovery: f64, maturity: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    Ok(cva_and_profile(epe, curve, recovery, maturity)?.0)
}

fn cva_and_profile<F>(
    mut epe: F,
    curve: &dyn CreditCurve,
    recovery: f64,
    maturity: f64,
) -> Result<(f64, Vec<(f64, f64)>)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let grid = crate::quad::linspace(0.0, maturity, CVA_INTERVALS);
    let mut profile = Vec::with_capacity(grid.len());
    let mut g = Vec::with_capacity(grid.len());
    for &t in &grid {
        profile.push((t, epe(t)?));
        g.push(curve.survival(t)?);
    }
    let sum: f64 = (0..CVA_INTERVALS).map(|i| 0.5 * (profile[i].1 + profile[i + 1].1) * (g[i] - g[i + 1])).sum();
    Ok(((1.0 - recovery) * sum, profile))
}

/// Prices the request for every correlation in its list.
pub fn price(req: &CvaRequest) -> Result<CvaResult> {
    req.validate()?;
    let curve = req.resolved_curve();
    let maturity = req.exposure.maturity();
    let mut warnings = Vec::new();
    if let LatentModel::Cir(p) = &req.model.base {
        if p.feller_margin() < 0.0 && req.method.is_mc() {
            warnings.push(format!("Feller condition violated (2κθ − σ² = {})", fmt_sig(p.feller_margin())));
        }
    }
    if req.model.shift.has_negative() {
        warnings.push("calibrated shift ψ takes negative values".into());
    }

    let mut points = Vec::with_capacity(req.rho_list.len());
    for &r in &req.rho_list {
        let rho = Correlation::new(r)?;
        let point = match req.method {
            Method::WwmHazard | Method::WwmMean => {
                let proxy = req.method.proxy().expect("wwm method");
                let adj = DriftAdjustment::for_exposure(&req.exposure, req.model.clone(), curve.clone(), proxy, rho);
                let mut flagged = false;
                let (cva, profile) = cva_and_profile(
                    |t| {
                        let (v, f) = wwm_epe(&req.exposure, &adj, t)?;
                        flagged |= f.any();
                        Ok(v)
                    },
                    curve.as_ref(),
                    req.recovery,
                    maturity,
                )?;
                if flagged {
                    warnings.push(format!("rho={r}: drift proxy was negative or floored"));
                }
                CvaPoint { rho: r, bps: cva * BPS, half_width_bps: None, profile }
            }
            Method::Copula => {
                let (cva, profile) = cva_and_profile(
                    |t| copula_epe(&req.exposure, curve.as_ref(), rho, t),
                    curve.as_ref(),
                    req.recovery,
                    maturity,
                )?;
                CvaPoint { rho: r, bps: cva * BPS, half_width_bps: None, profile }
            }
            Method::Independent => {
                let (cva, profile) =
                    cva_and_profile(|t| independent_epe(&req.exposure, t), curve.as_ref(), req.recovery, maturity)?;
                CvaPoint { rho: r, bps: cva * BPS, half_width_bps: None, profile }
            }
            Method::McFullTruncation | Method::McReflected => {
                let settings = req.mc.expect("validated");
                let plan = settings.plan(req.method.scheme().expect("mc method"), rho, maturity)?;
                let run = mc::simulate(&plan, &req.model, &req.exposure)?;
                let cva = run.cva(req.recovery).scaled(BPS);
                let profile = run.epe_profile(curve.as_ref())?.into_iter().map(|(t, e)| (t, e.value)).collect();
                CvaPoint { rho: r, bps: cva.value, half_width_bps: Some(cva.half_width), profile }
            }
        };
        points.push(point);
    }
    Ok(CvaResult { method: req.method, points, warnings })
}

/// Round half away from zero.
pub fn round_bps(x: f64) -> i64 {
    x.round() as i64
}

/// One EPE profile, ready for CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct EpeProfile {
    pub method: Method,
    pub rho: f64,
    pub times: Vec<f64>,
    pub epe: Vec<f64>,
    /// Monte Carlo methods only.
    pub half_width: Option<Vec<f64>>,
    /// `EPE^⊥`, reported next to the WWM methods.
    pub independent: Option<Vec<f64>>,
}

impl EpeProfile {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,epe");
        if self.half_width.is_some() {
            out.push_str(",ci_half_width");
        }
        if self.independent.is_some() {
            out.push_str(",epe_independent");
        }
        out.push('\n');
        for (i, &t) in self.times.iter().enumerate() {
            let _ = write!(out, "{},{}", fmt_sig(t), fmt_sig(self.epe[i]));
            if let Some(h) = &self.half_width {
                let _ = write!(out, ",{}", fmt_sig(h[i]));
            }
            if let Some(e) = &self.independent {
                let _ = write!(out, ",{}", fmt_sig(e[i]));
            }
            out.push('\n');
        }
        out
    }
}

/// EPE of the request's method at the given times.
pub fn epe_profile(req: &CvaRequest, rho: f64, grid: &[f64]) -> Result<EpeProfile> {
    req.validate()?;
    let maturity = req.exposure.maturity();
    if let Some(&t) = grid.iter().find(|&&t| !(0.0..=maturity).contains(&t)) {
        return Err(Error::OutOfRange { t, lo: 0.0, hi: maturity });
    }
    let curve = req.resolved_curve();
    let rho_c = Correlation::new(rho)?;
    let mut profile = EpeProfile {
        method: req.method,
        rho,
        times: grid.to_vec(),
        epe: Vec::with_capacity(grid.len()),
        half_width: None,
        independent: None,
    };
    match req.method {
        Method::WwmHazard | Method::WwmMean => {
            let proxy = req.method.proxy().expect("wwm method");
            let adj = DriftAdjustment::for_exposure(&req.exposure, req.model.clone(), curve.clone(), proxy, rho_c);
            let mut base = Vec::with_capacity(grid.len());
            for &t in grid {
                profile.epe.push(wwm_epe(&req.exposure, &adj, t)?.0);
                base.push(independent_epe(&req.exposure, t)?);
            }
            profile.independent = Some(base);
        }
        Method::Copula => {
            for &t in grid {
                profile.epe.push(copula_epe(&req.exposure, curve.as_ref(), rho_c, t)?);
            }
        }
        Method::Independent => {
            for &t in grid {
                profile.epe.push(independent_epe(&req.exposure, t)?);
            }
        }
        Method::McFullTruncation | Method::McReflected => {
            let s = req.mc.expect("validated");
            let scheme = req.method.scheme().expect("mc method");
            let plan = SimulationPlan::new(s.n_paths, s.dt, scheme, s.seed, rho_c, grid.to_vec(), s.n_batches)?;
            let run = mc::simulate(&plan, &req.model, &req.exposure)?;
            let mut hw = Vec::with_capacity(grid.len());
            for &t in grid {
                let e = epe_wwr_mc(&run, curve.as_ref(), t)?;
                profile.epe.push(e.value);
                hw.push(e.half_width);
            }
            profile.half_width = Some(hw);
        }
    }
    Ok(profile)
}

/// CVA of one method relative to the first method of a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub method: Method,
    pub rho: f64,
    pub bps: f64,
    pub half_width_bps: Option<f64>,
    pub delta_bps: f64,
}

/// Prices the request under each method; deltas are against `methods[0]`.
pub fn compare(req: &CvaRequest, methods: &[Method]) -> Result<Vec<Comparison>> {
    let results = methods.iter().map(|&m| price(&req.with_method(m))).collect::<Result<Vec<_>>>()?;
    let Some(reference) = results.first() else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for res in &results {
        for (p, r) in res.points.iter().zip(&reference.points) {
            out.push(Comparison {
                method: res.method,
                rho: p.rho,
                bps: p.bps,
                half_width_bps: p.half_width_bps,
                delta_bps: p.bps - r.bps,
            });
        }
    }
    Ok(out)
}

pub fn comparison_csv(rows: &[Comparison]) -> String {
    let mut out = String::from("method,rho,cva_bps,ci_half_width_bps,delta_bps\n");
    for c in rows {
        let hw = c.half_width_bps.map(fmt_sig).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{}", c.method, fmt_sig(c.rho), fmt_sig(c.bps), hw, fmt_sig(c.delta_bps));
    }
    out
}

/// Settings of the four-set benchmark table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table2Options {
    pub sets: Vec<u8>,
    pub methods: Vec<Method>,
    pub rhos: Vec<f64>,
    pub nu: f64,
    pub maturity: f64,
    pub recovery: f64,
    /// Time steps for the Monte Carlo rows.
    pub deltas: Vec<f64>,
    pub n_paths: usize,
    pub n_batches: usize,
    pub seed: u64,
}

impl Default for Table2Options {
    fn default() -> Self {
        Self {
            sets: vec![1, 2, 3, 4],
            methods: vec![Method::WwmHazard, Method::WwmMean, Method::McFullTruncation, Method::McReflected],
            rhos: vec![-0.8, 0.0, 0.8],
            nu: 0.08,
            maturity: 3.0,
            recovery: 0.0,
            deltas: vec![0.01],
            n_paths: 10_000,
            n_batches: 10,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table2Row {
    pub set: u8,
    /// `None` for the deterministic methods.
    pub dt: Option<f64>,
    pub method: Method,
    pub cva_bps: Vec<f64>,
    pub half_width_bps: Vec<Option<f64>>,
}

/// A semi-analytic figure outside the Monte Carlo tolerance band.
#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub set: u8,
    pub dt: f64,
    pub method: Method,
    pub rho: f64,
    pub wwm_bps: f64,
    pub mc_bps: f64,
    pub mc_half_width_bps: f64,
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "set {} rho={}: {} = {:.2} bps vs mc_full_truncation(dt={}) = {:.2} ± {:.2} bps",
            self.set, self.rho, self.method, self.wwm_bps, self.dt, self.mc_bps, self.mc_half_width_bps
        )
    }
}

/// Divergence test: `|WM − MC| > h + max(1 bp, 10%·|MC|)`, `h` the MC half-width.
pub fn diverges(wwm_bps: f64, mc_bps: f64, mc_half_width_bps: f64) -> bool {
    (wwm_bps - mc_bps).abs() > mc_half_width_bps + (0.1 * mc_bps.abs()).max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table2Report {
    pub rhos: Vec<f64>,
    pub rows: Vec<Table2Row>,
    pub divergences: Vec<Divergence>,
}

impl Table2Report {
    pub fn row(&self, set: u8, method: Method, dt: Option<f64>) -> Option<&Table2Row> {
        self.rows.iter().find(|r| r.set == set && r.method == method && (dt.is_none() || r.dt == dt))
    }

    /// One line per (set, method, δ): CVA and CI per correlation, then the
    /// correlations at which a semi-analytic row departs from full-truncation MC.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("set,delta,method");
        for r in &self.rhos {
            let r = fmt_sig(*r);
            let _ = write!(out, ",cva_bps[rho={r}],ci_half_width_bps[rho={r}]");
        }
        out.push_str(",divergent_rhos\n");
        for row in &self.rows {
            let dt = row.dt.map(fmt_sig).unwrap_or_default();
            let _ = write!(out, "{},{},{}", row.set, dt, row.method);
            for (v, h) in row.cva_bps.iter().zip(&row.half_width_bps) {
                let _ = write!(out, ",{},{}", fmt_sig(*v), h.map(fmt_sig).unwrap_or_default());
            }
            let flagged: Vec<String> = self
                .divergences
                .iter()
                .filter(|d| d.set == row.set && d.method == row.method)
                .map(|d| format!("{}@dt={}", fmt_sig(d.rho), fmt_sig(d.dt)))
                .collect();
            let _ = writeln!(out, ",{}", flagged.join(";"));
        }
        out
    }
}

/// Forward-type benchmark over the parameter sets, with WM/MC divergence flags.
pub fn table2(opts: &Table2Options) -> Result<Table2Report> {
    let exposure = ExposureSpec::forward(opts.nu, opts.maturity)?;
    let mut rows = Vec::new();
    for &set in &opts.sets {
        let model = ShiftedAffineModel::unshifted(LatentModel::Cir(crate::affine::CirParams::table_set(set)?));
        for &method in &opts.methods {
            let deltas: Vec<Option<f64>> =
                if method.is_mc() { opts.deltas.iter().map(|&d| Some(d)).collect() } else { vec![None] };
            for dt in deltas {
                let mut req = CvaRequest::new(exposure.clone(), model.clone(), method, opts.rhos.clone());
                req.recovery = opts.recovery;
                req.mc =
                    dt.map(|dt| McSettings { n_paths: opts.n_paths, n_batches: opts.n_batches, dt, seed: opts.seed });
                let res = price(&req)?;
                rows.push(Table2Row {
                    set,
                    dt,
                    method,
                    cva_bps: res.points.iter().map(|p| p.bps).collect(),
                    half_width_bps: res.points.iter().map(|p| p.half_width_bps).collect(),
                });
            }
        }
    }

    let mut divergences = Vec::new();
    for wm in rows.iter().filter(|r| r.method.is_wwm()) {
        for mc in rows.iter().filter(|r| r.set == wm.set && r.method == Method::McFullTruncation) {
            for (i, &rho) in opts.rhos.iter().enumerate() {
                let hw = mc.half_width_bps[i].unwrap_or(0.0);
                if diverges(wm.cva_bps[i], mc.cva_bps[i], hw) {
                    divergences.push(Divergence {
                        set: wm.set,
                        dt: mc.dt.unwrap_or_default(),
                        method: wm.method,
                        rho,
                        wwm_bps: wm.cva_bps[i],
                        mc_bps: mc.cva_bps[i],
                        mc_half_width_bps: hw,
                    });
                }
            }
        }
    }
    Ok(Table2Report { rhos: opts.rhos.clone(), rows, divergences })
}
