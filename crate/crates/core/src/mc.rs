//! Full bivariate Monte Carlo: correlated exposure and intensity paths on an
//! Euler grid, survival-weighted EPE estimators and the Gaussian-copula
//! resampling baseline.
//!
//! Every path owns a ChaCha stream selected by its global index
//! (`batch · n_paths + path`), and per-chunk partial sums are reduced in a fixed
//! order, so results do not depend on the number of worker threads.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::affine::{CirParams, JcirParams, LatentModel, ShiftedAffineModel};
use crate::error::{Error, Result};
use crate::exposure::{positive_part, q_moments, ExposureSpec};
use crate::normal;
use crate::termstructure::CreditCurve;
use crate::wwm::Correlation;

/// Paths simulated sequentially by one work unit.
const CHUNK: usize = 256;

/// Euler discretization of the square-root diffusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// `y ← |y + κ(θ − y)δ + σ√(δy) z|`, never negative.
    Reflected,
    /// `y ← y + κ(θ − y⁺)δ + σ√(δy⁺) z`, may go negative.
    FullTruncation,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Self::Reflected => "reflected",
            Self::FullTruncation => "full_truncation",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reflected" => Ok(Self::Reflected),
            "full_truncation" | "full-truncation" => Ok(Self::FullTruncation),
            _ => Err(Error::Parse(format!("unknown scheme {s:?}"))),
        }
    }
}

/// One Euler step of the CIR latent process.
pub fn step_cir(y: f64, z: f64, p: &CirParams, dt: f64, scheme: Scheme) -> f64 {
    match scheme {
        Scheme::Reflected => {
            let y = y.max(0.0);
            (y + p.kappa * (p.theta - y) * dt + p.sigma * (dt * y).sqrt() * z).abs()
        }
        Scheme::FullTruncation => {
            let yp = y.max(0.0);
            y + p.kappa * (p.theta - yp) * dt + p.sigma * (dt * yp).sqrt() * z
        }
    }
}

/// Compound Poisson increment over one period: `N ~ Poisson(α·dt)` exponential jumps of mean γ.
pub fn simulate_jcir_increment<R: Rng + ?Sized>(p: &JcirParams, dt: f64, rng: &mut R) -> f64 {
    let rate = p.jump_rate * dt;
    if rate <= 0.0 {
        return 0.0;
    }
    let count: f64 = Poisson::new(rate).expect("positive Poisson rate").sample(rng);
    let size = Exp::new(1.0 / p.jump_mean).expect("positive jump mean");
    (0..count as u64).map(|_| size.sample(rng)).sum()
}

/// Monte Carlo configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationPlan {
    pub n_paths: usize,
    pub dt: f64,
    pub scheme: Scheme,
    pub seed: u64,
    pub rho: Correlation,
    /// Output times, ascending multiples of `dt`.
    pub grid: Vec<f64>,
    pub n_batches: usize,
}

impl SimulationPlan {
    pub fn new(
        n_paths: usize,
        dt: f64,
        scheme: Scheme,
        seed: u64,
        rho: Correlation,
        grid: Vec<f64>,
        n_batches: usize,
    ) -> Result<Self> {
        let plan = Self { n_paths, dt, scheme, seed, rho, grid, n_batches };
        plan.validate()?;
        Ok(plan)
    }

    /// Plan whose output grid is every step of `[0, horizon]`.
    pub fn every_step(
        n_paths: usize,
        dt: f64,
        scheme: Scheme,
        seed: u64,
        rho: Correlation,
        horizon: f64,
        n_batches: usize,
    ) -> Result<Self> {
        if !(dt > 0.0) || !(horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("need dt > 0 and horizon > 0, got {dt}, {horizon}")));
        }
        let steps = (horizon / dt).round() as usize;
        let grid = (0..=steps).map(|k| k as f64 * dt).collect();
        Self::new(n_paths, dt, scheme, seed, rho, grid, n_batches)
    }

    pub fn with_rho(&self, rho: Correlation) -> Self {
        Self { rho, ..self.clone() }
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 || self.n_batches == 0 {
            return Err(Error::InvalidParameter("n_paths and n_batches must be >= 1".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if self.grid.is_empty() || self.grid.windows(2).any(|w| !(w[1] > w[0])) || self.grid[0] < 0.0 {
            return Err(Error::InvalidParameter("grid must be non-empty, ascending and non-negative".into()));
        }
        for &t in &self.grid {
            let k = (t / self.dt).round();
            if (k * self.dt - t).abs() > 1e-12 * t.max(1.0) {
                return Err(Error::InvalidParameter(format!("grid time {t} is not a multiple of dt={}", self.dt)));
            }
        }
        Ok(())
    }

    fn step_index(&self, t: f64) -> usize {
        (t / self.dt).round() as usize
    }

    pub fn n_steps(&self) -> usize {
        self.step_index(*self.grid.last().expect("validated grid"))
    }

    pub fn horizon(&self) -> f64 {
        *self.grid.last().expect("validated grid")
    }
}

/// State of one path at an output time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathState {
    /// Exposure `V_t`.
    pub v: f64,
    /// Latent intensity `y_t` as produced by the scheme.
    pub y: f64,
    /// Running `∫ y⁺ du` (trapezoid; plain `y` for OU).
    pub integral_y: f64,
    /// `λ_t` used for survival weighting.
    pub lambda: f64,
    /// `Λ_t = ∫₀ᵗ λ du`.
    pub cumulative: f64,
}

impl PathState {
    /// `S_t = exp(−Λ_t)`
    pub fn survival(&self) -> f64 {
        (-self.cumulative).exp()
    }
}

struct Kernel<'a> {
    plan: &'a SimulationPlan,
    model: &'a ShiftedAffineModel,
    spec: &'a ExposureSpec,
    /// step index → grid index
    marks: Vec<Option<usize>>,
}

impl<'a> Kernel<'a> {
    fn new(plan: &'a SimulationPlan, model: &'a ShiftedAffineModel, spec: &'a ExposureSpec) -> Result<Self> {
        plan.validate()?;
        if let ExposureSpec::Swap { maturity, .. } = spec {
            if plan.horizon() > maturity + 1e-12 {
                return Err(Error::OutOfRange { t: plan.horizon(), lo: 0.0, hi: *maturity });
            }
        }
        let mut marks = vec![None; plan.n_steps() + 1];
        for (i, &t) in plan.grid.iter().enumerate() {
            marks[plan.step_index(t)] = Some(i);
        }
        Ok(Self { plan, model, spec, marks })
    }

    fn floor(&self, y: f64) -> f64 {
        if self.model.base.is_square_root() {
            y.max(0.0)
        } else {
            y
        }
    }

    fn state(&self, v: f64, y: f64, integral_y: f64, t: f64) -> PathState {
        let shift = &self.model.shift;
        PathState { v, y, integral_y, lambda: self.floor(y) + shift.psi(t), cumulative: integral_y + shift.integral(t) }
    }

    fn run<F: FnMut(usize, &PathState)>(&self, path_id: u64, mut observe: F) {
        let plan = self.plan;
        let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
        rng.set_stream(path_id);
        let dt = plan.dt;
        let sqdt = dt.sqrt();
        let rho = plan.rho.value();
        let rho_perp = (1.0 - rho * rho).max(0.0).sqrt();

        let mut v = match self.spec {
            ExposureSpec::Lognormal { v0, .. } => *v0,
            _ => 0.0,
        };
        let mut y = self.model.base.y0();
        let mut integral_y = 0.0;
        if let Some(i) = self.marks[0] {
            observe(i, &self.state(v, y, integral_y, 0.0));
        }
        for step in 0..plan.n_steps() {
            let s = step as f64 * dt;
            let t = (step + 1) as f64 * dt;
            let z_lambda: f64 = rng.sample(StandardNormal);
            let z_perp: f64 = rng.sample(StandardNormal);
            let z_v = rho * z_lambda + rho_perp * z_perp;

            let y_next = match &self.model.base {
                LatentModel::Ou(p) => y + p.kappa * (p.theta - y) * dt + p.sigma * sqdt * z_lambda,
                LatentModel::Cir(p) => step_cir(y, z_lambda, p, dt, plan.scheme),
                LatentModel::Jcir(p) => {
                    step_cir(y, z_lambda, &p.cir, dt, plan.scheme) + simulate_jcir_increment(p, dt, &mut rng)
                }
            };
            v = match self.spec {
                ExposureSpec::Forward { nu, .. } => v + nu * sqdt * z_v,
                ExposureSpec::Swap { nu, gamma_v, maturity } => {
                    // exact transition of d(V/(T−u)) = γ du + ν dW/(T−u)
                    let left = maturity - s;
                    let right = maturity - t;
                    if right <= dt * 1e-9 {
                        0.0
                    } else {
                        let sd = (1.0 / right - 1.0 / left).sqrt();
                        right * (v / left + gamma_v * dt + nu * sd * z_v)
                    }
                }
                ExposureSpec::Lognormal { nu, drift, .. } => {
                    v * ((drift.value(s) - 0.5 * nu * nu) * dt + nu * sqdt * z_v).exp()
                }
            };
            integral_y += 0.5 * (self.floor(y) + self.floor(y_next)) * dt;
            y = y_next;
            if let Some(i) = self.marks[step + 1] {
                observe(i, &self.state(v, y, integral_y, t));
            }
        }
    }
}

/// Raw per-path states at every output time.
#[derive(Debug, Clone)]
pub struct PathSet {
    pub grid: Vec<f64>,
    pub n_batches: usize,
    pub paths_per_batch: usize,
    /// `states[grid_index][global_path_index]`
    pub states: Vec<Vec<PathState>>,
}

impl PathSet {
    /// Reduces the stored paths to per-batch sums.
    pub fn summarize(&self) -> MonteCarloRun {
        let batches = (0..self.n_batches)
            .map(|b| {
                let range = b * self.paths_per_batch..(b + 1) * self.paths_per_batch;
                self.states
                    .iter()
                    .map(|col| {
                        let mut g = GridSums::default();
                        col[range.clone()].iter().for_each(|st| g.add(st));
                        g
                    })
                    .collect()
            })
            .collect();
        MonteCarloRun { grid: self.grid.clone(), paths_per_batch: self.paths_per_batch, batches }
    }
}

/// Simulates and stores every path state on the plan grid.
///
/// The swap-type exposure uses its exact Gaussian transition over each step
/// (driven by the same correlated draw), so it is pinned to 0 at maturity.
pub fn simulate_paths(plan: &SimulationPlan, model: &ShiftedAffineModel, spec: &ExposureSpec) -> Result<PathSet> {
    let kernel = Kernel::new(plan, model, spec)?;
    let total = plan.n_paths * plan.n_batches;
    let per_path: Vec<Vec<PathState>> = (0..total)
        .into_par_iter()
        .with_min_len(CHUNK)
        .map(|id| {
            let mut row = Vec::with_capacity(plan.grid.len());
            kernel.run(id as u64, |_, st| row.push(*st));
            row
        })
        .collect();
    let mut states = vec![Vec::with_capacity(total); plan.grid.len()];
    for row in per_path {
        for (col, st) in states.iter_mut().zip(row) {
            col.push(st);
        }
    }
    Ok(PathSet { grid: plan.grid.clone(), n_batches: plan.n_batches, paths_per_batch: plan.n_paths, states })
}

/// Per-grid-time sums accumulated over a batch of paths.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GridSums {
    pub count: usize,
    /// Σ V⁺λS and its square
    pub weighted_epe: f64,
    pub weighted_epe_sq: f64,
    /// Σ S and its square
    pub survival: f64,
    pub survival_sq: f64,
    /// Σ λS and its square
    pub lambda_survival: f64,
    pub lambda_survival_sq: f64,
    pub lambda: f64,
    pub v: f64,
    pub v_sq: f64,
    pub v_pos: f64,
    pub negative_y: usize,
}

impl GridSums {
    fn add(&mut self, st: &PathState) {
        let s = st.survival();
        let ls = st.lambda * s;
        let w = st.v.max(0.0) * ls;
        self.count += 1;
        self.weighted_epe += w;
        self.weighted_epe_sq += w * w;
        self.survival += s;
        self.survival_sq += s * s;
        self.lambda_survival += ls;
        self.lambda_survival_sq += ls * ls;
        self.lambda += st.lambda;
        self.v += st.v;
        self.v_sq += st.v * st.v;
        self.v_pos += st.v.max(0.0);
        self.negative_y += usize::from(st.y < 0.0);
    }

    fn merge(&mut self, o: &GridSums) {
        self.count += o.count;
        self.weighted_epe += o.weighted_epe;
        self.weighted_epe_sq += o.weighted_epe_sq;
        self.survival += o.survival;
        self.survival_sq += o.survival_sq;
        self.lambda_survival += o.lambda_survival;
        self.lambda_survival_sq += o.lambda_survival_sq;
        self.lambda += o.lambda;
        self.v += o.v;
        self.v_sq += o.v_sq;
        self.v_pos += o.v_pos;
        self.negative_y += o.negative_y;
    }
}

/// Summary statistics of a simulation, one `Vec<GridSums>` per batch.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloRun {
    pub grid: Vec<f64>,
    pub paths_per_batch: usize,
    pub batches: Vec<Vec<GridSums>>,
}

/// Simulates the plan and keeps only per-batch sums (constant memory in `n_paths`).
pub fn simulate(plan: &SimulationPlan, model: &ShiftedAffineModel, spec: &ExposureSpec) -> Result<MonteCarloRun> {
    let kernel = Kernel::new(plan, model, spec)?;
    let n_grid = plan.grid.len();
    let batches = (0..plan.n_batches)
        .map(|b| {
            let n_chunks = plan.n_paths.div_ceil(CHUNK);
            let partials: Vec<Vec<GridSums>> = (0..n_chunks)
                .into_par_iter()
                .map(|c| {
                    let mut sums = vec![GridSums::default(); n_grid];
                    let lo = c * CHUNK;
                    let hi = (lo + CHUNK).min(plan.n_paths);
                    for p in lo..hi {
                        let id = (b * plan.n_paths + p) as u64;
                        kernel.run(id, |i, st| sums[i].add(st));
                    }
                    sums
                })
                .collect();
            let mut total = vec![GridSums::default(); n_grid];
            for part in &partials {
                for (acc, p) in total.iter_mut().zip(part) {
                    acc.merge(p);
                }
            }
            total
        })
        .collect();
    Ok(MonteCarloRun { grid: plan.grid.clone(), paths_per_batch: plan.n_paths, batches })
}

/// Monte Carlo estimate with a confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateWithCI {
    pub value: f64,
    /// Twice the across-batch standard deviation (or twice the path-level
    /// standard error when there is a single batch).
    pub half_width: f64,
}

impl EstimateWithCI {
    pub fn contains(&self, x: f64) -> bool {
        (x - self.value).abs() <= self.half_width
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { value: self.value * k, half_width: self.half_width * k.abs() }
    }
}

fn batch_estimate(values: &[f64], single_batch_se: impl FnOnce() -> f64) -> EstimateWithCI {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let half_width = if values.len() > 1 {
        let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        2.0 * var.sqrt()
    } else {
        2.0 * single_batch_se()
    };
    EstimateWithCI { value: mean, half_width }
}

fn standard_error(sum: f64, sum_sq: f64, n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (var / nf).sqrt()
}

impl MonteCarloRun {
    pub fn grid_index(&self, t: f64) -> Result<usize> {
        self.grid
            .iter()
            .position(|&g| (g - t).abs() <= 1e-9 * t.abs().max(1.0))
            .ok_or_else(|| Error::InvalidParameter(format!("time {t} is not on the simulation grid")))
    }

    /// Sums pooled over all batches at grid index `i`.
    pub fn pooled(&self, i: usize) -> GridSums {
        let mut g = GridSums::default();
        for b in &self.batches {
            g.merge(&b[i]);
        }
        g
    }

    /// `E[S_t]` with its standard error.
    pub fn survival_mean(&self, t: f64) -> Result<(f64, f64)> {
        let g = self.pooled(self.grid_index(t)?);
        Ok((g.survival / g.count as f64, standard_error(g.survival, g.survival_sq, g.count)))
    }

    /// `E[λ_t]`
    pub fn intensity_mean(&self, t: f64) -> Result<f64> {
        let g = self.pooled(self.grid_index(t)?);
        Ok(g.lambda / g.count as f64)
    }

    /// Sample mean and standard deviation of `V_t`.
    pub fn exposure_moments(&self, t: f64) -> Result<(f64, f64)> {
        let g = self.pooled(self.grid_index(t)?);
        let n = g.count as f64;
        let mean = g.v / n;
        Ok((mean, ((g.v_sq - n * mean * mean) / (n - 1.0)).max(0.0).sqrt()))
    }

    /// Mean of `ζ_t = λ_t S_t / (h(t)G(t))` with its standard error.
    pub fn zeta_mean(&self, curve: &dyn CreditCurve, t: f64) -> Result<(f64, f64)> {
        let norm = density(curve, t)?;
        let g = self.pooled(self.grid_index(t)?);
        let n = g.count as f64;
        Ok((g.lambda_survival / n / norm, standard_error(g.lambda_survival, g.lambda_survival_sq, g.count) / norm))
    }

    /// Fraction of negative latent samples at `t`.
    pub fn negative_fraction(&self, t: f64) -> Result<f64> {
        let g = self.pooled(self.grid_index(t)?);
        Ok(g.negative_y as f64 / g.count as f64)
    }

    /// Per-batch `(1 − R)·∫ E[V⁺λS] dt` by the trapezoid rule on the output grid.
    pub fn cva(&self, recovery: f64) -> EstimateWithCI {
        let per_batch: Vec<f64> = self
            .batches
            .iter()
            .map(|b| {
                let f: Vec<f64> = b.iter().map(|g| g.weighted_epe / g.count as f64).collect();
                (1.0 - recovery) * trapezoid(&self.grid, &f)
            })
            .collect();
        batch_estimate(&per_batch, || {
            // single batch: propagate path-level errors assuming perfect correlation across t
            let b = &self.batches[0];
            let se: Vec<f64> = b.iter().map(|g| standard_error(g.weighted_epe, g.weighted_epe_sq, g.count)).collect();
            (1.0 - recovery) * trapezoid(&self.grid, &se)
        })
    }

    /// Time points and the EPE estimate at each.
    pub fn epe_profile(&self, curve: &dyn CreditCurve) -> Result<Vec<(f64, EstimateWithCI)>> {
        self.grid.iter().map(|&t| Ok((t, epe_wwr_mc(self, curve, t)?))).collect()
    }
}

/// Writes an EPE profile as CSV `t,epe,ci_half_width`.
pub fn write_epe_csv<W: std::io::Write>(profile: &[(f64, EstimateWithCI)], mut out: W) -> Result<()> {
    writeln!(out, "t,epe,ci_half_width")?;
    for (t, e) in profile {
        writeln!(out, "{},{},{}", crate::fmt_sig(*t), crate::fmt_sig(e.value), crate::fmt_sig(e.half_width))?;
    }
    Ok(())
}

fn density(curve: &dyn CreditCurve, t: f64) -> Result<f64> {
    let d = curve.hazard_rate(t)? * curve.survival(t)?;
    if !(d > 0.0) {
        return Err(Error::DegenerateCurve { t });
    }
    Ok(d)
}

pub(crate) fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xs, ys)| 0.5 * (ys[0] + ys[1]) * (xs[1] - xs[0])).sum()
}

/// `EPE(t) = E[V_t⁺ λ_t S_t] / (h(t)G(t))` per batch, with the batch spread as CI.
pub fn epe_wwr_mc(run: &MonteCarloRun, curve: &dyn CreditCurve, t: f64) -> Result<EstimateWithCI> {
    let i = run.grid_index(t)?;
    let norm = density(curve, t)?;
    let values: Vec<f64> = run.batches.iter().map(|b| b[i].weighted_epe / b[i].count as f64 / norm).collect();
    Ok(batch_estimate(&values, || {
        let g = &run.batches[0][i];
        standard_error(g.weighted_epe, g.weighted_epe_sq, g.count) / norm
    }))
}

/// EPE conditional on default at `t` under a Gaussian copula between `V_t` and `τ`:
/// `μ^ρ = μ + ρσΦ⁻¹(G(t))`, `σ^ρ = σ√(1 − ρ²)`.
pub fn copula_epe(spec: &ExposureSpec, curve: &dyn CreditCurve, rho: Correlation, t: f64) -> Result<f64> {
    if !spec.is_gaussian() {
        return Err(Error::Unsupported("the Gaussian copula needs a Gaussian exposure".into()));
    }
    let (mu, sigma) = q_moments(spec, t)?;
    if sigma == 0.0 {
        return Ok(mu.max(0.0));
    }
    let g = curve.survival(t)?;
    if !(g > 0.0 && g < 1.0) {
        return Err(Error::Domain(format!("copula needs 0 < G(t) < 1, got G({t}) = {g}")));
    }
    let r = rho.value();
    let mean = mu + r * sigma * normal::inv_cdf(g);
    let stdev = sigma * (1.0 - r * r).max(0.0).sqrt();
    Ok(positive_part(mean, stdev))
}
