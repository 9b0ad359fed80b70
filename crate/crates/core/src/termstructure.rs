//! Survival curves, hazard rates and the deterministic intensity shift.
//!
//! A [`SurvivalCurve`] stores `ln G` at its knots and interpolates linearly in
//! `ln G`, so the hazard rate is piecewise constant and every integral of it is
//! exact. The [`ShiftFunction`] uses the same convention for `ψ`.

use std::io::{Read, Write};

use crate::error::{check_range, Error, Result};

/// Slopes of Ψ above this are treated as round-off, not a negative shift.
const NEGATIVE_SHIFT_TOL: f64 = 1e-12;

/// Anything that can provide a survival probability and hazard rate.
pub trait CreditCurve: Send + Sync {
    /// G(t)
    fn survival(&self, t: f64) -> Result<f64>;
    /// h(t) = −d/dt ln G(t), right limit at knots.
    fn hazard_rate(&self, t: f64) -> Result<f64>;
    /// Last time covered by the curve.
    fn horizon(&self) -> f64;
}

/// Market survival curve on a time grid, piecewise-linear in `ln G`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    grid: Vec<f64>,
    log_g: Vec<f64>,
}

impl SurvivalCurve {
    /// Builds a curve from survival probabilities at the grid points.
    pub fn new(grid: Vec<f64>, survival: Vec<f64>) -> Result<Self> {
        if let Some(&g) = survival.iter().find(|g| !(**g > 0.0 && **g <= 1.0)) {
            return Err(Error::InvalidCurve(format!("survival probability {g} outside (0, 1]")));
        }
        let log_g = survival.iter().map(|g| g.ln()).collect();
        Self::from_log_survival(grid, log_g)
    }

    /// Builds a curve from `ln G` values at the grid points.
    pub fn from_log_survival(grid: Vec<f64>, log_g: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != log_g.len() {
            return Err(Error::InvalidCurve("need at least two knots and matching lengths".into()));
        }
        if grid[0] != 0.0 {
            return Err(Error::InvalidCurve("grid must start at t = 0".into()));
        }
        if log_g[0] != 0.0 {
            return Err(Error::InvalidCurve("G(0) must equal 1".into()));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidCurve("grid must be strictly ascending".into()));
        }
        if log_g.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidCurve("non-finite survival value".into()));
        }
        if log_g.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidCurve("survival probability must be non-increasing".into()));
        }
        Ok(Self { grid, log_g })
    }

    /// Flat hazard curve `G(t) = exp(−hazard·t)` on `[0, horizon]`.
    pub fn flat(hazard: f64, horizon: f64) -> Result<Self> {
        if !(hazard >= 0.0) || !(horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "flat curve needs hazard >= 0 and horizon > 0, got {hazard}, {horizon}"
            )));
        }
        Self::from_log_survival(vec![0.0, horizon], vec![0.0, -hazard * horizon])
    }

    /// Samples a bond-price function `t → P(0,t)` at the given knots.
    pub fn from_bond_fn<F: Fn(f64) -> f64>(grid: Vec<f64>, bond: F) -> Result<Self> {
        let log_g = grid.iter().map(|&t| if t == 0.0 { 0.0 } else { bond(t).ln() }).collect();
        Self::from_log_survival(grid, log_g)
    }

    /// Same curve with extra knots so that no spacing exceeds `max_step`.
    pub fn refined(&self, max_step: f64) -> Result<Self> {
        if !(max_step > 0.0) {
            return Err(Error::InvalidParameter(format!("max_step must be positive, got {max_step}")));
        }
        let mut grid = vec![self.grid[0]];
        for w in self.grid.windows(2) {
            let n = ((w[1] - w[0]) / max_step).ceil().max(1.0) as usize;
            grid.extend((1..n).map(|k| w[0] + (w[1] - w[0]) * k as f64 / n as f64));
            grid.push(w[1]);
        }
        let log_g = grid.iter().map(|&t| self.log_survival(t)).collect::<Result<Vec<_>>>()?;
        Self::from_log_survival(grid, log_g)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn log_survival_knots(&self) -> &[f64] {
        &self.log_g
    }

    /// Index `i` of the segment `[t_i, t_{i+1})` holding `t`; the last knot maps
    /// to the last segment.
    fn segment(&self, t: f64) -> usize {
        let n = self.grid.len();
        let i = self.grid.partition_point(|&x| x <= t);
        i.saturating_sub(1).min(n - 2)
    }

    fn slope(&self, i: usize) -> f64 {
        (self.log_g[i + 1] - self.log_g[i]) / (self.grid[i + 1] - self.grid[i])
    }

    /// ln G(t)
    pub fn log_survival(&self, t: f64) -> Result<f64> {
        check_range(t, 0.0, self.horizon())?;
        let i = self.segment(t);
        Ok(self.log_g[i] + self.slope(i) * (t - self.grid[i]))
    }

    /// Reads a curve from CSV with header `t,G`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
        if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "G" {
            return Err(Error::Parse(format!("expected header `t,G`, got {headers:?}")));
        }
        let (mut grid, mut g) = (Vec::new(), Vec::new());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("row {}: {s:?}: {e}", line + 2)));
            grid.push(parse(&rec[0])?);
            g.push(parse(&rec[1])?);
        }
        if grid.first() != Some(&0.0) || g.first() != Some(&1.0) {
            return Err(Error::Parse("first row must be `0,1`".into()));
        }
        Self::new(grid, g)
    }

    /// Writes the curve knots as CSV with header `t,G`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,G")?;
        for (t, l) in self.grid.iter().zip(&self.log_g) {
            writeln!(out, "{},{}", crate::fmt_sig(*t), crate::fmt_sig(l.exp()))?;
        }
        Ok(())
    }
}

impl CreditCurve for SurvivalCurve {
    fn survival(&self, t: f64) -> Result<f64> {
        Ok(self.log_survival(t)?.exp())
    }

    fn hazard_rate(&self, t: f64) -> Result<f64> {
        check_range(t, 0.0, self.horizon())?;
        Ok(-self.slope(self.segment(t)))
    }

    fn horizon(&self) -> f64 {
        *self.grid.last().expect("non-empty grid")
    }
}

/// Deterministic shift `ψ(t)` with running integral `Ψ(t)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ShiftFunction {
    #[default]
    Zero,
    Constant(f64),
    /// `Ψ` tabulated at knots, linear in between (so `ψ` is piecewise constant).
    /// Outside the grid the first/last slope is extended.
    Piecewise {
        grid: Vec<f64>,
        integral: Vec<f64>,
    },
}

impl ShiftFunction {
    /// ψ(t), right limit at knots.
    pub fn psi(&self, t: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant(c) => *c,
            Self::Piecewise { grid, integral } => {
                let i = piecewise_segment(grid, t);
                (integral[i + 1] - integral[i]) / (grid[i + 1] - grid[i])
            }
        }
    }

    /// Ψ(t) = ∫₀ᵗ ψ(u) du
    pub fn integral(&self, t: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant(c) => c * t,
            Self::Piecewise { grid, integral } => {
                let i = piecewise_segment(grid, t);
                let slope = (integral[i + 1] - integral[i]) / (grid[i + 1] - grid[i]);
                integral[i] + slope * (t - grid[i])
            }
        }
    }

    /// Ψ(s,t) = Ψ(t) − Ψ(s)
    pub fn integral_between(&self, s: f64, t: f64) -> f64 {
        self.integral(t) - self.integral(s)
    }

    /// True when ψ takes negative values somewhere, in which case the shifted
    /// intensity may become negative.
    pub fn has_negative(&self) -> bool {
        match self {
            Self::Zero => false,
            Self::Constant(c) => *c < 0.0,
            Self::Piecewise { grid, integral } => grid
                .windows(2)
                .zip(integral.windows(2))
                .any(|(g, i)| (i[1] - i[0]) / (g[1] - g[0]) < -NEGATIVE_SHIFT_TOL),
        }
    }

    /// Knot times and `(ψ, Ψ)` values; `Zero`/`Constant` report the single knot `0`.
    pub fn knots(&self) -> Vec<(f64, f64, f64)> {
        match self {
            Self::Piecewise { grid, .. } => grid.iter().map(|&t| (t, self.psi(t), self.integral(t))).collect(),
            _ => vec![(0.0, self.psi(0.0), 0.0)],
        }
    }

    pub fn max_abs_psi(&self) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant(c) => c.abs(),
            Self::Piecewise { grid, integral } => grid
                .windows(2)
                .zip(integral.windows(2))
                .map(|(g, i)| ((i[1] - i[0]) / (g[1] - g[0])).abs())
                .fold(0.0, f64::max),
        }
    }
}

fn piecewise_segment(grid: &[f64], t: f64) -> usize {
    let i = grid.partition_point(|&x| x <= t);
    i.saturating_sub(1).min(grid.len() - 2)
}

/// Implies the shift that makes a latent model reproduce `market`:
/// `Ψ(t) = ln P^y(0,t) − ln G(t)` at every market knot.
pub fn calibrate_shift<F: FnMut(f64) -> f64>(mut model_bond: F, market: &SurvivalCurve) -> Result<ShiftFunction> {
    let grid = market.grid().to_vec();
    let mut integral = Vec::with_capacity(grid.len());
    for (&t, &lg) in grid.iter().zip(market.log_survival_knots()) {
        if t == 0.0 {
            integral.push(0.0);
            continue;
        }
        let p = model_bond(t);
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::Domain(format!("model bond price {p} at t={t} is not positive")));
        }
        integral.push(p.ln() - lg);
    }
    Ok(ShiftFunction::Piecewise { grid, integral })
}
