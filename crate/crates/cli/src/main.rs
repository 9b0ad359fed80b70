use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use wwr_core::affine::{CirParams, JcirParams, LatentModel, ShiftedAffineModel};
use wwr_core::engine::{self, CurveSource, CvaRequest, McSettings, Method, Table2Options};
use wwr_core::exposure::{ExposureSpec, RateFunction};
use wwr_core::fmt_sig;
use wwr_core::mc::Scheme;
use wwr_core::termstructure::SurvivalCurve;

#[derive(Parser)]
#[command(name = "wwr-cva", version, about = "CVA under wrong-way risk")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand)]
enum Command {
    /// EPE profile to CSV
    Epe,
    /// CVA for one request
    Cva,
    /// Four-set benchmark table
    Table2,
    /// Shift function implied by a curve CSV
    Calibrate,
    /// CVA deltas between methods
    Compare,
}

/// Every flag is also accepted as `key=value` in the `--config` file; flags win.
#[derive(Args, Default)]
struct Opts {
    /// Flat key=value file with the same keys as the flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Parameter set 1..4 (comma list for table2)
    #[arg(long, global = true)]
    set: Option<String>,
    /// forward, swap or lognormal
    #[arg(long, global = true)]
    exposure: Option<String>,
    #[arg(long, global = true)]
    nu: Option<String>,
    #[arg(long = "gamma-v", global = true)]
    gamma_v: Option<String>,
    #[arg(long, global = true)]
    maturity: Option<String>,
    /// Initial value of a lognormal exposure
    #[arg(long, global = true)]
    v0: Option<String>,
    /// Constant drift of a lognormal exposure
    #[arg(long, global = true)]
    drift: Option<String>,
    /// JCIR jump arrival rate (turns the model into JCIR)
    #[arg(long = "jump-rate", global = true)]
    jump_rate: Option<String>,
    /// JCIR mean jump size
    #[arg(long = "jump-mean", global = true)]
    jump_mean: Option<String>,
    /// Comma-separated correlations
    #[arg(long, global = true, allow_hyphen_values = true)]
    rho: Option<String>,
    /// Method name (comma list for table2 and compare)
    #[arg(long, global = true)]
    method: Option<String>,
    #[arg(long, global = true)]
    paths: Option<String>,
    /// Time step (comma list for table2)
    #[arg(long, global = true)]
    dt: Option<String>,
    /// reflected or full_truncation; selects the MC method variant
    #[arg(long, global = true)]
    scheme: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    batches: Option<String>,
    #[arg(long, global = true)]
    recovery: Option<String>,
    /// Survival curve CSV with header `t,G`
    #[arg(long, global = true)]
    curve: Option<PathBuf>,
    /// Output CSV (stdout when absent)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of profile intervals on [0, maturity]
    #[arg(long, global = true)]
    steps: Option<String>,
    /// Worker threads
    #[arg(long, global = true)]
    workers: Option<String>,
}

struct Settings(HashMap<String, String>);

impl Settings {
    fn load(opts: &Opts) -> Result<Self> {
        let mut map = HashMap::new();
        if let Some(path) = &opts.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            for (n, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((k, v)) = line.split_once('=') else {
                    bail!("{}:{}: expected key=value", path.display(), n + 1);
                };
                map.insert(k.trim().replace('_', "-"), v.trim().to_string());
            }
        }
        let cli: [(&str, Option<String>); 20] = [
            ("set", opts.set.clone()),
            ("exposure", opts.exposure.clone()),
            ("nu", opts.nu.clone()),
            ("gamma-v", opts.gamma_v.clone()),
            ("maturity", opts.maturity.clone()),
            ("v0", opts.v0.clone()),
            ("drift", opts.drift.clone()),
            ("jump-rate", opts.jump_rate.clone()),
            ("jump-mean", opts.jump_mean.clone()),
            ("rho", opts.rho.clone()),
            ("method", opts.method.clone()),
            ("paths", opts.paths.clone()),
            ("dt", opts.dt.clone()),
            ("scheme", opts.scheme.clone()),
            ("seed", opts.seed.clone()),
            ("batches", opts.batches.clone()),
            ("recovery", opts.recovery.clone()),
            ("curve", opts.curve.as_ref().map(|p| p.display().to_string())),
            ("out", opts.out.as_ref().map(|p| p.display().to_string())),
            ("steps", opts.steps.clone()),
        ];
        for (k, v) in cli {
            if let Some(v) = v {
                map.insert(k.to_string(), v);
            }
        }
        if let Some(w) = &opts.workers {
            map.insert("workers".into(), w.clone());
        }
        Ok(Self(map))
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            Some(v) => v.parse().map_err(|e| anyhow::anyhow!("--{key} {v:?}: {e}")),
            None => Ok(default),
        }
    }

    fn list<T: FromStr>(&self, key: &str, default: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .unwrap_or(default)
            .split(',')
            .map(|s| s.trim().parse().map_err(|e| anyhow::anyhow!("--{key} {s:?}: {e}")))
            .collect()
    }

    fn model(&self) -> Result<LatentModel> {
        let set: u8 = self.get("set", 2)?;
        let cir = CirParams::table_set(set)?;
        Ok(match self.raw("jump-rate") {
            Some(_) => {
                LatentModel::Jcir(JcirParams::new(cir, self.get("jump-rate", 0.1)?, self.get("jump-mean", 0.1)?)?)
            }
            None => LatentModel::Cir(cir),
        })
    }

    fn exposure(&self) -> Result<ExposureSpec> {
        let nu = self.get("nu", 0.08)?;
        let maturity = self.get("maturity", 3.0)?;
        Ok(match self.raw("exposure").unwrap_or("forward") {
            "forward" => ExposureSpec::forward(nu, maturity)?,
            "swap" => ExposureSpec::swap(nu, self.get("gamma-v", 0.0)?, maturity)?,
            "lognormal" => ExposureSpec::lognormal(
                nu,
                self.get("v0", 1.0)?,
                RateFunction::Constant(self.get("drift", 0.0)?),
                maturity,
            )?,
            other => bail!("unknown exposure {other:?}"),
        })
    }

    fn curve(&self) -> Result<Option<SurvivalCurve>> {
        self.raw("curve")
            .map(|p| {
                let f = fs::File::open(p).with_context(|| format!("opening {p}"))?;
                Ok(SurvivalCurve::read_csv(f)?)
            })
            .transpose()
    }

    fn method_with_scheme(&self, m: Method) -> Result<Method> {
        if !m.is_mc() {
            return Ok(m);
        }
        Ok(match self.raw("scheme").map(Scheme::from_str).transpose()? {
            Some(Scheme::Reflected) => Method::McReflected,
            Some(Scheme::FullTruncation) => Method::McFullTruncation,
            None => m,
        })
    }

    fn mc(&self) -> Result<McSettings> {
        let d = McSettings::default();
        Ok(McSettings {
            n_paths: self.get("paths", d.n_paths)?,
            n_batches: self.get("batches", d.n_batches)?,
            dt: self.get("dt", d.dt)?,
            seed: self.get("seed", d.seed)?,
        })
    }

    fn request(&self, method: Method) -> Result<CvaRequest> {
        let base = self.model()?;
        let exposure = self.exposure()?;
        let (model, curve) = match self.curve()? {
            Some(c) => (ShiftedAffineModel::calibrated(base, &c)?, CurveSource::Market(c)),
            None => (ShiftedAffineModel::unshifted(base), CurveSource::ModelImplied),
        };
        let method = self.method_with_scheme(method)?;
        Ok(CvaRequest {
            exposure,
            model,
            curve,
            rho_list: self.list("rho", "0")?,
            recovery: self.get("recovery", 0.0)?,
            method,
            mc: method.is_mc().then(|| self.mc()).transpose()?,
        })
    }

    fn emit(&self, text: &str) -> Result<()> {
        match self.raw("out") {
            Some(p) => fs::write(Path::new(p), text).with_context(|| format!("writing {p}")),
            None => Ok(std::io::stdout().write_all(text.as_bytes())?),
        }
    }
}

fn run(command: &Command, s: &Settings) -> Result<()> {
    match command {
        Command::Epe => {
            let req = s.request(s.get("method", Method::WwmHazard)?)?;
            let rho = *req.rho_list.first().context("--rho is empty")?;
            let maturity = req.exposure.maturity();
            let steps: usize = s.get("steps", 60)?;
            let grid: Vec<f64> = (0..=steps).map(|k| maturity * k as f64 / steps as f64).collect();
            let profile = engine::epe_profile(&req, rho, &grid)?;
            s.emit(&profile.to_csv())
        }
        Command::Cva => {
            let req = s.request(s.get("method", Method::WwmHazard)?)?;
            let res = engine::price(&req)?;
            for w in &res.warnings {
                eprintln!("warning: {w}");
            }
            let mut out = String::from("method,rho,cva_bps,ci_half_width_bps\n");
            for p in &res.points {
                let hw = p.half_width_bps.map(fmt_sig).unwrap_or_default();
                out.push_str(&format!("{},{},{},{}\n", res.method, fmt_sig(p.rho), fmt_sig(p.bps), hw));
            }
            s.emit(&out)
        }
        Command::Table2 => {
            let d = Table2Options::default();
            let opts = Table2Options {
                sets: s.list("set", "1,2,3,4")?,
                methods: s.list("method", "wwm_h,wwm_mean,mc_full_truncation,mc_reflected")?,
                rhos: s.list("rho", "-0.8,0,0.8")?,
                nu: s.get("nu", d.nu)?,
                maturity: s.get("maturity", d.maturity)?,
                recovery: s.get("recovery", d.recovery)?,
                deltas: s.list("dt", "0.01")?,
                n_paths: s.get("paths", d.n_paths)?,
                n_batches: s.get("batches", d.n_batches)?,
                seed: s.get("seed", d.seed)?,
            };
            let report = engine::table2(&opts)?;
            for d in &report.divergences {
                eprintln!("divergence: {d}");
            }
            s.emit(&report.to_csv())
        }
        Command::Calibrate => {
            let curve = s.curve()?.context("calibrate needs --curve")?;
            let model = ShiftedAffineModel::calibrated(s.model()?, &curve)?;
            if model.shift.has_negative() {
                eprintln!("warning: calibrated shift ψ takes negative values");
            }
            let mut out = String::from("t,psi,psi_integral\n");
            for (t, psi, big) in model.shift.knots() {
                out.push_str(&format!("{},{},{}\n", fmt_sig(t), fmt_sig(psi), fmt_sig(big)));
            }
            s.emit(&out)
        }
        Command::Compare => {
            let methods: Vec<Method> = s.list("method", "wwm_h,wwm_mean,copula,independent,mc_full_truncation")?;
            let methods = methods.into_iter().map(|m| s.method_with_scheme(m)).collect::<Result<Vec<_>>>()?;
            let req = s.request(methods[0])?;
            let mut req = req;
            if methods.iter().any(|m| m.is_mc()) {
                req.mc = Some(s.mc()?);
            }
            let rows = engine::compare(&req, &methods)?;
            s.emit(&engine::comparison_csv(&rows))
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let settings = Settings::load(&cli.opts)?;
    match settings.get::<usize>("workers", 0)? {
        0 => run(&cli.command, &settings),
        n => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(|| run(&cli.command, &settings)),
    }
}
