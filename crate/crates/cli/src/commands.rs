use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::Args;
use nalgebra::DMatrix;
use serde::Serialize;

use qmc_core::cbc::{cbc_interlaced, cbc_lattice, wce_sq, CbcConfig, CbcMode, CbcTrace, InterlacedConfig, InterlacedRule};
use qmc_core::estimate::{derive_seed, fit_slope, rms_error, shift_for, shifted_lattice, splitmix64, SmoothProduct};
use qmc_core::glmm::GlmmModel;
use qmc_core::numtheory::is_power_of_two;
use qmc_core::option::{AsianOption, Factorization, Pricer};
use qmc_core::pde::{CoefficientSpec, PdeModel, PdeProblem};
use qmc_core::points::lattice_points;
use qmc_core::savers::{
    build_active_set, fast_mvm, mdm_estimate, multilevel_estimate, naive_mvm, pilot_variances, allocate_levels, Chi,
    Cubature, FastMvmPlan, LevelFamily,
};
use qmc_core::transforms::MarginalDensity;
use qmc_core::weights::{
    calibrate_weights, interlaced_bound_factor, pod_from_derivative_bounds, rms_bound_factor, BoundParams,
    CalibrationInput,
};
use qmc_core::{Estimate, GeneratingVector, WeightModel};

use crate::output::{g, opt, Csv, Manifest, Output, MANIFEST};
use crate::Common;

// ---------------------------------------------------------------------------
// shared helpers

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Weight model from a JSON file, or `gamma_j = 0.9^j` when absent.
fn load_weights(path: Option<&Path>, s: usize) -> anyhow::Result<WeightModel> {
    match path {
        Some(p) => serde_json::from_str(&read(p)?).with_context(|| format!("invalid weights file {}", p.display())),
        None => Ok(WeightModel::geometric_product(0.9, s)?),
    }
}

fn report_trace(trace: &CbcTrace) {
    if let Some(w) = &trace.warning {
        eprintln!("warning: {w}");
    }
}

/// Loads a generating vector from `rule` (keeping its first `s`
/// components) or builds one by fast CBC.
fn lattice_rule(rule: Option<&Path>, weights: Option<&Path>, n: u64, s: usize) -> anyhow::Result<GeneratingVector> {
    if let Some(p) = rule {
        let gv: GeneratingVector = read(p)?.parse().with_context(|| format!("invalid rule file {}", p.display()))?;
        if gv.s() < s {
            bail!("rule {} has dimension {} < {s}", p.display(), gv.s());
        }
        return Ok(gv.truncate(s));
    }
    let w = load_weights(weights, s)?;
    let (gv, trace) = cbc_lattice(&CbcConfig::new(n, s, w, CbcMode::Fast))?;
    report_trace(&trace);
    Ok(gv)
}

fn estimate_cells(e: &Estimate) -> [String; 2] {
    [g(e.value), opt(e.std_error)]
}

// ---------------------------------------------------------------------------
// cbc

#[derive(Args, Debug, Serialize)]
pub struct CbcArgs {
    /// Number of points (a power of two with --alpha).
    #[arg(long)]
    pub n: u64,
    /// Dimension.
    #[arg(long)]
    pub s: usize,
    /// Weight model JSON; defaults to product weights 0.9^j.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// `fast` or `naive`.
    #[arg(long, default_value = "fast")]
    pub mode: String,
    /// Interlacing factor; builds an interlaced polynomial lattice rule.
    #[arg(long)]
    pub alpha: Option<usize>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

pub fn cbc(a: &CbcArgs, out: &mut Output) -> anyhow::Result<()> {
    let mode: CbcMode = a.mode.parse()?;
    let mut csv = Csv::new(&["dim", "choice", "criterion"]);
    let trace = match a.alpha {
        None => {
            let w = load_weights(a.weights.as_deref(), a.s)?;
            let (gv, trace) = cbc_lattice(&CbcConfig::new(a.n, a.s, w, mode))?;
            out.write("vector.txt", gv.to_text().as_bytes())?;
            trace
        }
        Some(alpha) => {
            if !is_power_of_two(a.n) || a.n < 2 {
                bail!("interlaced rules need n = 2^m with m >= 1, got {}", a.n);
            }
            let w = load_weights(a.weights.as_deref(), a.s)?;
            let rule = cbc_interlaced(&InterlacedConfig {
                m: a.n.trailing_zeros(),
                s: a.s,
                alpha,
                weights: w,
                mode,
                modulus: None,
            })?;
            out.write("rule.json", (serde_json::to_string_pretty(&rule)? + "\n").as_bytes())?;
            rule.trace
        }
    };
    report_trace(&trace);
    for st in &trace.steps {
        csv.row(&[st.dim.to_string(), st.choice.to_string(), g(st.criterion)]);
    }
    out.write("trace.csv", csv.bytes())?;
    out.write("trace.json", (serde_json::to_string_pretty(&trace)? + "\n").as_bytes())?;
    println!("criterion {}", g(trace.final_criterion()));
    Ok(())
}

// ---------------------------------------------------------------------------
// points

#[derive(Args, Debug, Serialize)]
pub struct PointsArgs {
    /// `vector.txt` or `rule.json` written by `qmc cbc`.
    #[arg(long)]
    pub rule: PathBuf,
    /// Number of random shifts (0 writes the unshifted points).
    #[arg(long, default_value_t = 0)]
    pub shifts: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// Little-endian binary instead of CSV.
    #[arg(long)]
    pub binary: bool,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

pub fn points(a: &PointsArgs, out: &mut Output) -> anyhow::Result<()> {
    let text = read(&a.rule)?;
    let ext = if a.binary { "bin" } else { "csv" };
    let emit = |out: &mut Output, name: String, ps: &qmc_core::PointSet| -> anyhow::Result<()> {
        let mut buf = Vec::new();
        if a.binary {
            ps.write_binary(&mut buf)?;
        } else {
            ps.write_csv(&mut buf)?;
        }
        out.write(&name, &buf)
    };
    if text.trim_start().starts_with('{') {
        if a.shifts > 0 {
            bail!("random shifts apply to lattice rules only");
        }
        let rule: InterlacedRule = serde_json::from_str(&text).context("invalid rule.json")?;
        emit(out, format!("points.{ext}"), &rule.points()?)?;
        return Ok(());
    }
    let gv: GeneratingVector = text.parse()?;
    if a.shifts == 0 {
        emit(out, format!("points.{ext}"), &lattice_points(&gv, None)?)?;
    }
    for r in 0..a.shifts {
        let shift = shift_for(a.seed, r, gv.s());
        emit(out, format!("points_{r}.{ext}"), &lattice_points(&gv, Some(&shift))?)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// bound

#[derive(Args, Debug, Serialize)]
pub struct BoundArgs {
    #[arg(long)]
    pub n: u64,
    #[arg(long)]
    pub s: usize,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Exponent in (1/2, 1] (in (1/alpha, 1] for interlaced rules).
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Interlacing factor for the higher-order bound.
    #[arg(long)]
    pub alpha: Option<usize>,
    /// Lattice rule whose squared worst-case error is reported alongside.
    #[arg(long)]
    pub rule: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

pub fn bound(a: &BoundArgs, out: &mut Output) -> anyhow::Result<()> {
    let w = load_weights(a.weights.as_deref(), a.s)?;
    let mut bp = BoundParams::new(a.lambda, a.n, a.s);
    bp.alpha = a.alpha;
    let factor = match a.alpha {
        Some(_) => interlaced_bound_factor(&w, &bp)?,
        None => rms_bound_factor(&w, &bp)?,
    };
    let mut csv = Csv::new(&["lambda", "n", "s", "bound_factor", "wce_sq"]);
    let wce = match &a.rule {
        Some(p) => {
            let gv: GeneratingVector = read(p)?.parse()?;
            if gv.n() != a.n || gv.s() != a.s {
                bail!("rule has n = {}, s = {}; expected n = {}, s = {}", gv.n(), gv.s(), a.n, a.s);
            }
            let e = wce_sq(&gv, &w)?;
            if a.alpha.is_none() && a.lambda == 1.0 && e > factor * factor {
                bail!("measured wce_sq {e} exceeds the bound {}", factor * factor);
            }
            Some(e)
        }
        None => None,
    };
    csv.row(&[g(a.lambda), a.n.to_string(), a.s.to_string(), g(factor), opt(wce)]);
    out.write("bound.csv", csv.bytes())?;
    println!("bound factor {}", g(factor));
    Ok(())
}

// ---------------------------------------------------------------------------
// calibrate

#[derive(Args, Debug, Serialize)]
pub struct CalibrateArgs {
    /// JSON with `lambda` and maps `a`, `b` keyed by subsets ("0,2").
    #[arg(long, conflicts_with = "derivative_bounds")]
    pub input: Option<PathBuf>,
    /// Comma-separated b_j for POD weights (alternative to --input).
    #[arg(long, value_delimiter = ',')]
    pub derivative_bounds: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Dimension of the explicit model written from --input.
    #[arg(long)]
    pub s: Option<usize>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

pub fn calibrate(a: &CalibrateArgs, out: &mut Output) -> anyhow::Result<()> {
    let model = match (&a.input, &a.derivative_bounds) {
        (Some(p), _) => {
            let input: CalibrationInput = serde_json::from_str(&read(p)?).context("invalid calibration input")?;
            let cal = calibrate_weights(&input)?;
            let mut csv = Csv::new(&["subset", "gamma"]);
            for (u, gam) in &cal.gammas {
                csv.row(&[format!("\"{u}\""), g(*gam)]);
            }
            out.write("calibration.csv", csv.bytes())?;
            out.write("calibration.json", (serde_json::to_string_pretty(&cal)? + "\n").as_bytes())?;
            println!("C_gamma {}", g(cal.c_gamma));
            let s = a.s.unwrap_or_else(|| cal.gammas.keys().filter_map(|u| u.max_index()).max().map_or(0, |j| j + 1));
            cal.model(s)?
        }
        (None, Some(b)) => pod_from_derivative_bounds(b, a.lambda)?,
        (None, None) => bail!("either --input or --derivative-bounds is required"),
    };
    out.write("weights.json", (serde_json::to_string_pretty(&model)? + "\n").as_bytes())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// option

#[derive(Args, Debug, Serialize, Clone)]
pub struct OptionParams {
    #[arg(long, default_value_t = 100.0)]
    pub spot: f64,
    #[arg(long, default_value_t = 100.0)]
    pub strike: f64,
    #[arg(long, default_value_t = 0.1)]
    pub rate: f64,
    #[arg(long, default_value_t = 0.2)]
    pub volatility: f64,
    #[arg(long, default_value_t = 1.0)]
    pub maturity: f64,
}

impl OptionParams {
    fn option(&self, steps: usize) -> anyhow::Result<AsianOption> {
        Ok(AsianOption::new(self.maturity, steps, self.strike, self.spot, self.rate, self.volatility)?)
    }
}

#[derive(Args, Debug, Serialize)]
pub struct OptionArgs {
    /// Time steps.
    #[arg(long, default_value_t = 16)]
    pub s: usize,
    #[arg(long, default_value_t = 4096)]
    pub n: u64,
    /// `standard`, `bb` or `pca`.
    #[arg(long, default_value = "pca")]
    pub method: String,
    /// Integrate the first PCA coordinate out before applying QMC.
    #[arg(long)]
    pub smoothed: bool,
    #[arg(long, default_value_t = 16)]
    pub shifts: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub rule: Option<PathBuf>,
    #[command(flatten)]
    pub params: OptionParams,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

pub fn option(a: &OptionArgs, out: &mut Output) -> anyhow::Result<()> {
    let method: Factorization = a.method.parse()?;
    let pricer = Pricer::new(a.params.option(a.s)?, method)?;
    let dim = if a.smoothed { a.s - 1 } else { a.s };
    let gv = lattice_rule(a.rule.as_deref(), a.weights.as_deref(), a.n, dim)?;
    let est = pricer.price(&gv, a.shifts, a.seed, a.smoothed)?;
    let mut csv = Csv::new(&["method", "smoothed", "s", "n", "shifts", "estimate", "std_error"]);
    let [v, se] = estimate_cells(&est);
    csv.row(&[method.to_string(), a.smoothed.to_string(), a.s.to_string(), gv.n().to_string(), a.shifts.to_string(), v, se]);
    out.write("results.csv", csv.bytes())?;
    println!("price {} (se {})", g(est.value), opt(est.std_error));
    Ok(())
}

// ---------------------------------------------------------------------------
// glmm

#[derive(Args, Debug, Serialize)]
pub struct GlmmArgs {
    /// Model JSON (`beta`, `tau`, `sigma2`, `kappa`); a built-in
    /// 8-observation model otherwise.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// `normal`, `logistic[:scale]` or `student:nu`.
    #[arg(long, default_value = "normal")]
    pub density: String,
    #[arg(long, default_value_t = 4096)]
    pub n: u64,
    #[arg(long, default_value_t = 16)]
    pub shifts: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub rule: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

fn glmm_model(path: Option<&Path>) -> anyhow::Result<GlmmModel> {
    match path {
        Some(p) => {
            let m: GlmmModel = serde_json::from_str(&read(p)?).context("invalid model file")?;
            m.validate()?;
            Ok(m)
        }
        None => Ok(GlmmModel::new(0.5, vec![2, 0, 1, 3, 1, 0, 2, 4], 0.6, 0.5)?),
    }
}

pub fn glmm(a: &GlmmArgs, out: &mut Output) -> anyhow::Result<()> {
    let model = glmm_model(a.model.as_deref())?;
    let density = MarginalDensity::parse(&a.density)?;
    let rc = model.recenter(density)?;
    let gv = lattice_rule(a.rule.as_deref(), a.weights.as_deref(), a.n, model.s())?;
    let ll = rc.likelihood(&gv, a.shifts, a.seed)?;
    let mut csv = Csv::new(&[
        "density", "s", "n", "shifts", "log_likelihood", "log_std_error", "estimate", "std_error", "log_offset",
    ]);
    let [v, se] = estimate_cells(&ll.estimate);
    csv.row(&[
        a.density.clone(),
        model.s().to_string(),
        gv.n().to_string(),
        a.shifts.to_string(),
        g(ll.log_likelihood),
        opt(ll.log_std_error),
        v,
        se,
        g(ll.log_offset),
    ]);
    out.write("results.csv", csv.bytes())?;
    println!("log-likelihood {} (se {})", g(ll.log_likelihood), opt(ll.log_std_error));
    Ok(())
}

// ---------------------------------------------------------------------------
// pde

#[derive(Args, Debug, Serialize)]
pub struct PdeArgs {
    /// Coefficient JSON, e.g. `{"kind":"kl","sigma2":1,"ell":0.5,"s":8}`;
    /// uniform with --s terms otherwise.
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Terms of the default uniform expansion.
    #[arg(long, default_value_t = 4)]
    pub s: usize,
    /// Mesh intervals minus one (h = 1/(m+1)).
    #[arg(long, default_value_t = 127)]
    pub m: usize,
    #[arg(long, default_value_t = 4096)]
    pub n: u64,
    #[arg(long, default_value_t = 16)]
    pub shifts: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub rule: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

fn pde_model(field: Option<&Path>, s: usize, m: usize) -> anyhow::Result<(String, PdeModel)> {
    let spec = match field {
        Some(p) => serde_json::from_str(&read(p)?).context("invalid field file")?,
        None => CoefficientSpec::Uniform { a0: 1.0, s, amplitudes: None },
    };
    let kind = match &spec {
        CoefficientSpec::Uniform { .. } => "uniform",
        CoefficientSpec::Kl { .. } => "kl",
        CoefficientSpec::Circulant { .. } => "circulant",
    };
    let problem = PdeProblem::unit_source(m)?;
    let field = spec.build(&problem)?;
    Ok((kind.to_string(), PdeModel::new(problem, field)?))
}

pub fn pde(a: &PdeArgs, out: &mut Output) -> anyhow::Result<()> {
    let (kind, model) = pde_model(a.field.as_deref(), a.s, a.m)?;
    let gv = lattice_rule(a.rule.as_deref(), a.weights.as_deref(), a.n, model.s())?;
    let est = model.expected_functional(&gv, a.shifts, a.seed)?;
    let mut csv = Csv::new(&["field", "m", "s", "n", "shifts", "estimate", "std_error"]);
    let [v, se] = estimate_cells(&est);
    csv.row(&[kind, a.m.to_string(), model.s().to_string(), gv.n().to_string(), a.shifts.to_string(), v, se]);
    out.write("results.csv", csv.bytes())?;
    println!("E[G] {} (se {})", g(est.value), opt(est.std_error));
    Ok(())
}

// ---------------------------------------------------------------------------
// mdm

#[derive(Args, Debug, Serialize)]
pub struct MdmArgs {
    /// Nominal dimension of the test integrand.
    #[arg(long, default_value_t = 64)]
    pub s: usize,
    /// Weights gamma_j = j^-decay of the test integrand.
    #[arg(long, default_value_t = 2.0)]
    pub decay: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    /// Points per active subset; derived from the error budget if absent.
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long, default_value_t = 8)]
    pub shifts: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// Largest number of active subsets.
    #[arg(long, default_value_t = 100_000)]
    pub max_sets: usize,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

pub fn mdm(a: &MdmArgs, out: &mut Output) -> anyhow::Result<()> {
    // f(y) = prod (1 + gamma_j B2(y_j)), integral 1; anchored at 1/2 the
    // components are bounded by prod_{j in u} gamma_j / 4
    let gamma: Vec<f64> = (1..=a.s).map(|j| (j as f64).powf(-a.decay)).collect();
    let f = SmoothProduct::new(gamma.clone());
    let b: Vec<f64> = gamma.iter().map(|g| g / 4.0).collect();
    let active = build_active_set(&b, a.eps, a.max_sets)?;
    let n = match a.n {
        Some(n) => n,
        None => active.common_sample_size(1.0)?,
    };
    if n > 1 << 24 {
        bail!("n = {n} per subset is too large; pass --n or a larger --eps");
    }
    let order = active.max_order();
    let anchor = vec![0.5; a.s];
    let gv = if order == 0 {
        None
    } else {
        Some(lattice_rule(None, None, n, order)?)
    };
    let est = mdm_estimate(
        |y| f.eval(y),
        &anchor,
        &active.sets,
        a.shifts,
        |k, r| {
            let u = &active.sets[k];
            match (&gv, u.len()) {
                (_, 0) | (None, _) => Ok(Cubature::point()),
                (Some(gv), d) => {
                    let shift = shift_for(derive_seed(a.seed, k as u64), r, d);
                    Cubature::lattice(&gv.truncate(d), Some(&shift))
                }
            }
        },
        a.seed,
    )?;
    let mut csv =
        Csv::new(&["eps", "sets", "max_order", "n", "shifts", "estimate", "std_error", "error", "tail"]);
    let [v, se] = estimate_cells(&est);
    csv.row(&[
        g(a.eps),
        active.sets.len().to_string(),
        order.to_string(),
        n.to_string(),
        a.shifts.to_string(),
        v,
        se,
        g((est.value - SmoothProduct::INTEGRAL).abs()),
        g(active.tail),
    ]);
    out.write("results.csv", csv.bytes())?;
    out.write("active_set.json", (serde_json::to_string_pretty(&active)? + "\n").as_bytes())?;
    println!("{} active subsets, estimate {} (se {})", active.sets.len(), g(est.value), opt(est.std_error));
    Ok(())
}

// ---------------------------------------------------------------------------
// ml

#[derive(Args, Debug, Serialize)]
pub struct MlArgs {
    /// Levels; level l uses 2^(l+1) time steps.
    #[arg(long, default_value_t = 4)]
    pub levels: usize,
    /// Points per level when no --eps is given.
    #[arg(long, default_value_t = 1024)]
    pub n: u64,
    /// Target RMS error; allocates points per level from pilot runs.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, default_value = "bb")]
    pub method: String,
    #[arg(long, default_value_t = 16)]
    pub shifts: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    #[command(flatten)]
    pub params: OptionParams,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

pub fn ml(a: &MlArgs, out: &mut Output) -> anyhow::Result<()> {
    if a.levels == 0 {
        bail!("at least one level is required");
    }
    let method: Factorization = a.method.parse()?;
    let pricers = (0..a.levels)
        .map(|l| Ok(Pricer::new(a.params.option(2 << l)?, method)?))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut fam = LevelFamily::new();
    for p in &pricers {
        let s = p.operator().s();
        fam.push(s, s as f64, move |x| p.payoff_unit(x, &mut p.scratch()))?;
    }
    let rules_for = |ns: &[u64]| -> anyhow::Result<Vec<GeneratingVector>> {
        ns.iter().enumerate().map(|(l, &n)| lattice_rule(None, None, n, fam.dim(l))).collect()
    };
    let ns: Vec<u64> = match a.eps {
        None => vec![a.n; a.levels],
        Some(eps) => {
            let pilot = rules_for(&vec![256; a.levels])?;
            let v = pilot_variances(&fam, &pilot, a.shifts.max(8), derive_seed(a.seed, u64::MAX))?;
            allocate_levels(&v, &fam.costs(), eps)?.n
        }
    };
    let rules = rules_for(&ns)?;
    let est = multilevel_estimate(&fam, &rules, a.shifts, a.seed)?;
    let mut csv = Csv::new(&["level", "s", "n", "shifts", "estimate", "std_error"]);
    for (l, e) in est.levels.iter().enumerate() {
        let [v, se] = estimate_cells(e);
        csv.row(&[l.to_string(), fam.dim(l).to_string(), ns[l].to_string(), a.shifts.to_string(), v, se]);
    }
    let [v, se] = estimate_cells(&est.total);
    csv.row(&["total".into(), fam.dim(a.levels - 1).to_string(), est.total.n.to_string(), a.shifts.to_string(), v, se]);
    out.write("results.csv", csv.bytes())?;
    println!("multilevel price {} (se {})", g(est.total.value), opt(est.total.std_error));
    Ok(())
}

// ---------------------------------------------------------------------------
// mvm-bench

#[derive(Args, Debug, Serialize)]
pub struct MvmArgs {
    /// Prime number of points.
    #[arg(long, default_value_t = 8191)]
    pub n: u64,
    #[arg(long, default_value_t = 256)]
    pub s: usize,
    /// Columns of the multiplied matrix.
    #[arg(long, default_value_t = 16)]
    pub q: usize,
    /// `identity`, `centered` or `norminv`.
    #[arg(long, default_value = "norminv")]
    pub chi: String,
    /// Seed of the multiplied matrix entries.
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// Timing repetitions (the minimum is reported).
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long)]
    pub rule: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

/// Deviation above which the fast product is reported as wrong.
const MVM_TOLERANCE: f64 = 1e-10;

pub fn mvm_bench(a: &MvmArgs, out: &mut Output) -> anyhow::Result<()> {
    let chi: Chi = a.chi.parse()?;
    if !qmc_core::numtheory::is_prime(a.n) || a.n < 3 {
        bail!("n = {} must be an odd prime", a.n);
    }
    let mut csv = Csv::new(&["n", "s", "q", "chi", "max_abs_deviation"]);
    if a.q == 0 {
        out.write("mvm.csv", csv.bytes())?;
        return Ok(());
    }
    let gv = lattice_rule(a.rule.as_deref(), None, a.n, a.s)?;
    let plan = FastMvmPlan::new(&gv, chi, None)?;
    let mat = DMatrix::from_fn(a.s, a.q, |i, j| {
        let bits = splitmix64(a.seed ^ splitmix64((i * a.q + j) as u64));
        2.0 * ((bits >> 11) as f64 / (1u64 << 53) as f64) - 1.0
    });
    let time = |f: &dyn Fn() -> anyhow::Result<DMatrix<f64>>| -> anyhow::Result<(DMatrix<f64>, f64)> {
        let mut best = f64::INFINITY;
        let mut result = None;
        for _ in 0..a.repeats.max(1) {
            let t = Instant::now();
            let r = f()?;
            best = best.min(t.elapsed().as_secs_f64());
            result = Some(r);
        }
        Ok((result.expect("at least one repetition"), best))
    };
    let (fast, t_fast) = time(&|| Ok(fast_mvm(&plan, &mat)?))?;
    let (naive, t_naive) = time(&|| Ok(naive_mvm(&plan, &mat)?))?;
    let dev = (fast - naive).abs().max();
    csv.row(&[a.n.to_string(), a.s.to_string(), a.q.to_string(), a.chi.clone(), g(dev)]);
    out.write("mvm.csv", csv.bytes())?;
    out.write("plan.json", (serde_json::to_string(&plan)? + "\n").as_bytes())?;
    let mut tcsv = Csv::new(&["fast_seconds", "naive_seconds"]);
    tcsv.row(&[g(t_fast), g(t_naive)]);
    out.write_volatile("timings.csv", tcsv.bytes())?;
    println!("max deviation {}, fast {t_fast:.4}s, naive {t_naive:.4}s", g(dev));
    if !(dev <= MVM_TOLERANCE) {
        bail!("fast and naive products differ by {dev}");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// convergence

#[derive(Args, Debug, Serialize)]
pub struct ConvergenceArgs {
    /// `smooth-test`, `option`, `glmm` or `pde`.
    #[arg(long, default_value = "smooth-test")]
    pub app: String,
    /// Dimension (smooth-test), time steps (option) or uniform terms (pde).
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long, default_value_t = 7)]
    pub m_min: u32,
    #[arg(long, default_value_t = 13)]
    pub m_max: u32,
    #[arg(long, default_value_t = 16)]
    pub shifts: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Option app: preintegrate the first PCA coordinate.
    #[arg(long)]
    pub smoothed: bool,
    /// GLMM app: marginal density.
    #[arg(long, default_value = "normal")]
    pub density: String,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

pub fn convergence(a: &ConvergenceArgs, out: &mut Output) -> anyhow::Result<()> {
    if a.m_min > a.m_max || a.m_max > 30 {
        bail!("need m_min <= m_max <= 30");
    }
    type Runner<'a> = Box<dyn Fn(&GeneratingVector, u64) -> anyhow::Result<Estimate> + 'a>;
    let (dim, exact, runner): (usize, Option<f64>, Runner) = match a.app.as_str() {
        "smooth-test" => {
            let s = a.s.unwrap_or(10);
            let f = SmoothProduct::geometric(0.9, s);
            (s, Some(SmoothProduct::INTEGRAL), Box::new(move |gv, seed| Ok(shifted_lattice(gv, a.shifts, seed, |x| f.eval(x))?)))
        }
        "option" => {
            let s = a.s.unwrap_or(16);
            let pricer = Pricer::new(AsianOption::standard().with_steps(s), Factorization::Pca)?;
            let dim = if a.smoothed { s - 1 } else { s };
            (dim, None, Box::new(move |gv, seed| Ok(pricer.price(gv, a.shifts, seed, a.smoothed)?)))
        }
        "glmm" => {
            let rc = glmm_model(None)?.recenter(MarginalDensity::parse(&a.density)?)?;
            (rc.s(), None, Box::new(move |gv, seed| Ok(rc.likelihood(gv, a.shifts, seed)?.estimate)))
        }
        "pde" => {
            let (_, model) = pde_model(None, a.s.unwrap_or(4), 127)?;
            (model.s(), None, Box::new(move |gv, seed| Ok(model.expected_functional(gv, a.shifts, seed)?)))
        }
        other => bail!("unknown app {other:?}"),
    };
    let weights = load_weights(a.weights.as_deref(), dim)?;
    let mut csv = Csv::new(&["n", "estimate", "std_error", "error"]);
    let mut tcsv = Csv::new(&["n", "seconds"]);
    let (mut ns, mut errs, mut ses) = (Vec::new(), Vec::new(), Vec::new());
    for m in a.m_min..=a.m_max {
        let n = 1u64 << m;
        let t = Instant::now();
        let (gv, trace) = cbc_lattice(&CbcConfig::new(n, dim, weights.clone(), CbcMode::Fast))?;
        report_trace(&trace);
        let est = runner(&gv, derive_seed(a.seed, m as u64))?;
        let err = exact.map(|e| rms_error(&est, e));
        tcsv.row(&[n.to_string(), g(t.elapsed().as_secs_f64())]);
        csv.row(&[n.to_string(), g(est.value), opt(est.std_error), opt(err)]);
        ns.push(n as f64);
        if let Some(e) = err {
            errs.push(e);
        }
        if let Some(se) = est.std_error {
            ses.push(se);
        }
    }
    let mut summary = Csv::new(&["quantity", "slope"]);
    if errs.len() == ns.len() && ns.len() >= 2 {
        let slope = fit_slope(&ns, &errs)?;
        summary.row(&["rms_error".into(), g(slope)]);
        println!("rms error slope {}", g(slope));
    }
    if ses.len() == ns.len() && ns.len() >= 2 {
        let slope = fit_slope(&ns, &ses)?;
        summary.row(&["std_error".into(), g(slope)]);
        println!("std error slope {}", g(slope));
    }
    out.write("convergence.csv", csv.bytes())?;
    out.write("summary.csv", summary.bytes())?;
    out.write_volatile("timings.csv", tcsv.bytes())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// replay

#[derive(Args, Debug)]
pub struct ReplayArgs {
    /// `manifest.json` of an earlier run.
    pub manifest: PathBuf,
    /// Directory for the re-run outputs.
    #[arg(long, default_value = "qmc-replay")]
    pub out: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
}

pub fn replay(a: &ReplayArgs) -> anyhow::Result<()> {
    let m: Manifest = serde_json::from_str(&read(&a.manifest)?).context("invalid manifest")?;
    let mut argv = vec!["qmc".to_string()];
    argv.extend(m.args.iter().cloned());
    argv.push("--out".into());
    argv.push(a.out.display().to_string());
    if let Some(t) = a.threads {
        // the pool is process-wide and the first build wins, so set it here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
        argv.push("--threads".into());
        argv.push(t.to_string());
    }
    if crate::run(argv) != 0 && m.success {
        bail!("replayed command failed");
    }
    let fresh: Manifest = serde_json::from_str(&read(&a.out.join(MANIFEST))?)?;
    let mut ok = true;
    for (name, digest) in &m.outputs {
        match fresh.outputs.get(name) {
            Some(d) if d == digest => println!("{name}: identical"),
            Some(_) => {
                println!("{name}: DIFFERS");
                ok = false;
            }
            None => {
                println!("{name}: MISSING");
                ok = false;
            }
        }
    }
    if !ok {
        bail!("replay did not reproduce the recorded outputs");
    }
    Ok(())
}
