//! Acceptance suite: runs each numbered criterion with pinned tolerances and
//! prints one PASS/FAIL line per criterion. Pass criterion numbers on the
//! command line (`cargo test --test acceptance -- 3 7`) to run a subset.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use qmc_core::cbc::{cbc_interlaced, cbc_lattice, interlaced_criterion, wce_sq, CbcConfig, CbcMode, InterlacedConfig};
use qmc_core::estimate::{fit_slope, point_set_average, rms_error, shifted_lattice, SmoothProduct};
use qmc_core::glmm::GlmmModel;
use qmc_core::numtheory::gcd;
use qmc_core::option::{brownian_covariance, AsianOption, CovarianceOperator, Factorization, Pricer};
use qmc_core::pde::{
    exponential_covariance, CirculantEmbedding, CoefficientField, PdeModel, PdeProblem, UniformCoefficient,
};
use qmc_core::savers::{
    anchored_component, fast_mvm, level_difference, mdm_estimate, naive_mvm, Chi, Cubature, FastMvmPlan, LevelFamily,
};
use qmc_core::transforms::{gauss_hermite, gauss_legendre, MarginalDensity};
use qmc_core::weights::{interlaced_bound_factor, rms_bound_factor, BoundParams};
use qmc_core::{Estimate, GeneratingVector, Subset, WeightModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn product_09(s: usize) -> WeightModel {
    WeightModel::geometric_product(0.9, s).unwrap()
}

fn pod_factorial(s: usize) -> WeightModel {
    let mut order = vec![1.0];
    for l in 1..=s {
        order.push(order[l - 1] * l as f64);
    }
    let ups = (1..=s).map(|j| 1.0 / (j * j) as f64).collect();
    WeightModel::pod(order, ups).unwrap()
}

fn cbc(n: u64, w: &WeightModel, mode: CbcMode) -> GeneratingVector {
    cbc_lattice(&CbcConfig::new(n, w.s(), w.clone(), mode)).unwrap().0
}

fn lattice_bound_sq(n: u64, w: &WeightModel) -> f64 {
    rms_bound_factor(w, &BoundParams::new(1.0, n, w.s())).unwrap().powi(2)
}

// ---------------------------------------------------------------------------

fn c1_fast_equals_naive() -> Outcome {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for w in [product_09(8), pod_factorial(8)] {
        for n in [16u64, 32, 64, 127, 257] {
            let cfg = |mode| CbcConfig::new(n, 8, w.clone(), mode);
            let (gn, tn) = cbc_lattice(&cfg(CbcMode::Naive)).unwrap();
            let (gf, tf) = cbc_lattice(&cfg(CbcMode::Fast)).unwrap();
            if gn.z() != gf.z() {
                return Err(format!("{} n={n}: naive {:?} fast {:?}", w.variant(), gn.z(), gf.z()));
            }
            for (a, b) in tn.steps.iter().zip(&tf.steps) {
                worst = worst.max((a.criterion - b.criterion).abs() / a.criterion.abs().max(1.0));
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(worst <= 1e-13 && secs < 30.0, format!("identical vectors, max criterion gap {worst:.1e}, {secs:.1} s"))
}

/// `(1/n^2) sum_{i,k} sum_{u != empty} gamma_u prod_{j in u} B2(frac((i-k) z_j / n))`.
fn double_sum_oracle(n: u64, z: &[u64], w: &WeightModel) -> f64 {
    let s = z.len();
    let gammas: Vec<f64> = (1u64..1 << s).map(|mask| w.weight_of(&Subset::from_mask(mask)).unwrap()).collect();
    let mut total = 0.0;
    let mut b = vec![0.0; s];
    for i in 0..n {
        for k in 0..n {
            let d = (i + n - k) % n;
            for j in 0..s {
                let x = ((d * z[j]) % n) as f64 / n as f64;
                b[j] = x * x - x + 1.0 / 6.0;
            }
            for mask in 1u64..1 << s {
                let mut p = gammas[mask as usize - 1];
                for (j, bj) in b.iter().enumerate() {
                    if mask >> j & 1 == 1 {
                        p *= bj;
                    }
                }
                total += p;
            }
        }
    }
    total / (n * n) as f64
}

fn c2_wce_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for s in 1..=6usize {
        let models = [
            product_09(s),
            pod_factorial(s),
            WeightModel::order_dependent((0..=s).map(|l| if l < 2 { 1.0 } else { 0.5f64.powi(l as i32) }).collect(), s)
                .unwrap(),
        ];
        for n in [2u64, 7, 16, 31, 50, 64] {
            for w in &models {
                let units: Vec<u64> = (1..n).filter(|&k| gcd(k, n) == 1).collect();
                let z: Vec<u64> = (0..s).map(|_| units[rng.random_range(0..units.len())]).collect();
                let gv = GeneratingVector::new(n, z.clone()).unwrap();
                let want = double_sum_oracle(n, &z, w);
                for model in [w.clone(), w.to_explicit().unwrap()] {
                    worst = worst.max((wce_sq(&gv, &model).unwrap() - want).abs());
                }
                cases += 1;
            }
        }
    }
    check(worst <= 1e-13, format!("{cases} rules, max |wce^2 - oracle| = {worst:.1e}"))
}

fn c3_smooth_rate() -> Outcome {
    let t = Instant::now();
    let s = 10;
    let w = product_09(s);
    let f = SmoothProduct::geometric(0.9, s);
    let (mut ns, mut errs) = (Vec::new(), Vec::new());
    for m in 7..=13u32 {
        let n = 1u64 << m;
        let gv = cbc(n, &w, CbcMode::Fast);
        let est = shifted_lattice(&gv, 16, 2024 + m as u64, |x| f.eval(x)).unwrap();
        ns.push(n as f64);
        errs.push(rms_error(&est, SmoothProduct::INTEGRAL));
    }
    let slope = fit_slope(&ns, &errs).unwrap();
    let secs = t.elapsed().as_secs_f64();
    check(slope <= -0.85 && secs < 60.0, format!("RMS-error slope {slope:.3} (need <= -0.85), {secs:.1} s"))
}

fn interlaced_rule(m: u32) -> qmc_core::cbc::InterlacedRule {
    cbc_interlaced(&InterlacedConfig {
        m,
        s: 2,
        alpha: 2,
        weights: WeightModel::geometric_product(0.5, 2).unwrap(),
        mode: CbcMode::Fast,
        modulus: None,
    })
    .unwrap()
}

fn c4_interlaced_rate() -> Outcome {
    let t = Instant::now();
    let f = SmoothProduct::geometric(0.5, 2);
    let (mut ns, mut errs) = (Vec::new(), Vec::new());
    for m in 4..=12u32 {
        let ps = interlaced_rule(m).points().unwrap();
        ns.push((1u64 << m) as f64);
        errs.push((point_set_average(&ps, |x| f.eval(x)) - SmoothProduct::INTEGRAL).abs());
    }
    let slope = fit_slope(&ns, &errs).unwrap();
    let secs = t.elapsed().as_secs_f64();
    check(slope <= -1.5 && secs < 120.0, format!("error slope {slope:.3} (need <= -1.5), {secs:.1} s"))
}

fn c5_bounds_hold() -> Outcome {
    let mut checked = 0;
    let mut worst = 0.0f64;
    let mut lattice_cases: Vec<(u64, WeightModel)> = Vec::new();
    for n in [16u64, 32, 64, 127, 257] {
        lattice_cases.push((n, product_09(8)));
        lattice_cases.push((n, pod_factorial(8)));
    }
    for m in 7..=13u32 {
        lattice_cases.push((1 << m, product_09(10)));
    }
    for n in [1009u64, 4093] {
        lattice_cases.push((n, product_09(20)));
    }
    for (n, w) in &lattice_cases {
        let gv = cbc(*n, w, CbcMode::Fast);
        let ratio = wce_sq(&gv, w).unwrap() / lattice_bound_sq(*n, w);
        worst = worst.max(ratio);
        checked += 1;
    }
    let w2 = WeightModel::geometric_product(0.5, 2).unwrap();
    for m in 4..=12u32 {
        let r = interlaced_rule(m);
        let crit = interlaced_criterion(&r.rule, 2, &w2).unwrap();
        let mut bp = BoundParams::new(1.0, 1 << m, 2);
        bp.alpha = Some(2);
        let bound = interlaced_bound_factor(&w2, &bp).unwrap();
        worst = worst.max(crit / bound);
        checked += 1;
    }
    check(worst <= 1.0, format!("{checked} rules, max criterion / bound = {worst:.3}"))
}

fn c6_option() -> Outcome {
    let t = Instant::now();
    let mut fact_err = 0.0f64;
    for s in [1usize, 2, 3, 4, 5, 7, 8, 15, 16, 17, 31, 32, 33, 48, 63, 64] {
        let sigma = brownian_covariance(s, 1.0);
        for method in [Factorization::Standard, Factorization::BrownianBridge, Factorization::Pca] {
            let a = CovarianceOperator::new(method, s, 1.0).unwrap().dense();
            fact_err = fact_err.max((&a * a.transpose() - &sigma).abs().max());
        }
    }
    let option = AsianOption::standard();
    let s = option.steps;
    let pricer = Pricer::new(option, Factorization::Pca).unwrap();
    let (mut ns, mut raw_se, mut smooth_se) = (Vec::new(), Vec::new(), Vec::new());
    let (mut raw_last, mut smooth_last) = (None, None);
    for m in 7..=13u32 {
        let n = 1u64 << m;
        let raw = pricer.price(&cbc(n, &product_09(s), CbcMode::Fast), 16, 2024, false).unwrap();
        let smooth = pricer.price(&cbc(n, &product_09(s - 1), CbcMode::Fast), 16, 2024, true).unwrap();
        ns.push(n as f64);
        raw_se.push(raw.se_or_zero());
        smooth_se.push(smooth.se_or_zero());
        raw_last = Some(raw);
        smooth_last = Some(smooth);
    }
    let raw_slope = fit_slope(&ns, &raw_se).unwrap();
    let smooth_slope = fit_slope(&ns, &smooth_se).unwrap();
    let mc = pricer.price_mc(10_000_000, 2024).unwrap();
    let (raw, smooth) = (raw_last.unwrap(), smooth_last.unwrap());
    let z = |e: &Estimate| (e.value - mc.value).abs() / e.se_or_zero().hypot(mc.se_or_zero());
    let secs = t.elapsed().as_secs_f64();
    let detail = format!(
        "max |AA^T - Sigma| {fact_err:.1e}; SE slopes raw {raw_slope:.3}, preintegrated {smooth_slope:.3}; \
         raw {:.5} ({:.1} SE), preintegrated {:.5} ({:.1} SE) vs MC {:.5}; {secs:.0} s",
        raw.value,
        z(&raw),
        smooth.value,
        z(&smooth),
        mc.value
    );
    check(
        fact_err <= 1e-10
            && smooth_slope <= -0.85
            && raw_slope > smooth_slope
            && z(&raw) <= 3.0
            && z(&smooth) <= 3.0
            && secs < 300.0,
        detail,
    )
}

/// `log L` by tensor Gauss-Hermite on `y = L_Sigma z`, `z ~ N(0, I)`.
fn glmm_gh_oracle(model: &GlmmModel, level: usize) -> f64 {
    let s = model.s();
    let chol = model.covariance().cholesky().unwrap().l();
    let gh = gauss_hermite(level);
    let log_fact: Vec<f64> = model.tau.iter().map(|&t| (1..=t).map(|k| (k as f64).ln()).sum()).collect();
    let count = level.pow(s as u32);
    let mut digits = vec![0usize; s];
    let mut terms = Vec::with_capacity(count);
    for _ in 0..count {
        let mut log_w = 0.0;
        let mut log_q = 0.0;
        for i in 0..s {
            let mut y = 0.0;
            for (j, &d) in digits.iter().enumerate().take(i + 1) {
                y += chol[(i, j)] * gh.nodes[d];
            }
            let e = model.beta + y;
            log_q += model.tau[i] as f64 * e - e.exp() - log_fact[i];
        }
        for &d in &digits {
            log_w += gh.weights[d].ln();
        }
        terms.push(log_w + log_q);
        for d in digits.iter_mut() {
            *d += 1;
            if *d < level {
                break;
            }
            *d = 0;
        }
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn c7_glmm() -> Outcome {
    let mut worst = 0.0f64;
    let models = [
        GlmmModel::new(0.5, vec![2], 0.6, 0.5).unwrap(),
        GlmmModel::new(0.5, vec![2, 0], 0.6, 0.5).unwrap(),
        GlmmModel::new(0.5, vec![2, 0, 1], 0.6, 0.5).unwrap(),
        GlmmModel::new(1.0, vec![5, 1, 3], 0.4, -0.3).unwrap(),
    ];
    let n = 1u64 << 16;
    for model in &models {
        let s = model.s();
        let gv = cbc(n, &product_09(s), CbcMode::Fast);
        // the logistic density's heavier tails keep the recentred integrand
        // bounded on the unit cube; under the normal density it has a
        // boundary singularity whenever the prior is wider than the Laplace fit
        let rc = model.recenter(MarginalDensity::logistic(1.0).unwrap()).unwrap();
        let ll = rc.likelihood(&gv, 16, 2024).unwrap();
        let oracle = glmm_gh_oracle(model, 40);
        worst = worst.max((ll.log_likelihood - oracle).exp_m1().abs());
    }
    let model4 = GlmmModel::new(0.5, vec![2, 0, 1, 3], 0.6, 0.5).unwrap();
    let gv4 = cbc(1 << 14, &product_09(4), CbcMode::Fast);
    let normal = model4.recenter(MarginalDensity::normal()).unwrap().likelihood(&gv4, 16, 2024).unwrap();
    let logistic = model4
        .recenter(MarginalDensity::logistic(1.0).unwrap())
        .unwrap()
        .likelihood(&gv4, 16, 2025)
        .unwrap();
    let (a, b) = (normal.estimate, logistic.estimate);
    let gap = (a.value - b.value).abs() / a.se_or_zero().hypot(b.se_or_zero());
    check(
        worst <= 1e-6 && gap <= 3.0,
        format!("max relative likelihood error vs GH-40 {worst:.1e}; normal vs logistic at s=4 {gap:.2} SE"),
    )
}

fn c8_pde() -> Outcome {
    // a = 1, kappa = 1: G = 1/12
    let mut errors = Vec::new();
    for k in 3..=9u32 {
        let p = PdeProblem::unit_source((1usize << k) - 1).unwrap();
        let g = p.g(&vec![1.0; p.m + 1]).unwrap();
        errors.push((g - 1.0 / 12.0).abs());
    }
    let ratios: Vec<f64> = errors.windows(2).map(|e| e[0] / e[1]).collect();
    let ratios_ok = ratios.iter().all(|r| (3.6..=4.4).contains(r));

    let problem = PdeProblem::unit_source(127).unwrap();
    let field = CoefficientField::Uniform(UniformCoefficient::standard(4, &problem.midpoints()).unwrap());
    let model = PdeModel::new(problem, field).unwrap();
    let qmc = model.expected_functional(&cbc(1 << 12, &product_09(4), CbcMode::Fast), 16, 2024).unwrap();
    let mc = model.monte_carlo(1_000_000, 2024).unwrap();
    let z = (qmc.value - mc.value).abs() / qmc.se_or_zero().hypot(mc.se_or_zero());

    // circulant embedding on 64 grid points
    let grid = 64;
    let dx = 1.0 / (grid - 1) as f64;
    let cov = exponential_covariance(1.0, 0.3);
    let emb = CirculantEmbedding::new(&cov, grid, dx).unwrap();
    let min_eig = emb.eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
    let draws = 100_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut y = vec![0.0; emb.len()];
    let mut z_draw = vec![0.0; grid];
    let mut scratch = emb.scratch();
    let mut acc = vec![0.0; grid * grid];
    for _ in 0..draws {
        y.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        emb.sample(&y, &mut z_draw, &mut scratch);
        for i in 0..grid {
            for j in i..grid {
                acc[i * grid + j] += z_draw[i] * z_draw[j];
            }
        }
    }
    let c = |i: usize, j: usize| cov((i as f64 - j as f64).abs() * dx);
    let (mut outside, mut entries, mut worst) = (0, 0, 0.0f64);
    for i in 0..grid {
        for j in i..grid {
            let est = acc[i * grid + j] / draws as f64;
            let se = ((c(i, i) * c(j, j) + c(i, j).powi(2)) / draws as f64).sqrt();
            let k = (est - c(i, j)).abs() / se;
            worst = worst.max(k);
            outside += usize::from(k > 3.0);
            entries += 1;
        }
    }
    check(
        ratios_ok && z <= 3.0 && min_eig >= 0.0 && outside == 0,
        format!(
            "error ratios {:?}; QMC {:.6} vs MC {:.6} ({z:.2} SE); min eigenvalue {min_eig:.2e}; \
             {outside}/{entries} covariance entries outside 3 SE (max {worst:.2} SE; an exact sampler \
             exceeds 3 SE on about {:.1} entries by chance)",
            ratios.iter().map(|r| (r * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            qmc.value,
            mc.value,
            entries as f64 * 0.0026998
        ),
    )
}

fn c9_savers() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    // anchored decomposition recovers f
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let coeffs: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
    let poly = |y: &[f64]| -> f64 {
        let mut total = 0.0;
        for (idx, c) in coeffs.iter().enumerate() {
            let mut term = *c;
            for (j, yj) in y.iter().enumerate() {
                term *= yj.powi(((idx >> (2 * j)) & 3) as i32);
            }
            total += term;
        }
        total
    };
    let anchor: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
    let mut anchored_gap = 0.0f64;
    for _ in 0..100 {
        let y: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sum: f64 =
            (0u64..16).map(|mask| anchored_component(poly, &Subset::from_mask(mask), &anchor, &y).unwrap()).sum();
        anchored_gap = anchored_gap.max((sum - poly(&y)).abs() / poly(&y).abs().max(1.0));
    }
    ok &= anchored_gap <= 1e-12;
    notes.push(format!("anchored sum gap {anchored_gap:.1e}"));

    // MDM with matched tensor rules equals direct tensor quadrature
    let gl = gauss_legendre(8);
    let additive = |y: &[f64]| -> f64 {
        y.iter().enumerate().map(|(j, &v)| (v / (j + 1) as f64).exp() + (3.0 * v).sin()).sum()
    };
    let pairwise = |y: &[f64]| -> f64 {
        let mut t: f64 = y.iter().map(|v| v.cos()).sum();
        for i in 0..y.len() {
            for j in i + 1..y.len() {
                t += (y[i] + 2.0 * y[j]).sin() / (1 + i + j) as f64;
            }
        }
        t
    };
    let mut mdm_gap = 0.0f64;
    for (s, order) in [(6usize, 1usize), (5, 2)] {
        let active: Vec<Subset> = (0u64..1 << s).map(Subset::from_mask).filter(|u| u.len() <= order).collect();
        let f: &(dyn Fn(&[f64]) -> f64 + Sync) = if order == 1 { &additive } else { &pairwise };
        let anchor = vec![0.5; s];
        let mdm = mdm_estimate(f, &anchor, &active, 1, |k, _| Cubature::tensor(&gl, active[k].len()), 0).unwrap();
        let direct = Cubature::tensor(&gl, s).unwrap().apply(f);
        mdm_gap = mdm_gap.max((mdm.value - direct).abs() / direct.abs().max(1.0));
    }
    ok &= mdm_gap <= 1e-10;
    notes.push(format!("MDM vs tensor {mdm_gap:.1e}"));

    // multilevel telescoping with shared nodes
    let dims = [2usize, 4, 8, 16];
    let pricers: Vec<Pricer> = dims
        .iter()
        .map(|&d| Pricer::new(AsianOption::standard().with_steps(d), Factorization::BrownianBridge).unwrap())
        .collect();
    let mut fam = LevelFamily::new();
    for (p, &d) in pricers.iter().zip(&dims) {
        fam.push(d, d as f64, move |x| p.payoff_unit(x, &mut p.scratch())).unwrap();
    }
    let gv = cbc(1 << 10, &product_09(16), CbcMode::Fast);
    let telescoped: f64 =
        (0..dims.len()).map(|l| level_difference(&fam, l, &gv.truncate(dims[l]), 8, 2024).unwrap().value).sum();
    let finest = shifted_lattice(&gv, 8, 2024, |x| pricers[3].payoff_unit(x, &mut pricers[3].scratch())).unwrap();
    let tele_gap = (telescoped - finest.value).abs() / finest.value.abs();
    ok &= tele_gap <= 1e-12;
    notes.push(format!("telescoping gap {tele_gap:.1e}"));

    // fast matrix-vector products
    let mvm_gap = {
        let gv = cbc(127, &product_09(32), CbcMode::Fast);
        let plan = FastMvmPlan::new(&gv, Chi::Norminv, None).unwrap();
        let a = DMatrix::from_fn(32, 8, |_, _| rng.random_range(-1.0..1.0));
        (fast_mvm(&plan, &a).unwrap() - naive_mvm(&plan, &a).unwrap()).abs().max()
    };
    ok &= mvm_gap <= 1e-10;
    notes.push(format!("fast vs naive MVM {mvm_gap:.1e}"));

    let gv = cbc(8191, &product_09(256), CbcMode::Fast);
    let plan = FastMvmPlan::new(&gv, Chi::Norminv, None).unwrap();
    let a = DMatrix::from_fn(256, 16, |_, _| rng.random_range(-1.0..1.0));
    let time = |f: &dyn Fn() -> DMatrix<f64>| {
        (0..3)
            .map(|_| {
                let t = Instant::now();
                std::hint::black_box(f());
                t.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let t_fast = time(&|| fast_mvm(&plan, &a).unwrap());
    let t_naive = time(&|| naive_mvm(&plan, &a).unwrap());
    ok &= t_fast < t_naive;
    notes.push(format!("n=8191 s=256 q=16: fast {:.1} ms, naive {:.1} ms", t_fast * 1e3, t_naive * 1e3));

    check(ok, notes.join("; "))
}

// ---------------------------------------------------------------------------

fn scratch_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn qmc(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_qmc")).args(args).output().unwrap()
}

fn deterministic_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            name != "manifest.json" && name != "timings.csv"
        })
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect()
}

fn c10_replay() -> Outcome {
    let root = scratch_dir("replay");
    let rule_dir = root.join("rule-src");
    let status = qmc(&["cbc", "--n", "127", "--s", "5", "--out", rule_dir.to_str().unwrap()]);
    if !status.status.success() {
        return Err("could not build a rule for the points command".into());
    }
    let vector = rule_dir.join("vector.txt");
    let calib = root.join("calibration-input.json");
    std::fs::write(
        &calib,
        r#"{"lambda": 1.0, "a": {"0": 1.0, "1": 0.5, "0,1": 0.25}, "b": {"0": 1.0, "1": 0.25, "0,1": 0.0625}}"#,
    )
    .unwrap();
    let cases: Vec<(&str, Vec<String>)> = vec![
        ("cbc", vec!["cbc", "--n", "127", "--s", "5"]),
        ("cbc-pow2", vec!["cbc", "--n", "256", "--s", "6", "--mode", "naive"]),
        ("cbc-interlaced", vec!["cbc", "--n", "64", "--s", "2", "--alpha", "2"]),
        ("points", vec!["points", "--rule", vector.to_str().unwrap(), "--shifts", "2"]),
        ("bound", vec!["bound", "--n", "127", "--s", "5"]),
        ("calibrate", vec!["calibrate", "--input", calib.to_str().unwrap()]),
        ("calibrate-pod", vec!["calibrate", "--derivative-bounds", "1,0.5,0.25"]),
        ("option", vec!["option", "--n", "256", "--shifts", "4"]),
        ("option-smoothed", vec!["option", "--n", "256", "--shifts", "4", "--smoothed"]),
        ("glmm", vec!["glmm", "--n", "256", "--shifts", "4"]),
        ("pde", vec!["pde", "--n", "256", "--shifts", "4", "--m", "31"]),
        ("mdm", vec!["mdm", "--s", "16", "--eps", "1e-2", "--shifts", "4"]),
        ("ml", vec!["ml", "--levels", "3", "--n", "128", "--shifts", "4"]),
        ("mvm-bench", vec!["mvm-bench", "--n", "127", "--s", "16", "--q", "4", "--repeats", "1"]),
        ("convergence", vec!["convergence", "--m-min", "5", "--m-max", "7", "--shifts", "4"]),
    ]
    .into_iter()
    .map(|(k, v)| (k, v.into_iter().map(String::from).collect()))
    .collect();
    let mut failures = Vec::new();
    for (label, args) in &cases {
        let first = root.join(format!("{label}-1"));
        let second = root.join(format!("{label}-2"));
        let mut a: Vec<&str> = args.iter().map(String::as_str).collect();
        a.extend(["--threads", "1", "--out", first.to_str().unwrap()]);
        let run = qmc(&a);
        if !run.status.success() {
            failures.push(format!("{label}: run failed: {}", String::from_utf8_lossy(&run.stderr).trim()));
            continue;
        }
        let manifest = first.join("manifest.json");
        let replay = qmc(&[
            "replay",
            manifest.to_str().unwrap(),
            "--threads",
            "4",
            "--out",
            second.to_str().unwrap(),
        ]);
        if !replay.status.success() {
            failures.push(format!("{label}: replay reported differences"));
            continue;
        }
        if deterministic_files(&first) != deterministic_files(&second) {
            failures.push(format!("{label}: output bytes differ"));
        }
    }
    if failures.is_empty() {
        Ok(format!("{} commands replayed with identical digests", cases.len()))
    } else {
        Err(failures.join("; "))
    }
}

// ---------------------------------------------------------------------------

type Criterion = (usize, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "fast CBC matches naive CBC", c1_fast_equals_naive),
        (2, "worst-case error matches double-sum oracle", c2_wce_oracle),
        (3, "smooth integrand convergence rate", c3_smooth_rate),
        (4, "interlaced rule higher-order rate", c4_interlaced_rate),
        (5, "constructed rules satisfy the error bounds", c5_bounds_hold),
        (6, "option factorizations, rates and MC agreement", c6_option),
        (7, "GLMM accuracy and density invariance", c7_glmm),
        (8, "PDE discretization, QMC vs MC, circulant covariance", c8_pde),
        (9, "cost savers are exact where they should be", c9_savers),
        (10, "CLI replays reproduce outputs", c10_replay),
    ];
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {id:>2} {tag} {name} [{secs:.1} s]: {detail}");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
