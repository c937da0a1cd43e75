//! Randomly shifted lattice estimators, seed derivation, Monte Carlo
//! references and convergence-slope fitting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::points::{GeneratingVector, PointSet, RandomShift};

/// Mean of independent replicate estimates with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    /// `None` when fewer than two replicates are available.
    pub std_error: Option<f64>,
    /// Points per replicate.
    pub n: u64,
    /// Per-replicate means (one per random shift).
    pub replicates: Vec<f64>,
    /// Master seed the replicate seeds were derived from.
    pub seed: u64,
}

impl Estimate {
    pub fn from_replicates(replicates: Vec<f64>, n: u64, seed: u64) -> Self {
        let r = replicates.len();
        let value = replicates.iter().sum::<f64>() / r as f64;
        let std_error = (r >= 2).then(|| {
            let var = replicates.iter().map(|x| (x - value).powi(2)).sum::<f64>() / (r - 1) as f64;
            (var / r as f64).sqrt()
        });
        Self { value, std_error, n, replicates, seed }
    }

    /// A deterministic value with zero standard error.
    pub fn exact(value: f64) -> Self {
        Self { value, std_error: Some(0.0), n: 1, replicates: vec![value], seed: 0 }
    }

    pub fn shifts(&self) -> usize {
        self.replicates.len()
    }

    /// Standard error, or zero when unavailable.
    pub fn se_or_zero(&self) -> f64 {
        self.std_error.unwrap_or(0.0)
    }

    /// Whether two estimates agree within `k` combined standard errors.
    pub fn agrees_with(&self, other: &Estimate, k: f64) -> bool {
        let se = self.se_or_zero().hypot(other.se_or_zero());
        (self.value - other.value).abs() <= k * se
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of stream `k` derived from a master seed.
pub fn derive_seed(master: u64, k: u64) -> u64 {
    splitmix64(splitmix64(master) ^ k.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// The random shift used for replicate `r` under master seed `seed`.
pub fn shift_for(seed: u64, r: usize, s: usize) -> RandomShift {
    RandomShift::from_seed(derive_seed(seed, r as u64), s)
}

/// Randomly shifted lattice rule with per-replicate scratch state.
///
/// Replicates run in parallel; within a replicate the points are summed
/// sequentially in index order, so results do not depend on thread count.
pub fn shifted_lattice_with<S, I, F>(
    gv: &GeneratingVector,
    shifts: usize,
    seed: u64,
    init: I,
    f: F,
) -> Result<Estimate>
where
    I: Fn() -> S + Sync,
    F: Fn(&mut S, &[f64]) -> f64 + Sync,
{
    if shifts == 0 {
        return invalid("at least one random shift is required");
    }
    let s = gv.s();
    let n = gv.n();
    let reps: Vec<f64> = (0..shifts)
        .into_par_iter()
        .map(|r| {
            let shift = shift_for(seed, r, s);
            let mut state = init();
            let mut x = vec![0.0; s];
            let mut acc = 0.0;
            for i in 1..=n {
                gv.point_into(i, Some(&shift.delta), &mut x);
                acc += f(&mut state, &x);
            }
            acc / n as f64
        })
        .collect();
    Ok(Estimate::from_replicates(reps, n, seed))
}

/// Randomly shifted lattice rule for a stateless integrand on `[0,1)^s`.
pub fn shifted_lattice<F>(gv: &GeneratingVector, shifts: usize, seed: u64, f: F) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    shifted_lattice_with(gv, shifts, seed, || (), |_, x| f(x))
}

/// Equal-weight average over a fixed point set.
pub fn point_set_average<F>(ps: &PointSet, f: F) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    ps.rows().map(f).sum::<f64>() / ps.n() as f64
}

/// Plain Monte Carlo on `[0,1)^s` with `samples` points; chunks of the
/// sample use independent derived seeds so the result is thread-count
/// independent.
pub fn monte_carlo<F>(s: usize, samples: u64, seed: u64, f: F) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    monte_carlo_with(s, samples, seed, || (), |_, x| f(x))
}

pub fn monte_carlo_with<S, I, F>(s: usize, samples: u64, seed: u64, init: I, f: F) -> Result<Estimate>
where
    I: Fn() -> S + Sync,
    F: Fn(&mut S, &[f64]) -> f64 + Sync,
{
    const CHUNK: u64 = 1 << 14;
    if samples < 2 {
        return invalid("Monte Carlo needs at least 2 samples");
    }
    let chunks = samples.div_ceil(CHUNK);
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, c));
            let mut state = init();
            let count = CHUNK.min(samples - c * CHUNK);
            let mut x = vec![0.0; s];
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                x.iter_mut().for_each(|v| *v = rng.random::<f64>());
                let y = f(&mut state, &x);
                s1 += y;
                s2 += y * y;
            }
            (s1, s2)
        })
        .collect();
    let (s1, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let nf = samples as f64;
    let mean = s1 / nf;
    let var = ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
    Ok(Estimate { value: mean, std_error: Some((var / nf).sqrt()), n: samples, replicates: vec![mean], seed })
}

/// Least-squares slope of `log(err)` against `log(n)`.
pub fn fit_slope(ns: &[f64], errs: &[f64]) -> Result<f64> {
    if ns.len() != errs.len() || ns.len() < 2 {
        return invalid("slope fit needs at least two (n, error) pairs");
    }
    if errs.iter().chain(ns).any(|&v| !(v > 0.0)) {
        return invalid("slope fit needs positive n and errors");
    }
    let xs: Vec<f64> = ns.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|v| v.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Root-mean-square deviation of replicate estimates from `exact`.
pub fn rms_error(est: &Estimate, exact: f64) -> f64 {
    let r = est.replicates.len() as f64;
    (est.replicates.iter().map(|x| (x - exact).powi(2)).sum::<f64>() / r).sqrt()
}

/// Smooth test integrand `prod_j (1 + gamma_j B2(x_j))` with integral one,
/// where `B2(x) = x^2 - x + 1/6`.
#[derive(Clone, Debug)]
pub struct SmoothProduct {
    pub gamma: Vec<f64>,
}

impl SmoothProduct {
    pub fn new(gamma: Vec<f64>) -> Self {
        Self { gamma }
    }

    pub fn geometric(base: f64, s: usize) -> Self {
        Self::new((1..=s).map(|j| base.powi(j as i32)).collect())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.gamma
            .iter()
            .zip(x)
            .map(|(g, &t)| 1.0 + g * (t * t - t + 1.0 / 6.0))
            .product()
    }

    pub const INTEGRAL: f64 = 1.0;
}
