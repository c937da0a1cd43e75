//! Component-by-component construction of rank-1 lattice rules and of
//! (interlaced) polynomial lattice rules.
//!
//! The lattice criterion is the shift-averaged worst-case error in the
//! unanchored Sobolev space with smoothness one,
//! `e^2 = sum_{u != empty} gamma_u (1/n) sum_i prod_{j in u} B2({i z_j / n})`
//! with `B2(x) = x^2 - x + 1/6`.

mod correlate;
mod polynomial;
mod state;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numtheory::{gcd, is_power_of_two, is_prime, primitive_root};
use crate::points::GeneratingVector;
use crate::weights::WeightModel;

pub use polynomial::{
    cbc_interlaced, interlaced_criterion, walsh_kernel, InterlacedConfig, InterlacedRule,
};

use correlate::{CyclicGroupKernel, PowerOfTwoUnits};
use state::WeightState;

/// Relative width of the window within which candidates count as tied;
/// ties go to the smallest candidate.
pub const TIE_TOLERANCE: f64 = 1e-11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CbcMode {
    Naive,
    Fast,
}

impl FromStr for CbcMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Self::Naive),
            "fast" => Ok(Self::Fast),
            other => invalid(format!("unknown CBC mode {other:?}")),
        }
    }
}

impl fmt::Display for CbcMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Naive => "naive",
            Self::Fast => "fast",
        })
    }
}

#[derive(Clone, Debug)]
pub struct CbcConfig {
    pub n: u64,
    pub s: usize,
    pub weights: WeightModel,
    pub mode: CbcMode,
}

impl CbcConfig {
    pub fn new(n: u64, s: usize, weights: WeightModel, mode: CbcMode) -> Self {
        Self { n, s, weights, mode }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CbcStep {
    /// 0-based coordinate index.
    pub dim: usize,
    /// Chosen component (lattice) or generating polynomial bits.
    pub choice: u64,
    /// Squared criterion after fixing this coordinate.
    pub criterion: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CbcTrace {
    pub requested_mode: CbcMode,
    pub mode: CbcMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    pub steps: Vec<CbcStep>,
}

impl CbcTrace {
    pub fn final_criterion(&self) -> f64 {
        self.steps.last().map_or(0.0, |st| st.criterion)
    }
}

/// `B2(k/n)` for `k = 0..n`, evaluated at `min(k, n-k)` so that the table
/// is exactly symmetric.
pub fn bernoulli_table(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let x = k.min(n - k) as f64 / n as f64;
            x * x - x + 1.0 / 6.0
        })
        .collect()
}

/// Squared shift-averaged worst-case error of the lattice rule `gv`.
pub fn wce_sq(gv: &GeneratingVector, w: &WeightModel) -> Result<f64> {
    let n = usize::try_from(gv.n()).map_err(|_| Error::TooLarge("n".into()))?;
    let table = bernoulli_table(n);
    let mut st = WeightState::new(w, n, gv.s())?;
    let mut value = 0.0;
    for &z in gv.z() {
        let omega: Vec<f64> = (0..n).map(|i| table[(i as u128 * z as u128 % n as u128) as usize]).collect();
        let deriv = st.derivative();
        value = st.criterion_with(&omega, &deriv);
        st.commit(&omega, &deriv);
    }
    Ok(value)
}

/// Index of the chosen candidate: the smallest candidate whose value lies
/// within `tol` of the minimum. `values` is indexed by candidate and holds
/// `None` for inadmissible ones.
pub(crate) fn pick_candidate(values: &[Option<f64>], tol: f64) -> Option<usize> {
    let min = values.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    values.iter().position(|v| v.is_some_and(|x| x <= min + tol))
}

fn fast_supported(n: u64) -> bool {
    n >= 2 && (is_prime(n) || is_power_of_two(n))
}

/// Fast evaluation of `corr[z] = sum_i kernel[i z mod n] v[i]` for all
/// units `z`, via the cyclic structure of the unit group.
enum LatticeFast {
    Prime(CyclicGroupKernel),
    PowerOfTwo(Vec<PowerOfTwoLevel>),
}

enum PowerOfTwoLevel {
    /// Units of `Z_{2^k}` for small `k`, correlated directly.
    Direct,
    Group(PowerOfTwoUnits),
}

const DIRECT_POW2_MAX: u32 = 4;

impl LatticeFast {
    fn new(n: usize, table: &[f64]) -> Self {
        let mut planner = FftPlanner::new();
        if is_prime(n as u64) {
            let g = primitive_root(n as u64).expect("prime modulus has a primitive root") as usize;
            let mut elems = Vec::with_capacity(n - 1);
            let mut x = 1usize;
            for _ in 0..n - 1 {
                elems.push(x);
                x = x * g % n;
            }
            Self::Prime(CyclicGroupKernel::new(elems, |e| table[e], &mut planner))
        } else {
            let m = n.trailing_zeros();
            let levels = (1..=m)
                .map(|k| {
                    // points i = 2^{m-k} u see the kernel at 2^{m-k} (u z mod 2^k)
                    let stride = 1usize << (m - k);
                    if k <= DIRECT_POW2_MAX {
                        PowerOfTwoLevel::Direct
                    } else {
                        PowerOfTwoLevel::Group(PowerOfTwoUnits::new(k, |r| table[stride * r], &mut planner))
                    }
                })
                .collect();
            Self::PowerOfTwo(levels)
        }
    }

    fn correlate(&self, n: usize, table: &[f64], v: &[f64]) -> Vec<Option<f64>> {
        let mut out = vec![None; n];
        let base = table[0] * v[0];
        match self {
            Self::Prime(kernel) => {
                let corr = kernel.correlate(|e| v[e]);
                for (b, c) in corr.into_iter().enumerate() {
                    out[kernel.elems[b]] = Some(base + c);
                }
            }
            Self::PowerOfTwo(levels) => {
                let m = n.trailing_zeros();
                let mut acc = vec![0.0; n];
                for (idx, level) in levels.iter().enumerate() {
                    let k = idx as u32 + 1;
                    let modulus = 1usize << k;
                    let stride = 1usize << (m - k);
                    let mut level_corr = vec![0.0; modulus];
                    match level {
                        PowerOfTwoLevel::Direct => {
                            for z in (1..modulus).step_by(2) {
                                level_corr[z] = (1..modulus)
                                    .step_by(2)
                                    .map(|u| table[stride * (u * z % modulus)] * v[stride * u])
                                    .sum();
                            }
                        }
                        PowerOfTwoLevel::Group(g) => {
                            g.correlate(|u| v[stride * u], |z, val| level_corr[z] = val);
                        }
                    }
                    for z in (1..n).step_by(2) {
                        acc[z] += level_corr[z % modulus];
                    }
                }
                for z in (1..n).step_by(2) {
                    out[z] = Some(base + acc[z]);
                }
            }
        }
        out
    }
}

fn naive_correlate(n: usize, table: &[f64], v: &[f64]) -> Vec<Option<f64>> {
    (0..n)
        .into_par_iter()
        .map(|z| {
            if gcd(z as u64, n as u64) != 1 {
                return None;
            }
            let mut acc = 0.0;
            let mut k = 0usize;
            for &vi in v {
                acc += table[k] * vi;
                k += z;
                if k >= n {
                    k -= n;
                }
            }
            Some(acc)
        })
        .collect()
}

/// Builds a generating vector by CBC, minimizing [`wce_sq`] one coordinate
/// at a time.
pub fn cbc_lattice(cfg: &CbcConfig) -> Result<(GeneratingVector, CbcTrace)> {
    if cfg.n < 2 {
        return invalid("CBC needs n >= 2");
    }
    if cfg.s == 0 {
        return invalid("CBC needs s >= 1");
    }
    let n = usize::try_from(cfg.n).map_err(|_| Error::TooLarge("n".into()))?;
    let mut mode = cfg.mode;
    let mut warning = None;
    if mode == CbcMode::Fast && !fast_supported(cfg.n) {
        mode = CbcMode::Naive;
        warning = Some(format!("fast CBC needs n prime or a power of 2; n = {n} uses naive mode"));
    }
    let table = bernoulli_table(n);
    let max_kernel = table.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let fast = (mode == CbcMode::Fast).then(|| LatticeFast::new(n, &table));
    let mut st = WeightState::new(&cfg.weights, n, cfg.s)?;
    let mut z = Vec::with_capacity(cfg.s);
    let mut steps = Vec::with_capacity(cfg.s);
    for dim in 0..cfg.s {
        let deriv = st.derivative();
        let corr = match &fast {
            Some(f) => f.correlate(n, &table, &deriv),
            None => naive_correlate(n, &table, &deriv),
        };
        let scale = max_kernel * deriv.iter().map(|x| x.abs()).sum::<f64>();
        let zd = pick_candidate(&corr, TIE_TOLERANCE * scale)
            .ok_or_else(|| Error::Construction("no admissible candidate".into()))?;
        let omega: Vec<f64> = (0..n).map(|i| table[(i as u128 * zd as u128 % n as u128) as usize]).collect();
        let criterion = st.criterion_with(&omega, &deriv);
        st.commit(&omega, &deriv);
        z.push(zd as u64);
        steps.push(CbcStep { dim, choice: zd as u64, criterion });
    }
    let gv = GeneratingVector::new(cfg.n, z)?;
    Ok((gv, CbcTrace { requested_mode: cfg.mode, mode, warning, steps }))
}
