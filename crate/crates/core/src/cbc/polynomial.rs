//! CBC for polynomial lattice rules over GF(2), optionally in `alpha * s`
//! dimensions for subsequent digit interlacing.
//!
//! For `alpha = 1` the criterion is the weighted Walsh-space figure of merit
//! with kernel `psi(x) = 1/6 - 2^{floor(log2 x) - 1}`, `psi(0) = 1/6`.
//! For `alpha >= 2` each block of `alpha` components contributes
//! `Y(i) = 2^{alpha(alpha-1)/2} (prod_l (1 + phi_alpha(x_l(i))) - 1)` with
//! `phi_alpha(x) = (1 - 2^{(alpha-1) floor(log2 x)} (2^alpha - 1)) / (2^alpha - 2)`
//! and `phi_alpha(0) = 1 / (2^alpha - 2)`, and the criterion is
//! `sum_{u != empty} gamma_u (1/n) sum_i prod_{j in u} Y_j(i)`.

use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::correlate::CyclicGroupKernel;
use super::state::WeightState;
use super::{pick_candidate, CbcMode, CbcStep, CbcTrace, TIE_TOLERANCE};
use crate::error::{invalid, Error, Result};
use crate::points::{gf2, interlace, poly_lattice_points, PointSet, PolynomialLatticeRule};
use crate::weights::WeightModel;

/// Kernel values `phi(X / 2^m)` for `X = 0..2^m`.
pub fn walsh_kernel(alpha: usize, m: u32) -> Vec<f64> {
    let n = 1usize << m;
    let a = alpha as i32;
    (0..n)
        .map(|x| {
            if x == 0 {
                return if alpha == 1 { 1.0 / 6.0 } else { 1.0 / (2f64.powi(a) - 2.0) };
            }
            // floor(log2(x / 2^m))
            let lg = (usize::BITS - 1 - x.leading_zeros()) as i32 - m as i32;
            if alpha == 1 {
                1.0 / 6.0 - 2f64.powi(lg - 1)
            } else {
                (1.0 - 2f64.powi((a - 1) * lg) * (2f64.powi(a) - 1.0)) / (2f64.powi(a) - 2.0)
            }
        })
        .collect()
}

fn block_factor(alpha: usize) -> f64 {
    2f64.powi((alpha * (alpha - 1) / 2) as i32)
}

#[derive(Clone, Debug)]
pub struct InterlacedConfig {
    pub m: u32,
    /// Dimension after interlacing.
    pub s: usize,
    pub alpha: usize,
    /// Weights of the `s` interlaced coordinates.
    pub weights: WeightModel,
    pub mode: CbcMode,
    /// Irreducible modulus of degree `m`; the first one found if `None`.
    pub modulus: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InterlacedRule {
    /// The underlying rule in `alpha * s` dimensions.
    pub rule: PolynomialLatticeRule,
    pub alpha: usize,
    pub trace: CbcTrace,
}

impl InterlacedRule {
    pub fn s(&self) -> usize {
        self.rule.gens().len() / self.alpha
    }

    /// The `2^m` interlaced points in `s` dimensions.
    pub fn points(&self) -> Result<PointSet> {
        interlace(&poly_lattice_points(&self.rule)?, self.alpha)
    }
}

/// Residue-to-point tables shared by the naive and fast scans.
struct Field {
    m: u32,
    p: u64,
    n: usize,
    /// `tv[r]` is the digit value of the point for residue `r`.
    tv: Vec<usize>,
}

impl Field {
    fn new(p: u64) -> Result<Self> {
        let m = gf2::degree(p).ok_or_else(|| Error::InvalidParameter("zero modulus".into()))?;
        if m == 0 || m > PolynomialLatticeRule::MAX_DEGREE {
            return invalid(format!("modulus degree {m} outside 1..={}", PolynomialLatticeRule::MAX_DEGREE));
        }
        if !gf2::is_irreducible(p) {
            return Err(Error::Construction(format!("modulus {p:#b} is reducible")));
        }
        let n = 1usize << m;
        let tv = (0..n as u64).map(|r| gf2::truncated_value(r, p) as usize).collect();
        Ok(Self { m, p, n, tv })
    }

    fn kernel_values(&self, kernel: &[f64], q: u64) -> Vec<f64> {
        (0..self.n as u64).map(|i| kernel[self.tv[gf2::mul_mod(i, q, self.p) as usize]]).collect()
    }

    fn naive_correlate(&self, kernel: &[f64], v: &[f64]) -> Vec<Option<f64>> {
        (0..self.n as u64)
            .into_par_iter()
            .map(|q| {
                if q == 0 {
                    return None;
                }
                let mut acc = 0.0;
                for (i, &vi) in v.iter().enumerate() {
                    acc += kernel[self.tv[gf2::mul_mod(i as u64, q, self.p) as usize]] * vi;
                }
                Some(acc)
            })
            .collect()
    }
}

struct FieldFast {
    group: CyclicGroupKernel,
}

impl FieldFast {
    fn new(field: &Field, kernel: &[f64]) -> Result<Self> {
        let g = gf2::primitive_element(field.p)
            .ok_or_else(|| Error::Construction("no primitive element found".into()))?;
        let mut elems = Vec::with_capacity(field.n - 1);
        let mut x = 1u64;
        for _ in 0..field.n - 1 {
            elems.push(x as usize);
            x = gf2::mul_mod(x, g, field.p);
        }
        let mut planner = FftPlanner::new();
        let group = CyclicGroupKernel::new(elems, |e| kernel[field.tv[e]], &mut planner);
        Ok(Self { group })
    }

    fn correlate(&self, field: &Field, kernel: &[f64], v: &[f64]) -> Vec<Option<f64>> {
        let base = kernel[0] * v[0];
        let mut out = vec![None; field.n];
        for (b, c) in self.group.correlate(|e| v[e]).into_iter().enumerate() {
            out[self.group.elems[b]] = Some(base + c);
        }
        out
    }
}

/// CBC for an interlaced polynomial lattice rule with `2^m` points.
pub fn cbc_interlaced(cfg: &InterlacedConfig) -> Result<InterlacedRule> {
    if cfg.alpha == 0 {
        return invalid("interlacing factor must be >= 1");
    }
    if cfg.s == 0 {
        return invalid("CBC needs s >= 1");
    }
    if cfg.m == 0 {
        return invalid("m must be >= 1");
    }
    if cfg.alpha * cfg.m as usize > 64 {
        return invalid("alpha * m must not exceed 64 digits");
    }
    let p = match cfg.modulus {
        Some(p) => p,
        None => gf2::first_irreducible(cfg.m)
            .ok_or_else(|| Error::Construction(format!("no irreducible polynomial of degree {}", cfg.m)))?,
    };
    let field = Field::new(p)?;
    if field.m != cfg.m {
        return invalid(format!("modulus degree {} differs from m = {}", field.m, cfg.m));
    }
    let kernel = walsh_kernel(cfg.alpha, cfg.m);
    let max_kernel = kernel.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let fast = match cfg.mode {
        CbcMode::Fast => Some(FieldFast::new(&field, &kernel)?),
        CbcMode::Naive => None,
    };
    let c = block_factor(cfg.alpha);
    let n = field.n;
    let mut st = WeightState::new(&cfg.weights, n, cfg.s)?;
    let mut gens = Vec::with_capacity(cfg.alpha * cfg.s);
    let mut steps = Vec::with_capacity(cfg.alpha * cfg.s);
    for _block in 0..cfg.s {
        let deriv = st.derivative();
        let mut prod = vec![1.0; n];
        let mut y = vec![0.0; n];
        for _ in 0..cfg.alpha {
            let v: Vec<f64> = prod.iter().zip(&deriv).map(|(p, d)| c * p * d).collect();
            let corr = match &fast {
                Some(f) => f.correlate(&field, &kernel, &v),
                None => field.naive_correlate(&kernel, &v),
            };
            let scale = max_kernel * v.iter().map(|x| x.abs()).sum::<f64>();
            let q = pick_candidate(&corr, TIE_TOLERANCE * scale)
                .ok_or_else(|| Error::Construction("no admissible polynomial".into()))?
                as u64;
            let phi = field.kernel_values(&kernel, q);
            for i in 0..n {
                y[i] += c * prod[i] * phi[i];
                prod[i] *= 1.0 + phi[i];
            }
            let criterion = st.criterion_with(&y, &deriv);
            steps.push(CbcStep { dim: gens.len(), choice: q, criterion });
            gens.push(q);
        }
        st.commit(&y, &deriv);
    }
    let rule = PolynomialLatticeRule::new(p, gens)?;
    let trace = CbcTrace { requested_mode: cfg.mode, mode: cfg.mode, warning: None, steps };
    Ok(InterlacedRule { rule, alpha: cfg.alpha, trace })
}

/// The criterion minimized by [`cbc_interlaced`], evaluated for a given
/// rule in `alpha * s` dimensions.
pub fn interlaced_criterion(rule: &PolynomialLatticeRule, alpha: usize, w: &WeightModel) -> Result<f64> {
    if alpha == 0 || rule.gens().len() % alpha != 0 {
        return invalid("generator count must be a multiple of alpha");
    }
    let field = Field::new(rule.modulus())?;
    let kernel = walsh_kernel(alpha, field.m);
    let c = block_factor(alpha);
    let s = rule.gens().len() / alpha;
    let mut st = WeightState::new(w, field.n, s)?;
    let mut value = 0.0;
    for block in rule.gens().chunks(alpha) {
        let mut prod = vec![1.0; field.n];
        for &q in block {
            let phi = field.kernel_values(&kernel, q);
            prod.iter_mut().zip(&phi).for_each(|(p, f)| *p *= 1.0 + f);
        }
        let y: Vec<f64> = prod.iter().map(|p| c * (p - 1.0)).collect();
        let deriv = st.derivative();
        value = st.criterion_with(&y, &deriv);
        st.commit(&y, &deriv);
    }
    Ok(value)
}
