//! Per-point accumulators that make the weighted criterion an affine
//! function of the kernel values of the next coordinate.
//!
//! For coordinates `0..d` already fixed, with kernel values `omega_j(i)` at
//! point `i`, the state stores enough to evaluate
//! `total(i) = sum_{u != empty, u in 0..d} gamma_u prod_{j in u} omega_j(i)`
//! and the derivative `D(i)` of `total(i)` with respect to `omega_d(i)`.

use crate::error::{Error, Result};
use crate::weights::WeightModel;

/// Limit on `2^s * n` stored values for explicit weights.
const EXPLICIT_STATE_LIMIT: usize = 1 << 27;

pub(crate) struct WeightState {
    n: usize,
    d: usize,
    total: Vec<f64>,
    kind: Kind,
}

enum Kind {
    Product { gamma: Vec<f64>, prod: Vec<f64> },
    /// POD and order-dependent: `p[l](i)` is the elementary symmetric sum of
    /// degree `l` in `upsilon_j omega_j(i)`.
    Order { gamma_order: Vec<f64>, upsilon: Vec<f64>, p: Vec<Vec<f64>> },
    /// SPOD: `q[k](i)` is the coefficient of `t^k` in
    /// `prod_j (1 + omega_j(i) sum_nu upsilon_j(nu) t^nu)`.
    Spod { gamma_order: Vec<f64>, upsilon: Vec<Vec<f64>>, q: Vec<Vec<f64>> },
    /// Explicit: one product per subset of the fixed coordinates, by bitmask.
    Explicit { weights: Vec<f64>, prods: Vec<Vec<f64>> },
}

impl WeightState {
    pub fn new(w: &WeightModel, n: usize, s: usize) -> Result<Self> {
        if s > w.s() {
            return Err(Error::DimensionMismatch { expected: w.s(), got: s });
        }
        let kind = match w {
            WeightModel::Product { upsilon } => {
                Kind::Product { gamma: upsilon[..s].to_vec(), prod: vec![1.0; n] }
            }
            WeightModel::OrderDependent { gamma_order, .. } => Kind::Order {
                gamma_order: gamma_order.clone(),
                upsilon: vec![1.0; s],
                p: vec![vec![1.0; n]],
            },
            WeightModel::Pod { gamma_order, upsilon } => Kind::Order {
                gamma_order: gamma_order.clone(),
                upsilon: upsilon[..s].to_vec(),
                p: vec![vec![1.0; n]],
            },
            WeightModel::Spod { gamma_order, upsilon, .. } => Kind::Spod {
                gamma_order: gamma_order.clone(),
                upsilon: upsilon[..s].to_vec(),
                q: vec![vec![1.0; n]],
            },
            WeightModel::Explicit { .. } => {
                if s >= 31 || (n << s) > EXPLICIT_STATE_LIMIT {
                    return Err(Error::TooLarge(format!(
                        "explicit weights need 2^{s} x {n} accumulators"
                    )));
                }
                let weights = (0..1u64 << s)
                    .map(|mask| w.weight_of(&crate::weights::Subset::from_mask(mask)))
                    .collect::<Result<Vec<_>>>()?;
                Kind::Explicit { weights, prods: vec![vec![1.0; n]] }
            }
        };
        Ok(Self { n, d: 0, total: vec![0.0; n], kind })
    }

    /// `D(i)` for the next coordinate `d = self.dim()`.
    pub fn derivative(&self) -> Vec<f64> {
        let d = self.d;
        let n = self.n;
        match &self.kind {
            Kind::Product { gamma, prod } => prod.iter().map(|p| gamma[d] * p).collect(),
            Kind::Order { gamma_order, upsilon, p } => {
                let mut out = vec![0.0; n];
                for (l, pl) in p.iter().enumerate() {
                    let g = gamma_order[l + 1];
                    for (o, x) in out.iter_mut().zip(pl) {
                        *o += g * x;
                    }
                }
                out.iter_mut().for_each(|o| *o *= upsilon[d]);
                out
            }
            Kind::Spod { gamma_order, upsilon, q } => {
                let mut out = vec![0.0; n];
                for (nu_minus_1, &y) in upsilon[d].iter().enumerate() {
                    for (k, qk) in q.iter().enumerate() {
                        let g = y * gamma_order[k + nu_minus_1 + 1];
                        for (o, x) in out.iter_mut().zip(qk) {
                            *o += g * x;
                        }
                    }
                }
                out
            }
            Kind::Explicit { weights, prods } => {
                let mut out = vec![0.0; n];
                for (mask, pr) in prods.iter().enumerate() {
                    let g = weights[mask | 1 << d];
                    for (o, x) in out.iter_mut().zip(pr) {
                        *o += g * x;
                    }
                }
                out
            }
        }
    }

    /// Fixes coordinate `d` with kernel values `omega`; `deriv` must be the
    /// current [`derivative`](Self::derivative).
    pub fn commit(&mut self, omega: &[f64], deriv: &[f64]) {
        let d = self.d;
        for ((t, w), dv) in self.total.iter_mut().zip(omega).zip(deriv) {
            *t += w * dv;
        }
        match &mut self.kind {
            Kind::Product { gamma, prod } => {
                for (p, w) in prod.iter_mut().zip(omega) {
                    *p += gamma[d] * w * *p;
                }
            }
            Kind::Order { upsilon, p, .. } => {
                let u = upsilon[d];
                let top: Vec<f64> = p[p.len() - 1].iter().zip(omega).map(|(x, w)| u * w * x).collect();
                for l in (1..p.len()).rev() {
                    let (lower, upper) = p.split_at_mut(l);
                    for ((t, x), w) in upper[0].iter_mut().zip(&lower[l - 1]).zip(omega) {
                        *t += u * w * x;
                    }
                }
                p.push(top);
            }
            Kind::Spod { upsilon, q, .. } => {
                let alpha = upsilon[d].len();
                let old_len = q.len();
                q.resize(old_len + alpha, vec![0.0; self.n]);
                for k in (1..q.len()).rev() {
                    for nu in 1..=alpha.min(k) {
                        if k - nu >= old_len {
                            continue;
                        }
                        let y = upsilon[d][nu - 1];
                        let (lower, upper) = q.split_at_mut(k);
                        for ((t, x), w) in upper[0].iter_mut().zip(&lower[k - nu]).zip(omega) {
                            *t += y * w * x;
                        }
                    }
                }
            }
            Kind::Explicit { prods, .. } => {
                let new: Vec<Vec<f64>> = prods
                    .iter()
                    .map(|pr| pr.iter().zip(omega).map(|(x, w)| x * w).collect())
                    .collect();
                prods.extend(new);
            }
        }
        self.d += 1;
    }

    /// `(1/n) sum_i (total(i) + omega(i) deriv(i))`.
    pub fn criterion_with(&self, omega: &[f64], deriv: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((t, w), dv) in self.total.iter().zip(omega).zip(deriv) {
            acc += t + w * dv;
        }
        acc / self.n as f64
    }
}
