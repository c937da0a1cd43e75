//! Arithmetic-average Asian call under geometric Brownian motion: path
//! factorizations of the Brownian covariance, the kinked payoff, its
//! preintegrated (smoothed) version and QMC/MC price estimators.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimate::{monte_carlo_with, shifted_lattice_with, Estimate};
use crate::points::GeneratingVector;
use crate::transforms::{norminv_clamped, LineIntegral, PreintegrationSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsianOption {
    /// Maturity.
    pub maturity: f64,
    /// Number of averaging dates `t_j = j T / s`.
    pub steps: usize,
    pub strike: f64,
    pub spot: f64,
    pub rate: f64,
    pub volatility: f64,
}

impl AsianOption {
    pub fn new(maturity: f64, steps: usize, strike: f64, spot: f64, rate: f64, volatility: f64) -> Result<Self> {
        let o = Self { maturity, steps, strike, spot, rate, volatility };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.maturity > 0.0) || self.steps == 0 || !(self.strike >= 0.0) || !(self.spot > 0.0)
            || !(self.volatility > 0.0) || !self.rate.is_finite()
        {
            return invalid("option needs T > 0, s >= 1, K >= 0, S0 > 0, sigma > 0");
        }
        Ok(())
    }

    /// `S0 = K = 100`, `r = 0.1`, `sigma = 0.2`, `T = 1`, `s = 16`.
    pub fn standard() -> Self {
        Self { maturity: 1.0, steps: 16, strike: 100.0, spot: 100.0, rate: 0.1, volatility: 0.2 }
    }

    pub fn with_steps(&self, steps: usize) -> Self {
        Self { steps, ..self.clone() }
    }

    pub fn dt(&self) -> f64 {
        self.maturity / self.steps as f64
    }

    pub fn discount(&self) -> f64 {
        (-self.rate * self.maturity).exp()
    }

    /// `log S_{t_j}` without the Brownian part, `j = 1..s`.
    fn log_drift(&self) -> Vec<f64> {
        let mu = self.rate - 0.5 * self.volatility * self.volatility;
        (1..=self.steps).map(|j| self.spot.ln() + mu * j as f64 * self.dt()).collect()
    }

    /// Discounted payoff for a Brownian path `w` at the averaging dates.
    pub fn payoff_from_path(&self, w: &[f64]) -> f64 {
        let mu = self.rate - 0.5 * self.volatility * self.volatility;
        let dt = self.dt();
        let avg = w
            .iter()
            .enumerate()
            .map(|(j, wj)| self.spot * (mu * (j + 1) as f64 * dt + self.volatility * wj).exp())
            .sum::<f64>()
            / self.steps as f64;
        self.discount() * (avg - self.strike).max(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factorization {
    Standard,
    BrownianBridge,
    Pca,
}

impl FromStr for Factorization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "brownian_bridge" | "bb" => Ok(Self::BrownianBridge),
            "pca" => Ok(Self::Pca),
            other => invalid(format!("unknown factorization {other:?}")),
        }
    }
}

impl fmt::Display for Factorization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Standard => "standard",
            Self::BrownianBridge => "brownian_bridge",
            Self::Pca => "pca",
        })
    }
}

/// `W_mid` from its neighbours: `mid = (wl*W_left + wr*W_right) + sd * y`.
#[derive(Clone, Debug)]
struct BridgeStep {
    mid: usize,
    left: usize,
    right: usize,
    wl: f64,
    wr: f64,
    sd: f64,
}

/// Applies `y -> A y` with `A A^T = Sigma`, `Sigma_ij = (T/s) min(i, j)`.
#[derive(Clone)]
pub struct CovarianceOperator {
    method: Factorization,
    s: usize,
    dt: f64,
    bridge: Vec<BridgeStep>,
    /// `sqrt(lambda_k)` for the closed-form eigenpairs.
    pca_sqrt: Vec<f64>,
    fft: Option<Arc<dyn Fft<f64>>>,
}

impl fmt::Debug for CovarianceOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CovarianceOperator").field("method", &self.method).field("s", &self.s).finish()
    }
}

impl CovarianceOperator {
    pub fn new(method: Factorization, s: usize, maturity: f64) -> Result<Self> {
        if s == 0 || !(maturity > 0.0) {
            return invalid("covariance needs s >= 1 and T > 0");
        }
        let dt = maturity / s as f64;
        let mut op = Self { method, s, dt, bridge: Vec::new(), pca_sqrt: Vec::new(), fft: None };
        match method {
            Factorization::Standard => {}
            Factorization::BrownianBridge => op.bridge = bridge_plan(s, dt),
            Factorization::Pca => {
                let m = 2 * s + 1;
                op.pca_sqrt = (1..=s)
                    .map(|k| {
                        let x = ((2 * k - 1) as f64 * PI / (2 * m) as f64).sin();
                        (dt / (4.0 * x * x)).sqrt()
                    })
                    .collect();
                op.fft = Some(FftPlanner::new().plan_fft_forward(2 * m));
            }
        }
        Ok(op)
    }

    pub fn method(&self) -> Factorization {
        self.method
    }

    pub fn s(&self) -> usize {
        self.s
    }

    /// Scratch buffer for [`apply`](Self::apply).
    pub fn scratch(&self) -> Vec<Complex64> {
        match self.method {
            Factorization::Pca => vec![Complex64::new(0.0, 0.0); 4 * self.s + 2],
            _ => Vec::new(),
        }
    }

    pub fn apply(&self, y: &[f64], out: &mut [f64], scratch: &mut [Complex64]) {
        assert_eq!(y.len(), self.s);
        assert_eq!(out.len(), self.s);
        match self.method {
            Factorization::Standard => {
                let h = self.dt.sqrt();
                let mut acc = 0.0;
                for (o, yi) in out.iter_mut().zip(y) {
                    acc += h * yi;
                    *o = acc;
                }
            }
            Factorization::BrownianBridge => {
                // out[j - 1] holds W at time index j; index 0 is W = 0
                let s = self.s;
                out[s - 1] = (s as f64 * self.dt).sqrt() * y[0];
                let at = |out: &[f64], idx: usize| if idx == 0 { 0.0 } else { out[idx - 1] };
                for (k, st) in self.bridge.iter().enumerate() {
                    let v = st.wl * at(out, st.left) + st.wr * at(out, st.right) + st.sd * y[k + 1];
                    out[st.mid - 1] = v;
                }
            }
            Factorization::Pca => {
                // sum_k c_k sin((2k-1) j pi / (2s+1)) = -Im(DFT_{4s+2}(a))[j]
                let len = 4 * self.s + 2;
                let buf = &mut scratch[..len];
                buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
                for (k, (sq, yk)) in self.pca_sqrt.iter().zip(y).enumerate() {
                    buf[2 * k + 1] = Complex64::new(sq * yk, 0.0);
                }
                self.fft.as_ref().expect("pca plan").process(buf);
                let scale = 2.0 / ((2 * self.s + 1) as f64).sqrt();
                for (j, o) in out.iter_mut().enumerate() {
                    *o = -scale * buf[j + 1].im;
                }
            }
        }
    }

    pub fn matvec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.s];
        let mut scratch = self.scratch();
        self.apply(y, &mut out, &mut scratch);
        out
    }

    /// The factor `A` assembled column by column.
    pub fn dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.s, self.s);
        let mut e = vec![0.0; self.s];
        for c in 0..self.s {
            e[c] = 1.0;
            let col = self.matvec(&e);
            e[c] = 0.0;
            for (r, v) in col.into_iter().enumerate() {
                a[(r, c)] = v;
            }
        }
        a
    }

    /// First column of `A` in closed form (PCA only): `sqrt(lambda_1) v_1`.
    pub fn pca_first_column(&self) -> Option<Vec<f64>> {
        (self.method == Factorization::Pca).then(|| {
            let m = (2 * self.s + 1) as f64;
            let scale = 2.0 / m.sqrt() * self.pca_sqrt[0];
            (1..=self.s).map(|j| scale * (j as f64 * PI / m).sin()).collect()
        })
    }
}

/// Breadth-first midpoint refinement of `[0, s]`.
fn bridge_plan(s: usize, dt: f64) -> Vec<BridgeStep> {
    let mut plan = Vec::with_capacity(s.saturating_sub(1));
    let mut queue = std::collections::VecDeque::from([(0usize, s)]);
    while let Some((l, r)) = queue.pop_front() {
        if r - l < 2 {
            continue;
        }
        let m = (l + r) / 2;
        let (a, b) = ((m - l) as f64, (r - m) as f64);
        plan.push(BridgeStep {
            mid: m,
            left: l,
            right: r,
            wl: b / (a + b),
            wr: a / (a + b),
            sd: (a * b / (a + b) * dt).sqrt(),
        });
        queue.push_back((l, m));
        queue.push_back((m, r));
    }
    plan
}

/// `Sigma_ij = (T/s) min(i, j)` for `i, j = 1..s`.
pub fn brownian_covariance(s: usize, maturity: f64) -> DMatrix<f64> {
    let dt = maturity / s as f64;
    DMatrix::from_fn(s, s, |i, j| dt * (i.min(j) + 1) as f64)
}

/// PCA factor from a dense symmetric eigen-solve, columns ordered by
/// decreasing eigenvalue with positive first entry.
pub fn dense_pca(s: usize, maturity: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(brownian_covariance(s, maturity));
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut a = DMatrix::zeros(s, s);
    for (c, &k) in order.iter().enumerate() {
        let lam = eig.eigenvalues[k].max(0.0).sqrt();
        let sign = if eig.eigenvectors[(0, k)] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..s {
            a[(r, c)] = sign * lam * eig.eigenvectors[(r, k)];
        }
    }
    a
}

/// Per-thread buffers for payoff evaluation.
pub struct PricerScratch {
    y: Vec<f64>,
    w: Vec<f64>,
    fft: Vec<Complex64>,
    a: Vec<f64>,
}

/// Option together with a path factorization, evaluating payoffs on `R^s`
/// or on the unit cube.
#[derive(Debug)]
pub struct Pricer {
    pub option: AsianOption,
    op: CovarianceOperator,
    line: LineIntegral,
    drift: Vec<f64>,
    /// `sigma * A e_1` (PCA only).
    slope: Vec<f64>,
}

impl Pricer {
    pub fn new(option: AsianOption, method: Factorization) -> Result<Self> {
        option.validate()?;
        let op = CovarianceOperator::new(method, option.steps, option.maturity)?;
        let slope = op
            .pca_first_column()
            .map(|c| c.iter().map(|v| option.volatility * v).collect())
            .unwrap_or_default();
        let line = LineIntegral::new(&PreintegrationSpec::default())?;
        let drift = option.log_drift();
        Ok(Self { option, op, line, drift, slope })
    }

    pub fn operator(&self) -> &CovarianceOperator {
        &self.op
    }

    pub fn scratch(&self) -> PricerScratch {
        let s = self.option.steps;
        PricerScratch { y: vec![0.0; s], w: vec![0.0; s], fft: self.op.scratch(), a: vec![0.0; s] }
    }

    /// `mu(A y) = (1/s) sum_j S_{t_j} - K` (undiscounted).
    pub fn mu(&self, y: &[f64], sc: &mut PricerScratch) -> f64 {
        self.op.apply(y, &mut sc.w, &mut sc.fft);
        let sig = self.option.volatility;
        self.drift.iter().zip(&sc.w).map(|(d, w)| (d + sig * w).exp()).sum::<f64>() / self.option.steps as f64
            - self.option.strike
    }

    /// Discounted `max(mu(A y), 0)`.
    pub fn payoff(&self, y: &[f64], sc: &mut PricerScratch) -> f64 {
        self.option.discount() * self.mu(y, sc).max(0.0)
    }

    /// The payoff with `y_1` integrated out against the normal density
    /// (PCA factorization only). `rest` holds `y_2..y_s`.
    pub fn smoothed_payoff(&self, rest: &[f64], sc: &mut PricerScratch) -> Result<f64> {
        if self.op.method() != Factorization::Pca {
            return Err(Error::Unsupported("smoothing requires the PCA factorization".into()));
        }
        let s = self.option.steps;
        if rest.len() + 1 != s {
            return Err(Error::DimensionMismatch { expected: s - 1, got: rest.len() });
        }
        sc.y[0] = 0.0;
        sc.y[1..].copy_from_slice(rest);
        self.op.apply(&sc.y, &mut sc.w, &mut sc.fft);
        let sig = self.option.volatility;
        for ((a, d), w) in sc.a.iter_mut().zip(&self.drift).zip(&sc.w) {
            *a = d + sig * w;
        }
        let a = &sc.a;
        let slope = &self.slope;
        let strike = self.option.strike;
        let inv_s = 1.0 / s as f64;
        let mu = |t: f64| a.iter().zip(slope).map(|(a, b)| (a + b * t).exp()).sum::<f64>() * inv_s - strike;
        Ok(self.option.discount() * self.line.kinked(mu, mu))
    }

    /// Payoff at a unit-cube point mapped through the inverse normal CDF.
    pub fn payoff_unit(&self, x: &[f64], sc: &mut PricerScratch) -> f64 {
        let mut y = std::mem::take(&mut sc.y);
        y.iter_mut().zip(x).for_each(|(v, &u)| *v = norminv_clamped(u));
        let v = self.payoff(&y, sc);
        sc.y = y;
        v
    }

    pub fn smoothed_unit(&self, x: &[f64], sc: &mut PricerScratch) -> f64 {
        let rest: Vec<f64> = x.iter().map(|&u| norminv_clamped(u)).collect();
        self.smoothed_payoff(&rest, sc).expect("checked at construction")
    }

    /// Randomly shifted lattice estimate of the price; a smoothed estimate
    /// uses a rule in `s - 1` dimensions.
    pub fn price(&self, gv: &GeneratingVector, shifts: usize, seed: u64, smoothed: bool) -> Result<Estimate> {
        let s = self.option.steps;
        let want = if smoothed { s - 1 } else { s };
        if smoothed && self.op.method() != Factorization::Pca {
            return Err(Error::Unsupported("smoothing requires the PCA factorization".into()));
        }
        if gv.s() != want {
            return Err(Error::DimensionMismatch { expected: want, got: gv.s() });
        }
        if smoothed {
            shifted_lattice_with(gv, shifts, seed, || self.scratch(), |sc, x| self.smoothed_unit(x, sc))
        } else {
            shifted_lattice_with(gv, shifts, seed, || self.scratch(), |sc, x| self.payoff_unit(x, sc))
        }
    }

    /// Plain Monte Carlo price with `samples` paths.
    pub fn price_mc(&self, samples: u64, seed: u64) -> Result<Estimate> {
        monte_carlo_with(self.option.steps, samples, seed, || self.scratch(), |sc, x| self.payoff_unit(x, sc))
    }
}
