//! Poisson generalized linear mixed model with AR(1) random effects: the
//! log-integrand `T(y)`, its derivatives, the stationary point, and the
//! recentred and rescaled likelihood integrand.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{invalid, Error, Result};
use crate::estimate::{shifted_lattice_with, Estimate};
use crate::points::GeneratingVector;
use crate::transforms::MarginalDensity;

/// Exponents `beta + y_j` above this are rejected.
pub const MAX_EXPONENT: f64 = 700.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlmmModel {
    pub beta: f64,
    pub tau: Vec<u64>,
    pub sigma2: f64,
    pub kappa: f64,
}

impl GlmmModel {
    pub fn new(beta: f64, tau: Vec<u64>, sigma2: f64, kappa: f64) -> Result<Self> {
        let m = Self { beta, tau, sigma2, kappa };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau.is_empty() {
            return invalid("GLMM needs at least one count");
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return invalid("sigma2 must be positive");
        }
        if !(self.kappa > -1.0 && self.kappa < 1.0) {
            return invalid("kappa must lie in (-1, 1)");
        }
        if !self.beta.is_finite() {
            return invalid("beta must be finite");
        }
        Ok(())
    }

    pub fn s(&self) -> usize {
        self.tau.len()
    }

    /// Dense `Sigma_ij = sigma2 kappa^|i-j| / (1 - kappa^2)`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let c = self.sigma2 / (1.0 - self.kappa * self.kappa);
        DMatrix::from_fn(self.s(), self.s(), |i, j| c * self.kappa.powi((i as i32 - j as i32).abs()))
    }

    /// Tridiagonal precision `Sigma^{-1}` as `(diag, off_diag)`.
    pub fn precision(&self) -> (Vec<f64>, Vec<f64>) {
        let s = self.s();
        let k2 = self.kappa * self.kappa;
        let inv = 1.0 / self.sigma2;
        let diag = if s == 1 {
            vec![(1.0 - k2) * inv]
        } else {
            (0..s).map(|j| if j == 0 || j == s - 1 { inv } else { (1.0 + k2) * inv }).collect()
        };
        let off = vec![-self.kappa * inv; s.saturating_sub(1)];
        (diag, off)
    }

    pub fn precision_dense(&self) -> DMatrix<f64> {
        let (d, o) = self.precision();
        let mut q = DMatrix::from_diagonal(&DVector::from_vec(d));
        for (j, v) in o.iter().enumerate() {
            q[(j, j + 1)] = *v;
            q[(j + 1, j)] = *v;
        }
        q
    }

    /// `log det Sigma = s log sigma2 - log(1 - kappa^2)`.
    pub fn log_det_covariance(&self) -> f64 {
        self.s() as f64 * self.sigma2.ln() - (1.0 - self.kappa * self.kappa).ln()
    }

    fn quad_form(&self, y: &[f64]) -> f64 {
        let (d, o) = self.precision();
        let mut q: f64 = d.iter().zip(y).map(|(a, b)| a * b * b).sum();
        for (j, v) in o.iter().enumerate() {
            q += 2.0 * v * y[j] * y[j + 1];
        }
        q
    }

    fn precision_times(&self, y: &[f64]) -> Vec<f64> {
        let (d, o) = self.precision();
        let mut out: Vec<f64> = d.iter().zip(y).map(|(a, b)| a * b).collect();
        for (j, v) in o.iter().enumerate() {
            out[j] += v * y[j + 1];
            out[j + 1] += v * y[j];
        }
        out
    }

    fn check_dim(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.s() {
            return Err(Error::DimensionMismatch { expected: self.s(), got: y.len() });
        }
        Ok(())
    }

    fn check_exponents(&self, y: &[f64]) -> Result<()> {
        if let Some(v) = y.iter().map(|v| self.beta + v).find(|&e| !(e <= MAX_EXPONENT)) {
            return Err(Error::Domain(format!("exponent {v} exceeds {MAX_EXPONENT}")));
        }
        Ok(())
    }

    /// `T(y)`; `-inf` when an exponent overflows.
    fn log_t_unchecked(&self, y: &[f64]) -> f64 {
        let mut t = 0.0;
        for (tau, v) in self.tau.iter().zip(y) {
            let e = self.beta + v;
            if e > MAX_EXPONENT {
                return f64::NEG_INFINITY;
            }
            t += *tau as f64 * e - e.exp() - ln_factorial(*tau);
        }
        t - 0.5 * self.quad_form(y) - 0.5 * (self.s() as f64 * (2.0 * PI).ln() + self.log_det_covariance())
    }

    /// `T(y) = log(q(y) rho(y))`: Poisson log-likelihood plus Gaussian
    /// log-density of the random effects.
    pub fn log_t(&self, y: &[f64]) -> Result<f64> {
        self.check_dim(y)?;
        self.check_exponents(y)?;
        Ok(self.log_t_unchecked(y))
    }

    /// `tau - exp(beta + y) - Sigma^{-1} y`.
    pub fn gradient(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(y)?;
        self.check_exponents(y)?;
        let qy = self.precision_times(y);
        Ok(self
            .tau
            .iter()
            .zip(y)
            .zip(qy)
            .map(|((t, v), q)| *t as f64 - (self.beta + v).exp() - q)
            .collect())
    }

    /// Tridiagonal `-Hessian = diag(exp(beta + y)) + Sigma^{-1}`.
    pub fn neg_hessian(&self, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_dim(y)?;
        self.check_exponents(y)?;
        let (mut d, o) = self.precision();
        d.iter_mut().zip(y).for_each(|(a, v)| *a += (self.beta + v).exp());
        Ok((d, o))
    }

    pub fn hessian_dense(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        let (d, o) = self.neg_hessian(y)?;
        let mut h = DMatrix::from_diagonal(&DVector::from_vec(d));
        for (j, v) in o.iter().enumerate() {
            h[(j, j + 1)] = *v;
            h[(j + 1, j)] = *v;
        }
        Ok(-h)
    }

    /// Newton iteration from `y = 0` until `||grad T||_inf <= 1e-10`.
    pub fn stationary_point(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let mut y = vec![0.0; self.s()];
        let mut t_cur = self.log_t(&y)?;
        for _ in 0..100 {
            let g = self.gradient(&y)?;
            if g.iter().all(|v| v.abs() <= 1e-10) {
                return Ok(y);
            }
            let g_norm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let (d, o) = self.neg_hessian(&y)?;
            let step = thomas_symmetric(&d, &o, &g);
            // halve the step while T fails to increase (guards overshoot);
            // near the maximum T is flat to round-off, so a step that
            // shrinks the gradient is accepted as well
            let mut scale = 1.0;
            loop {
                let trial: Vec<f64> = y.iter().zip(&step).map(|(a, b)| a + scale * b).collect();
                let ok = self.check_exponents(&trial).is_ok();
                let t_new = if ok { self.log_t_unchecked(&trial) } else { f64::NEG_INFINITY };
                let shrinks = ok
                    && self.gradient(&trial)?.iter().fold(0.0f64, |m, v| m.max(v.abs())) < 0.5 * g_norm;
                if t_new >= t_cur || shrinks || scale < 1e-8 {
                    y = trial;
                    t_cur = t_new.max(t_cur);
                    break;
                }
                scale *= 0.5;
            }
        }
        Err(Error::NoConvergence("Newton iteration did not reach ||grad T|| <= 1e-10".into()))
    }

    /// Laplace-type recentring at the stationary point.
    pub fn recenter(&self, density: MarginalDensity) -> Result<Recentered> {
        let y_star = self.stationary_point()?;
        let h = -self.hessian_dense(&y_star)?;
        let chol = h
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Construction("negative Hessian is not positive definite".into()))?;
        let sigma_star = chol.inverse();
        let a_star = sigma_star
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Construction("Sigma* is not positive definite".into()))?
            .l();
        let log_det_a: f64 = a_star.diagonal().iter().map(|v| v.ln()).sum();
        let log_t_star = self.log_t(&y_star)?;
        Ok(Recentered {
            model: self.clone(),
            y_star,
            a_star,
            sigma_star,
            density,
            log_t_star,
            log_offset: log_t_star + log_det_a,
        })
    }
}

/// Solves a symmetric tridiagonal system by the Thomas algorithm.
pub fn thomas_symmetric(diag: &[f64], off: &[f64], rhs: &[f64]) -> Vec<f64> {
    thomas(off, diag, off, rhs)
}

/// Solves `lower[i-1] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]`.
pub fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    c[0] = if n > 1 { upper[0] / denom } else { 0.0 };
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i - 1] * c[i - 1];
        if i < n - 1 {
            c[i] = upper[i] / denom;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / denom;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x
}

/// The integrand `f(y') = exp(T(A* y' + y*) - T(y*)) / prod phi(y'_j)`,
/// whose expectation under `phi` equals `L exp(-log_offset)` with
/// `log_offset = T(y*) + log det A*`.
#[derive(Clone, Debug)]
pub struct Recentered {
    pub model: GlmmModel,
    pub y_star: Vec<f64>,
    pub a_star: DMatrix<f64>,
    pub sigma_star: DMatrix<f64>,
    pub density: MarginalDensity,
    pub log_t_star: f64,
    pub log_offset: f64,
}

impl Recentered {
    pub fn s(&self) -> usize {
        self.y_star.len()
    }

    /// `f(y')` on `R^s`, with `buf` of length `s` as scratch.
    pub fn eval(&self, yp: &[f64], buf: &mut [f64]) -> f64 {
        let s = self.s();
        for i in 0..s {
            let mut acc = self.y_star[i];
            for j in 0..=i {
                acc += self.a_star[(i, j)] * yp[j];
            }
            buf[i] = acc;
        }
        let log_phi: f64 = yp.iter().map(|&v| self.density.ln_pdf(v)).sum();
        (self.model.log_t_unchecked(buf) - self.log_t_star - log_phi).exp()
    }

    /// `f` at a unit-cube point mapped through the inverse CDF of `phi`.
    pub fn eval_unit(&self, x: &[f64], scratch: &mut (Vec<f64>, Vec<f64>)) -> f64 {
        let (yp, buf) = scratch;
        yp.iter_mut().zip(x).for_each(|(v, &u)| *v = self.density.inv_cdf(u));
        self.eval(yp, buf)
    }

    /// QMC estimate of the likelihood, reported on the log scale.
    pub fn likelihood(&self, gv: &GeneratingVector, shifts: usize, seed: u64) -> Result<LogLikelihood> {
        let s = self.s();
        if gv.s() != s {
            return Err(Error::DimensionMismatch { expected: s, got: gv.s() });
        }
        let est =
            shifted_lattice_with(gv, shifts, seed, || (vec![0.0; s], vec![0.0; s]), |sc, x| self.eval_unit(x, sc))?;
        Ok(LogLikelihood::new(self.log_offset, est))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLikelihood {
    /// `log_offset + log(estimate.value)`.
    pub log_likelihood: f64,
    /// Standard error of the log-likelihood by the delta method.
    pub log_std_error: Option<f64>,
    pub log_offset: f64,
    /// Estimate of the recentred integral.
    pub estimate: Estimate,
}

impl LogLikelihood {
    pub fn new(log_offset: f64, estimate: Estimate) -> Self {
        Self {
            log_likelihood: log_offset + estimate.value.ln(),
            log_std_error: estimate.std_error.map(|se| se / estimate.value),
            log_offset,
            estimate,
        }
    }

    /// The likelihood itself (may underflow for large data sets).
    pub fn likelihood(&self) -> f64 {
        self.log_likelihood.exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> GlmmModel {
        GlmmModel::new(0.3, vec![1, 0, 4, 2], 0.8, 0.4).unwrap()
    }

    #[test]
    fn precision_inverts_covariance() {
        for s in [1usize, 2, 5, 32] {
            let m = GlmmModel::new(0.0, vec![1; s], 1.3, -0.6).unwrap();
            let prod = m.precision_dense() * m.covariance();
            assert!((prod - DMatrix::identity(s, s)).abs().max() < 1e-12);
            let det = m.covariance().determinant().ln();
            assert!((det - m.log_det_covariance()).abs() < 1e-10);
        }
    }

    #[test]
    fn gradient_at_origin() {
        let m = model();
        let g = m.gradient(&[0.0; 4]).unwrap();
        for (gj, t) in g.iter().zip(&m.tau) {
            assert!((gj - (*t as f64 - 0.3f64.exp())).abs() < 1e-15);
        }
    }

    #[test]
    fn stationary_point_examples() {
        let m = GlmmModel::new(0.0, vec![1], 1.0, 0.0).unwrap();
        let y = m.stationary_point().unwrap();
        // bisection on 1 - e^y - y = 0
        let (mut a, mut b) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let c = 0.5 * (a + b);
            if 1.0 - c.exp() - c > 0.0 {
                a = c;
            } else {
                b = c;
            }
        }
        assert!((y[0] - a).abs() < 1e-10);
        let flat = GlmmModel::new(2.0f64.ln(), vec![2, 2, 2], 0.5, 0.3).unwrap();
        assert!(flat.stationary_point().unwrap().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn overflow_rejected() {
        let m = model();
        assert!(matches!(m.log_t(&[800.0, 0.0, 0.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn recentred_value_at_origin() {
        let m = model();
        let r = m.recenter(MarginalDensity::Normal).unwrap();
        let mut buf = vec![0.0; 4];
        let v = r.eval(&[0.0; 4], &mut buf);
        let want = (2.0 * PI).powf(2.0);
        assert!((v - want).abs() < 1e-12 * want);
        let sa = &r.a_star * r.a_star.transpose();
        assert!((sa - &r.sigma_star).abs().max() < 1e-10);
    }
}
