//! Random coefficient fields evaluated at element midpoints: affine
//! uniform expansions, truncated lognormal Karhunen-Loeve expansions, and
//! lognormal fields sampled exactly on a grid by circulant embedding.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::transforms::norminv_clamped;
use crate::weights::zeta;

use super::PdeProblem;

/// `sigma2 exp(-d / ell)`.
pub fn exponential_covariance(sigma2: f64, ell: f64) -> impl Fn(f64) -> f64 + Clone {
    move |d: f64| sigma2 * (-d.abs() / ell).exp()
}

/// `a(x, y) = a0 + sum_j y_j psi_j(x)` with `psi_j(x) = c_j sin(j pi x)`
/// (`j = 1..s`) and `y` in `[-1/2, 1/2]^s`.
#[derive(Clone, Debug)]
pub struct UniformCoefficient {
    pub a0: f64,
    pub amplitudes: Vec<f64>,
    /// `psi_j` at each midpoint, row `j`.
    table: Vec<f64>,
    points: usize,
}

impl UniformCoefficient {
    pub fn new(a0: f64, amplitudes: Vec<f64>, midpoints: &[f64]) -> Result<Self> {
        let a_min = a0 - 0.5 * amplitudes.iter().map(|c| c.abs()).sum::<f64>();
        if !(a_min > 0.0) {
            return Err(Error::Domain(format!("a_min = {a_min} is not positive")));
        }
        let table = amplitudes
            .iter()
            .enumerate()
            .flat_map(|(j, c)| midpoints.iter().map(move |&x| c * ((j + 1) as f64 * PI * x).sin()))
            .collect();
        Ok(Self { a0, amplitudes, table, points: midpoints.len() })
    }

    /// `a0 = 1`, `c_j = 0.9 / (j^2 zeta(2))`, so that `a_min >= 0.55`.
    pub fn standard(s: usize, midpoints: &[f64]) -> Result<Self> {
        let z2 = zeta(2.0)?;
        Self::new(1.0, (1..=s).map(|j| 0.9 / ((j * j) as f64 * z2)).collect(), midpoints)
    }

    pub fn s(&self) -> usize {
        self.amplitudes.len()
    }

    /// `a0 - (1/2) sum_j ||psi_j||_inf`.
    pub fn a_min(&self) -> f64 {
        self.a0 - 0.5 * self.amplitudes.iter().map(|c| c.abs()).sum::<f64>()
    }

    /// `||psi_j||_inf / a_min`, the decay sequence entering the weights.
    pub fn derivative_bounds(&self) -> Vec<f64> {
        let a = self.a_min();
        self.amplitudes.iter().map(|c| c.abs() / a).collect()
    }

    pub fn at(&self, x: f64, y: &[f64]) -> f64 {
        self.a0
            + self.amplitudes.iter().enumerate().zip(y).map(|((j, c), yj)| yj * c * ((j + 1) as f64 * PI * x).sin()).sum::<f64>()
    }

    /// Coefficient at the midpoints for parameters `y`.
    pub fn fill(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|a| *a = self.a0);
        for (row, yj) in self.table.chunks(self.points).zip(y) {
            for (a, p) in out.iter_mut().zip(row) {
                *a += yj * p;
            }
        }
    }
}

/// Eigenpairs `(mu_k, omega_k)` of the exponential covariance on `[0, 1]`;
/// `omega_k` is the root of `(ell^2 w^2 - 1) sin w = 2 ell w cos w` in
/// `((k-1) pi, k pi)` and `mu_k = 2 ell sigma2 / (1 + ell^2 omega_k^2)`.
pub fn kl_exponential_eigenpairs(sigma2: f64, ell: f64, s: usize) -> Result<Vec<(f64, f64)>> {
    if !(sigma2 > 0.0 && ell > 0.0) {
        return invalid("exponential covariance needs sigma2 > 0 and ell > 0");
    }
    let f = |w: f64| (ell * ell * w * w - 1.0) * w.sin() - 2.0 * ell * w * w.cos();
    (1..=s)
        .map(|k| {
            let mut a = if k == 1 { 1e-9 } else { (k - 1) as f64 * PI };
            let mut b = k as f64 * PI;
            let (mut fa, fb) = (f(a), f(b));
            if fa * fb > 0.0 {
                return Err(Error::Construction(format!("no eigenvalue root bracketed in interval {k}")));
            }
            for _ in 0..200 {
                let c = 0.5 * (a + b);
                let fc = f(c);
                if fc == 0.0 {
                    a = c;
                    b = c;
                    break;
                }
                if (fc > 0.0) == (fa > 0.0) {
                    a = c;
                    fa = fc;
                } else {
                    b = c;
                }
            }
            let w = 0.5 * (a + b);
            Ok((2.0 * ell * sigma2 / (1.0 + ell * ell * w * w), w))
        })
        .collect()
}

/// Normalized eigenfunction `sin(w x) + ell w cos(w x)` on `[0, 1]`.
fn kl_eigenfunction(w: f64, ell: f64) -> impl Fn(f64) -> f64 {
    let b = ell * w;
    let s2 = (2.0 * w).sin() / (4.0 * w);
    let norm2 = (0.5 - s2) + b * b * (0.5 + s2) + b * w.sin().powi(2) / w;
    let inv = 1.0 / norm2.sqrt();
    move |x: f64| inv * ((w * x).sin() + b * (w * x).cos())
}

/// `a(x, y) = a0 exp(sum_j y_j sqrt(mu_j) xi_j(x))` with standard normal `y`.
#[derive(Clone, Debug)]
pub struct LognormalKl {
    pub a0: f64,
    pub mu: Vec<f64>,
    /// `sqrt(mu_j) xi_j` at each midpoint, row `j`.
    table: Vec<f64>,
    points: usize,
}

impl LognormalKl {
    /// Closed-form eigenpairs of `sigma2 exp(-|x - x'| / ell)`.
    pub fn exponential(a0: f64, sigma2: f64, ell: f64, s: usize, midpoints: &[f64]) -> Result<Self> {
        if !(a0 > 0.0) {
            return invalid("a0 must be positive");
        }
        let pairs = kl_exponential_eigenpairs(sigma2, ell, s)?;
        let mut table = Vec::with_capacity(s * midpoints.len());
        for &(mu, w) in &pairs {
            let xi = kl_eigenfunction(w, ell);
            table.extend(midpoints.iter().map(|&x| mu.sqrt() * xi(x)));
        }
        Ok(Self { a0, mu: pairs.iter().map(|p| p.0).collect(), table, points: midpoints.len() })
    }

    /// Eigenpairs from a dense eigen-solve of the covariance at the
    /// (equispaced) midpoints, with quadrature weight `1/len`.
    pub fn from_dense(a0: f64, cov: impl Fn(f64) -> f64, s: usize, midpoints: &[f64]) -> Result<Self> {
        let m = midpoints.len();
        if s > m {
            return invalid(format!("cannot take {s} eigenpairs from a {m}-point grid"));
        }
        let w = 1.0 / m as f64;
        let c = DMatrix::from_fn(m, m, |i, j| w * cov(midpoints[i] - midpoints[j]));
        let eig = SymmetricEigen::new(c);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut mu = Vec::with_capacity(s);
        let mut table = Vec::with_capacity(s * m);
        for &k in &order[..s] {
            let lam = eig.eigenvalues[k];
            if !(lam > 0.0) {
                return Err(Error::Construction("non-positive covariance eigenvalue".into()));
            }
            mu.push(lam);
            let sign = if eig.eigenvectors[(0, k)] < 0.0 { -1.0 } else { 1.0 };
            table.extend((0..m).map(|i| sign * lam.sqrt() * eig.eigenvectors[(i, k)] / w.sqrt()));
        }
        Ok(Self { a0, mu, table, points: m })
    }

    pub fn s(&self) -> usize {
        self.mu.len()
    }

    /// `sqrt(mu_j) xi_j` at midpoint `i`.
    pub fn mode(&self, j: usize, i: usize) -> f64 {
        self.table[j * self.points + i]
    }

    pub fn fill(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|a| *a = 0.0);
        for (row, yj) in self.table.chunks(self.points).zip(y) {
            for (a, p) in out.iter_mut().zip(row) {
                *a += yj * p;
            }
        }
        out.iter_mut().for_each(|a| *a = self.a0 * a.exp());
    }
}

/// Circulant extension of the covariance matrix of a stationary field on
/// an equispaced grid.
#[derive(Clone)]
pub struct CirculantEmbedding {
    grid: usize,
    /// Length of the circulant (number of standard normals per sample).
    len: usize,
    eigenvalues: Vec<f64>,
    sqrt_lambda: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CirculantEmbedding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CirculantEmbedding").field("grid", &self.grid).field("len", &self.len).finish()
    }
}

impl CirculantEmbedding {
    /// Embeds the covariance of `grid` points with spacing `dx`; the
    /// extension is doubled until all eigenvalues are non-negative (up to
    /// round-off) or the padding limit `2^10 grid` is reached.
    pub fn new(cov: impl Fn(f64) -> f64, grid: usize, dx: f64) -> Result<Self> {
        if grid < 2 {
            return invalid("circulant embedding needs at least 2 grid points");
        }
        let mut ext = grid;
        let mut planner = FftPlanner::new();
        loop {
            let len = 2 * (ext - 1);
            let mut row: Vec<Complex64> = (0..len)
                .map(|k| Complex64::new(cov(k.min(len - k) as f64 * dx), 0.0))
                .collect();
            let fft = planner.plan_fft_forward(len);
            fft.process(&mut row);
            let eigenvalues: Vec<f64> = row.iter().map(|c| c.re).collect();
            let max = eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
            let tol = 1e-12 * max.max(1.0);
            let min = eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            if min >= -tol {
                let sqrt_lambda = eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
                return Ok(Self { grid, len, eigenvalues, sqrt_lambda, fft });
            }
            if ext > 1024 * grid {
                return Err(Error::EmbeddingFailed(format!(
                    "minimum eigenvalue {min} after padding to {len}"
                )));
            }
            ext = 2 * ext - 1;
        }
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    /// Number of standard normal inputs per sample.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn scratch(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.len]
    }

    /// One draw on the grid: `Z = (Re + Im)(F Lambda^{1/2} y) / sqrt(len)`,
    /// which has exactly the target covariance for real standard normal `y`.
    pub fn sample(&self, y: &[f64], out: &mut [f64], scratch: &mut [Complex64]) {
        assert_eq!(y.len(), self.len);
        for ((b, l), yi) in scratch.iter_mut().zip(&self.sqrt_lambda).zip(y) {
            *b = Complex64::new(l * yi, 0.0);
        }
        self.fft.process(scratch);
        let scale = 1.0 / (self.len as f64).sqrt();
        for (o, c) in out.iter_mut().zip(scratch.iter()) {
            *o = scale * (c.re + c.im);
        }
    }
}

/// Linear interpolation weights from an equispaced grid `x0 + i dx` to
/// `targets`: `(i, t)` meaning `(1 - t) v[i] + t v[i + 1]`.
pub fn interpolate_linear(x0: f64, dx: f64, grid: usize, targets: &[f64]) -> Vec<(usize, f64)> {
    targets
        .iter()
        .map(|&x| {
            let pos = ((x - x0) / dx).clamp(0.0, (grid - 1) as f64);
            let i = (pos.floor() as usize).min(grid.saturating_sub(2));
            (i, pos - i as f64)
        })
        .collect()
}

/// Lognormal field `a0 exp(Z)` with `Z` sampled by circulant embedding on
/// a grid and interpolated to the element midpoints.
#[derive(Clone, Debug)]
pub struct CirculantField {
    pub a0: f64,
    pub embedding: CirculantEmbedding,
    weights: Vec<(usize, f64)>,
}

impl CirculantField {
    pub fn new(a0: f64, embedding: CirculantEmbedding, x0: f64, dx: f64, midpoints: &[f64]) -> Result<Self> {
        if !(a0 > 0.0) {
            return invalid("a0 must be positive");
        }
        let weights = interpolate_linear(x0, dx, embedding.grid(), midpoints);
        Ok(Self { a0, embedding, weights })
    }

    /// Grid at the midpoints of `problem`'s mesh.
    pub fn on_midpoints(a0: f64, cov: impl Fn(f64) -> f64, problem: &PdeProblem) -> Result<Self> {
        let h = problem.h();
        let emb = CirculantEmbedding::new(cov, problem.m + 1, h)?;
        Self::new(a0, emb, 0.5 * h, h, &problem.midpoints())
    }
}

pub struct FieldScratch {
    y: Vec<f64>,
    z: Vec<f64>,
    fft: Vec<Complex64>,
}

#[derive(Clone, Debug)]
pub enum CoefficientField {
    Uniform(UniformCoefficient),
    Kl(LognormalKl),
    Circulant(CirculantField),
}

impl CoefficientField {
    /// Stochastic dimension.
    pub fn dim(&self) -> usize {
        match self {
            Self::Uniform(u) => u.s(),
            Self::Kl(k) => k.s(),
            Self::Circulant(c) => c.embedding.len(),
        }
    }

    pub fn midpoints(&self) -> usize {
        match self {
            Self::Uniform(u) => u.points,
            Self::Kl(k) => k.points,
            Self::Circulant(c) => c.weights.len(),
        }
    }

    pub fn scratch(&self) -> FieldScratch {
        let (z, fft) = match self {
            Self::Circulant(c) => (vec![0.0; c.embedding.len()], c.embedding.scratch()),
            _ => (Vec::new(), Vec::new()),
        };
        FieldScratch { y: vec![0.0; self.dim()], z, fft }
    }

    /// Coefficient at the midpoints for a unit-cube point: shifted by
    /// `-1/2` for the uniform expansion, mapped by the inverse normal CDF
    /// otherwise.
    pub fn fill_from_unit(&self, x: &[f64], out: &mut [f64], sc: &mut FieldScratch) {
        match self {
            Self::Uniform(u) => {
                sc.y.iter_mut().zip(x).for_each(|(y, &v)| *y = v - 0.5);
                u.fill(&sc.y, out);
            }
            Self::Kl(k) => {
                sc.y.iter_mut().zip(x).for_each(|(y, &v)| *y = norminv_clamped(v));
                k.fill(&sc.y, out);
            }
            Self::Circulant(c) => {
                sc.y.iter_mut().zip(x).for_each(|(y, &v)| *y = norminv_clamped(v));
                c.embedding.sample(&sc.y, &mut sc.z, &mut sc.fft);
                for (a, &(i, t)) in out.iter_mut().zip(&c.weights) {
                    let z = (1.0 - t) * sc.z[i] + t * sc.z[(i + 1).min(sc.z.len() - 1)];
                    *a = c.a0 * z.exp();
                }
            }
        }
    }
}

/// Serializable description of a coefficient field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientSpec {
    Uniform {
        #[serde(default = "one")]
        a0: f64,
        s: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        amplitudes: Option<Vec<f64>>,
    },
    Kl { #[serde(default = "one")] a0: f64, sigma2: f64, ell: f64, s: usize },
    Circulant { #[serde(default = "one")] a0: f64, sigma2: f64, ell: f64 },
}

fn one() -> f64 {
    1.0
}

impl CoefficientSpec {
    pub fn build(&self, problem: &PdeProblem) -> Result<CoefficientField> {
        let mids = problem.midpoints();
        Ok(match self {
            Self::Uniform { a0, s, amplitudes } => {
                let u = match amplitudes {
                    Some(c) => {
                        if c.len() != *s {
                            return Err(Error::DimensionMismatch { expected: *s, got: c.len() });
                        }
                        UniformCoefficient::new(*a0, c.clone(), &mids)?
                    }
                    None => {
                        let std = UniformCoefficient::standard(*s, &mids)?;
                        UniformCoefficient::new(*a0, std.amplitudes, &mids)?
                    }
                };
                CoefficientField::Uniform(u)
            }
            Self::Kl { a0, sigma2, ell, s } => {
                CoefficientField::Kl(LognormalKl::exponential(*a0, *sigma2, *ell, *s, &mids)?)
            }
            Self::Circulant { a0, sigma2, ell } => CoefficientField::Circulant(CirculantField::on_midpoints(
                *a0,
                exponential_covariance(*sigma2, *ell),
                problem,
            )?),
        })
    }
}
