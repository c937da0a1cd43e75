//! `-(a(x, y) u'(x, y))' = kappa(x)` on `(0, 1)` with homogeneous Dirichlet
//! conditions: piecewise-linear finite elements with midpoint quadrature
//! per element, and QMC/MC estimation of `E[G(u)]`, `G(u) = int_0^1 u`.

mod fields;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimate::{monte_carlo_with, shifted_lattice_with, Estimate};
use crate::glmm::thomas;
use crate::points::GeneratingVector;

pub use fields::{
    CirculantEmbedding, CirculantField, CoefficientField, CoefficientSpec, LognormalKl, UniformCoefficient,
    exponential_covariance, interpolate_linear, kl_exponential_eigenpairs,
};

/// Uniform mesh with `m` interior nodes `x_i = i h`, `h = 1/(m+1)`, and
/// `m + 1` elements whose midpoints carry the coefficient values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeProblem {
    pub m: usize,
    /// Source values at element midpoints.
    pub source: Vec<f64>,
}

impl PdeProblem {
    pub fn new(m: usize, kappa: impl Fn(f64) -> f64) -> Result<Self> {
        if m == 0 {
            return invalid("mesh needs at least one interior node");
        }
        let h = 1.0 / (m + 1) as f64;
        Ok(Self { m, source: (0..=m).map(|k| kappa((k as f64 + 0.5) * h)).collect() })
    }

    /// Constant source `kappa = 1`.
    pub fn unit_source(m: usize) -> Result<Self> {
        Self::new(m, |_| 1.0)
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.m + 1) as f64
    }

    /// Element midpoints `(k + 1/2) h`, `k = 0..=m`.
    pub fn midpoints(&self) -> Vec<f64> {
        let h = self.h();
        (0..=self.m).map(|k| (k as f64 + 0.5) * h).collect()
    }

    /// Nodal values of the Galerkin solution for coefficient values
    /// `a_mid` at the element midpoints.
    pub fn solve(&self, a_mid: &[f64]) -> Result<Vec<f64>> {
        fem_solve(a_mid, &self.source, self.m)
    }

    /// `G(u_h) = h sum_i u_i` (trapezoid rule with zero boundary values).
    pub fn functional(&self, u: &[f64]) -> f64 {
        self.h() * u.iter().sum::<f64>()
    }

    /// `G(u_h)` for the coefficient `a_mid`.
    pub fn g(&self, a_mid: &[f64]) -> Result<f64> {
        Ok(self.functional(&self.solve(a_mid)?))
    }
}

/// Assembles and solves the tridiagonal P1 system. `a_mid` and `source`
/// hold one value per element (`m + 1` each).
pub fn fem_solve(a_mid: &[f64], source: &[f64], m: usize) -> Result<Vec<f64>> {
    if a_mid.len() != m + 1 {
        return Err(Error::DimensionMismatch { expected: m + 1, got: a_mid.len() });
    }
    if source.len() != m + 1 {
        return Err(Error::DimensionMismatch { expected: m + 1, got: source.len() });
    }
    if let Some(k) = a_mid.iter().position(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(Error::Domain(format!("coefficient {} at element {k} is not positive", a_mid[k])));
    }
    let h = 1.0 / (m + 1) as f64;
    let inv_h = 1.0 / h;
    let diag: Vec<f64> = (0..m).map(|i| (a_mid[i] + a_mid[i + 1]) * inv_h).collect();
    let off: Vec<f64> = (1..m).map(|i| -a_mid[i] * inv_h).collect();
    let rhs: Vec<f64> = (0..m).map(|i| 0.5 * h * (source[i] + source[i + 1])).collect();
    Ok(thomas(&off, &diag, &off, &rhs))
}

/// Per-thread scratch for coefficient evaluation.
pub struct PdeScratch {
    a: Vec<f64>,
    field: fields::FieldScratch,
}

/// A problem paired with a random coefficient.
pub struct PdeModel {
    pub problem: PdeProblem,
    pub field: CoefficientField,
}

impl PdeModel {
    pub fn new(problem: PdeProblem, field: CoefficientField) -> Result<Self> {
        if field.midpoints() != problem.m + 1 {
            return Err(Error::DimensionMismatch { expected: problem.m + 1, got: field.midpoints() });
        }
        Ok(Self { problem, field })
    }

    /// Number of stochastic dimensions.
    pub fn s(&self) -> usize {
        self.field.dim()
    }

    pub fn scratch(&self) -> PdeScratch {
        PdeScratch { a: vec![0.0; self.problem.m + 1], field: self.field.scratch() }
    }

    /// `G(u_h(., y(x)))` for a unit-cube point `x`.
    pub fn eval_unit(&self, x: &[f64], sc: &mut PdeScratch) -> Result<f64> {
        self.field.fill_from_unit(x, &mut sc.a, &mut sc.field);
        self.problem.g(&sc.a)
    }

    pub fn expected_functional(&self, gv: &GeneratingVector, shifts: usize, seed: u64) -> Result<Estimate> {
        if gv.s() != self.s() {
            return Err(Error::DimensionMismatch { expected: self.s(), got: gv.s() });
        }
        // fail early on an invalid coefficient rather than inside the sum
        let mut sc = self.scratch();
        self.eval_unit(&vec![0.5; self.s()], &mut sc)?;
        shifted_lattice_with(gv, shifts, seed, || self.scratch(), |sc, x| {
            self.eval_unit(x, sc).unwrap_or(f64::NAN)
        })
    }

    pub fn monte_carlo(&self, samples: u64, seed: u64) -> Result<Estimate> {
        monte_carlo_with(self.s(), samples, seed, || self.scratch(), |sc, x| self.eval_unit(x, sc).unwrap_or(f64::NAN))
    }
}
