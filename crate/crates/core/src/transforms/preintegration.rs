//! Integrating out one standard-normal coordinate `y_k` of an integrand
//! over `R^s`. Kinked integrands `f = value * 1{mu > 0}` are integrated
//! over the half-line where `mu > 0`, after locating the kink by a
//! safeguarded root search; `mu` must be monotone in `y_k`.

use serde::{Deserialize, Serialize};

use super::quadrature::{gauss_hermite, gauss_legendre, GaussRule};
use super::normpdf;
use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreintegrationSpec {
    /// 0-based coordinate to integrate out.
    pub k: usize,
    /// Gauss nodes for the line or half-line integral.
    pub nodes: usize,
    /// Tolerance for the kink location.
    pub tol: f64,
    /// The search for the kink and the half-line integral are restricted to
    /// `[-bracket, bracket]` (standard deviations).
    pub bracket: f64,
}

impl Default for PreintegrationSpec {
    fn default() -> Self {
        Self { k: 0, nodes: 64, tol: 1e-10, bracket: 12.0 }
    }
}

impl PreintegrationSpec {
    pub fn along(k: usize) -> Self {
        Self { k, ..Self::default() }
    }
}

/// One-dimensional engine: integrals against the standard normal density.
#[derive(Clone, Debug)]
pub struct LineIntegral {
    gl: GaussRule,
    gh: GaussRule,
    tol: f64,
    bracket: f64,
}

impl LineIntegral {
    pub fn new(spec: &PreintegrationSpec) -> Result<Self> {
        if spec.nodes < 2 {
            return invalid("preintegration needs at least 2 nodes");
        }
        if !(spec.tol > 0.0) {
            return invalid("root tolerance must be positive");
        }
        if !(spec.bracket > 0.0) {
            return invalid("bracket must be positive");
        }
        Ok(Self {
            gl: gauss_legendre(spec.nodes),
            gh: gauss_hermite(spec.nodes),
            tol: spec.tol,
            bracket: spec.bracket,
        })
    }

    /// `int f(t) phi(t) dt` by Gauss-Hermite.
    pub fn smooth(&self, f: impl FnMut(f64) -> f64) -> f64 {
        self.gh.apply(f)
    }

    /// `int_a^b f(t) phi(t) dt` by Gauss-Legendre.
    pub fn interval(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        half * self.gl.apply(|x| {
            let t = mid + half * x;
            f(t) * normpdf(t)
        })
    }

    /// `int value(t) 1{mu(t) > 0} phi(t) dt` for monotone `mu`; the side
    /// on which `mu` is positive is read off the bracket ends.
    pub fn kinked(&self, mut mu: impl FnMut(f64) -> f64, value: impl FnMut(f64) -> f64) -> f64 {
        let (lo, hi) = (-self.bracket, self.bracket);
        let (m_lo, m_hi) = (mu(lo), mu(hi));
        let (pos_at_lo, pos_at_hi) = (m_lo > 0.0, m_hi > 0.0);
        match (pos_at_lo, pos_at_hi) {
            (true, true) => self.smooth(value),
            (false, false) => 0.0,
            _ => {
                let root = self.root(&mut mu, lo, hi, m_lo, m_hi);
                if pos_at_hi {
                    self.interval(root, hi, value)
                } else {
                    self.interval(lo, root, value)
                }
            }
        }
    }

    /// Kink location in `[a, b]` where `fa` and `fb` have opposite signs
    /// (Illinois regula falsi with bisection fallback).
    pub fn root(&self, mu: &mut impl FnMut(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64) -> f64 {
        let mut side = 0i8;
        let mut last_width = b - a;
        for it in 0..400 {
            if (b - a).abs() <= self.tol {
                break;
            }
            let mut c = (a * fb - b * fa) / (fb - fa);
            // every third step must halve the bracket or we bisect
            if !(c > a.min(b) && c < a.max(b)) || (it % 3 == 2 && (b - a).abs() > 0.5 * last_width) {
                c = 0.5 * (a + b);
                side = 0;
            }
            if it % 3 == 2 {
                last_width = (b - a).abs();
            }
            let fc = mu(c);
            if fc == 0.0 {
                return c;
            }
            if (fc > 0.0) == (fb > 0.0) {
                b = c;
                fb = fc;
                if side == -1 {
                    fa *= 0.5;
                }
                side = -1;
            } else {
                a = c;
                fa = fc;
                if side == 1 {
                    fb *= 0.5;
                }
                side = 1;
            }
        }
        0.5 * (a + b)
    }
}

/// Convenience wrapper around [`LineIntegral::kinked`] with default settings.
pub fn integrate_line(mu: impl FnMut(f64) -> f64, value: impl FnMut(f64) -> f64) -> f64 {
    LineIntegral::new(&PreintegrationSpec::default())
        .expect("default spec is valid")
        .kinked(mu, value)
}

pub type Field<'a> = Box<dyn Fn(&[f64]) -> f64 + Send + Sync + 'a>;

/// An integrand over `R^s`.
pub enum Integrand<'a> {
    Smooth(Field<'a>),
    /// `f(y) = value(y)` where `mu(y) > 0` and zero elsewhere; `mu` is
    /// monotone in the preintegrated coordinate.
    Kinked { mu: Field<'a>, value: Field<'a> },
}

/// `P_k f` as a function of the remaining `s - 1` coordinates.
pub struct Preintegrated<'a> {
    f: Integrand<'a>,
    k: usize,
    line: LineIntegral,
}

pub fn preintegrate<'a>(f: Integrand<'a>, spec: &PreintegrationSpec) -> Result<Preintegrated<'a>> {
    Ok(Preintegrated { f, k: spec.k, line: LineIntegral::new(spec)? })
}

impl Preintegrated<'_> {
    pub fn eval(&self, rest: &[f64]) -> f64 {
        let k = self.k.min(rest.len());
        let mut y = Vec::with_capacity(rest.len() + 1);
        y.extend_from_slice(&rest[..k]);
        y.push(0.0);
        y.extend_from_slice(&rest[k..]);
        let y = std::cell::RefCell::new(y);
        let at = |g: &Field<'_>, t: f64| {
            let mut y = y.borrow_mut();
            y[k] = t;
            g(&y)
        };
        match &self.f {
            Integrand::Smooth(g) => self.line.smooth(|t| at(g, t)),
            Integrand::Kinked { mu, value } => self.line.kinked(|t| at(mu, t), |t| at(value, t)),
        }
    }
}
