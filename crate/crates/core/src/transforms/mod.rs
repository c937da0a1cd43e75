//! Maps from the unit cube to `R^s` through inverse CDFs, and smoothing of
//! kinked integrands by integrating out one coordinate.

mod preintegration;
mod quadrature;

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::points::PointSet;

pub use preintegration::{integrate_line, preintegrate, Integrand, LineIntegral, PreintegrationSpec, Preintegrated};
pub use quadrature::{gauss_hermite, gauss_legendre, GaussRule};

/// Unit-cube values are clamped to `[CLAMP, 1 - CLAMP]` before inversion.
pub const CLAMP: f64 = 1.0 / 9_007_199_254_740_992.0;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn normpdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF, accurate in relative terms in the lower tail.
pub fn normcdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Wichura's AS241 rational approximation for `p <= 1/2`.
fn as241(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
                + 6.726_577_092_700_87e4)
                * r
                + 4.592_195_393_154_987e4)
                * r
                + 1.373_169_376_550_946e4)
                * r
                + 1.971_590_950_306_551_3e3)
                * r
                + 1.331_416_678_917_843_8e2)
                * r
                + 3.387_132_872_796_366_5)
            / (((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r
                + 3.930_789_580_009_271e4)
                * r
                + 2.121_379_430_158_659_7e4)
                * r
                + 5.394_196_021_424_751e3)
                * r
                + 6.871_870_074_920_579e2)
                * r
                + 4.231_333_070_160_091e1)
                * r
                + 1.0);
    }
    let mut r = (-p.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        (((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5)
            / (((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
                + 1.519_866_656_361_645_7e-2)
                * r
                + 1.481_039_764_274_800_8e-1)
                * r
                + 6.897_673_349_851e-1)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_759)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103)
            / (((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_445_9e-7) * r
                + 1.846_318_317_510_054_8e-5)
                * r
                + 7.868_691_311_456_133e-4)
                * r
                + 1.487_536_129_085_061_5e-2)
                * r
                + 1.369_298_809_227_358e-1)
                * r
                + 5.998_322_065_558_88e-1)
                * r
                + 1.0)
    };
    -x
}

/// Lower-tail quantile with one Halley correction against `normcdf`.
fn norminv_lower(p: f64) -> f64 {
    let x = as241(p);
    if x == 0.0 {
        return 0.0;
    }
    let t = (normcdf(x) - p) / normpdf(x);
    x - t / (1.0 + 0.5 * x * t)
}

/// Inverse of the standard normal CDF on `(0, 1)`.
pub fn norminv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("norminv({p}) outside (0, 1)")));
    }
    Ok(norminv_unchecked(p))
}

fn norminv_unchecked(p: f64) -> f64 {
    if p > 0.5 {
        -norminv_lower(1.0 - p)
    } else {
        norminv_lower(p)
    }
}

/// [`norminv`] after clamping `u` to `[CLAMP, 1 - CLAMP]`.
pub fn norminv_clamped(u: f64) -> f64 {
    norminv_unchecked(u.clamp(CLAMP, 1.0 - CLAMP))
}

/// Univariate densities used to map the unit cube onto `R`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MarginalDensity {
    /// Uniform on `[0, 1]`; the map is the identity.
    Uniform,
    Normal,
    Logistic { scale: f64 },
    Student { nu: f64 },
}

impl MarginalDensity {
    pub fn normal() -> Self {
        Self::Normal
    }

    pub fn logistic(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return invalid("logistic scale must be positive");
        }
        Self::Logistic { scale }.checked()
    }

    pub fn student(nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return invalid("Student degrees of freedom must be positive");
        }
        Self::Student { nu }.checked()
    }

    /// Parses `normal`, `uniform`, `logistic[:scale]` or `student:nu`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let num = |a: Option<&str>, default: Option<f64>| -> Result<f64> {
            match (a, default) {
                (Some(t), _) => t.parse().map_err(|e| Error::InvalidParameter(format!("{t:?}: {e}"))),
                (None, Some(d)) => Ok(d),
                (None, None) => invalid(format!("density {name:?} needs a parameter")),
            }
        };
        match name {
            "uniform" => Ok(Self::Uniform),
            "normal" => Ok(Self::Normal),
            "logistic" => Self::logistic(num(arg, Some(1.0))?),
            "student" => Self::student(num(arg, None)?),
            other => invalid(format!("unknown density {other:?}")),
        }
    }

    /// Checks numerically that the density integrates to one.
    fn checked(self) -> Result<Self> {
        let mass = self.total_mass();
        if (mass - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter(format!("density mass {mass} differs from 1")));
        }
        Ok(self)
    }

    /// `int pdf` computed after the substitution `x = tan(theta)`.
    pub fn total_mass(&self) -> f64 {
        if *self == Self::Uniform {
            return 1.0;
        }
        let rule = gauss_legendre(64);
        let panels = 64;
        let h = PI / panels as f64;
        let mut total = 0.0;
        for k in 0..panels {
            let a = -PI / 2.0 + k as f64 * h;
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let th = a + 0.5 * h * (x + 1.0);
                let c = th.cos();
                total += 0.5 * h * w * self.pdf(th.tan()) / (c * c);
            }
        }
        total
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Self::Uniform => {
                if (0.0..=1.0).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Normal => normpdf(x),
            Self::Logistic { scale } => {
                let e = (-(x.abs()) / scale).exp();
                e / (scale * (1.0 + e) * (1.0 + e))
            }
            Self::Student { .. } => self.ln_pdf(x).exp(),
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            Self::Uniform => self.pdf(x).ln(),
            Self::Normal => -0.5 * x * x - 0.5 * (2.0 * PI).ln(),
            Self::Logistic { scale } => {
                let a = x.abs() / scale;
                -a - scale.ln() - 2.0 * (-a).exp().ln_1p()
            }
            Self::Student { nu } => {
                ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln()
                    - 0.5 * (nu + 1.0) * (x * x / nu).ln_1p()
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Self::Uniform => x.clamp(0.0, 1.0),
            Self::Normal => normcdf(x),
            Self::Logistic { scale } => {
                let e = (-(x.abs()) / scale).exp();
                if x >= 0.0 {
                    1.0 / (1.0 + e)
                } else {
                    e / (1.0 + e)
                }
            }
            Self::Student { nu } => {
                let tail = 0.5 * beta_reg(0.5 * nu, 0.5, nu / (nu + x * x));
                if x >= 0.0 {
                    1.0 - tail
                } else {
                    tail
                }
            }
        }
    }

    /// Inverse CDF of the clamped value `u`.
    pub fn inv_cdf(&self, u: f64) -> f64 {
        let u = u.clamp(CLAMP, 1.0 - CLAMP);
        match *self {
            Self::Uniform => u,
            Self::Normal => norminv_unchecked(u),
            Self::Logistic { scale } => scale * (u.ln() - (-u).ln_1p()),
            Self::Student { nu } => student_inv(nu, u),
        }
    }
}

/// Student-t quantile by safeguarded Newton iteration on the lower tail.
fn student_inv(nu: f64, u: f64) -> f64 {
    if u == 0.5 {
        return 0.0;
    }
    if u > 0.5 {
        return -student_inv(nu, 1.0 - u);
    }
    let d = MarginalDensity::Student { nu };
    // bracket [lo, 0] with cdf(lo) <= u
    let mut hi = 0.0;
    let mut lo = norminv_unchecked(u).min(-1.0);
    while d.cdf(lo) > u {
        hi = lo;
        lo *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = d.cdf(x) - u;
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let step = f / d.pdf(x);
        let mut next = x - step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs().max(1.0) {
            return next;
        }
        x = next;
    }
    x
}

/// Applies the inverse CDF of `density` to every coordinate; the result is
/// row-major with `ps.s()` columns.
pub fn map_points(ps: &PointSet, density: &MarginalDensity) -> Vec<f64> {
    ps.coords().iter().map(|&u| density.inv_cdf(u)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norminv_examples() {
        assert_eq!(norminv(0.5).unwrap(), 0.0);
        assert!((norminv(normcdf(1.0)).unwrap() - 1.0).abs() < 1e-9);
        assert!(norminv(0.0).is_err() && norminv(1.0).is_err());
        for p in [1e-300, 1e-100, 1e-20, 1e-5, 0.01, 0.3, 0.49] {
            let x = norminv(p).unwrap();
            assert!((normcdf(x) - p).abs() <= 1e-12 * p, "p = {p}");
        }
        for p in [1e-5, 0.01, 0.3, 0.49] {
            let q = 1.0 - p;
            assert!((norminv(q).unwrap() + norminv(1.0 - q).unwrap()).abs() < 1e-12);
        }
        let top = 1.0 - 1e-16;
        let x = norminv(top).unwrap();
        assert!((normcdf(x) - top).abs() <= 1e-12);
    }

    #[test]
    fn deep_lower_tail_round_trip() {
        for k in 0..=60 {
            let x = -5.0 - 0.5 * k as f64;
            let back = norminv(normcdf(x)).unwrap();
            assert!((back - x).abs() < 1e-9 * x.abs(), "{x}: {back}");
        }
    }

    #[test]
    fn norminv_monotone() {
        let mut prev = f64::NEG_INFINITY;
        for k in 1..20000 {
            let x = norminv(k as f64 / 20000.0).unwrap();
            assert!(x > prev);
            prev = x;
        }
    }

    #[test]
    fn densities_round_trip() {
        for d in [
            MarginalDensity::normal(),
            MarginalDensity::logistic(1.0).unwrap(),
            MarginalDensity::logistic(0.6).unwrap(),
            MarginalDensity::student(10.0).unwrap(),
            MarginalDensity::student(3.0).unwrap(),
        ] {
            assert!((d.total_mass() - 1.0).abs() < 1e-10);
            for k in -50..=50 {
                let x = k as f64 * 0.1;
                let back = d.inv_cdf(d.cdf(x));
                assert!((back - x).abs() < 1e-9, "{d:?} at {x}: {back}");
                assert!((d.ln_pdf(x).exp() - d.pdf(x)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn parse_densities() {
        assert_eq!(MarginalDensity::parse("normal").unwrap(), MarginalDensity::Normal);
        assert_eq!(MarginalDensity::parse("logistic").unwrap(), MarginalDensity::Logistic { scale: 1.0 });
        assert_eq!(MarginalDensity::parse("student:10").unwrap(), MarginalDensity::Student { nu: 10.0 });
        assert!(MarginalDensity::parse("student").is_err());
        assert!(MarginalDensity::parse("cauchy").is_err());
    }
}
