//! Weight models for weighted function spaces, the error-bound factors of
//! randomly shifted lattice rules and interlaced polynomial lattice rules,
//! and the weight calibration that balances a norm bound against the
//! error bound.
//!
//! Coordinates are 0-based throughout: a [`Subset`] of `{0, .., s-1}`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest dimension for which weights are summed over all `2^s` subsets.
pub const MAX_ENUMERATION_DIM: usize = 20;

/// A finite set of 0-based coordinate indices, kept sorted and deduplicated.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Subset(Vec<usize>);

impl Subset {
    pub fn new(mut idx: Vec<usize>) -> Self {
        idx.sort_unstable();
        idx.dedup();
        Self(idx)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn from_mask(mask: u64) -> Self {
        Self((0..64).filter(|&j| mask >> j & 1 == 1).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    pub fn with(&self, j: usize) -> Self {
        let mut v = self.0.clone();
        v.push(j);
        Self::new(v)
    }

    /// All subsets of `self` (including the empty set and `self`).
    pub fn subsets(&self) -> impl Iterator<Item = Subset> + '_ {
        let k = self.0.len();
        (0..1u64 << k).map(move |mask| {
            Subset((0..k).filter(|&b| mask >> b & 1 == 1).map(|b| self.0[b]).collect())
        })
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|j| j.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().trim_start_matches('[').trim_end_matches(']');
        if s.trim().is_empty() {
            return Ok(Subset::empty());
        }
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::InvalidParameter(format!("bad index {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Subset::new)
    }
}

impl Serialize for Subset {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Subset {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        Vec::<usize>::deserialize(de).map(Subset::new)
    }
}

/// JSON maps keyed by subsets written as `"0,2"` (the empty set is `""`).
pub mod subset_keys {
    use std::collections::BTreeMap;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::Subset;

    pub fn serialize<S: Serializer>(map: &BTreeMap<Subset, f64>, ser: S) -> Result<S::Ok, S::Error> {
        map.iter().map(|(u, v)| (u.to_string(), *v)).collect::<BTreeMap<String, f64>>().serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<BTreeMap<Subset, f64>, D::Error> {
        BTreeMap::<String, f64>::deserialize(de)?
            .into_iter()
            .map(|(k, v)| k.parse::<Subset>().map(|u| (u, v)).map_err(D::Error::custom))
            .collect()
    }
}

/// Weights `gamma_u` attached to subsets of coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WeightSpec", into = "WeightSpec")]
pub enum WeightModel {
    /// `gamma_u = prod_{j in u} upsilon_j`.
    Product { upsilon: Vec<f64> },
    /// `gamma_u = Gamma_{|u|}`.
    OrderDependent { gamma_order: Vec<f64>, s: usize },
    /// `gamma_u = Gamma_{|u|} prod_{j in u} upsilon_j`.
    Pod { gamma_order: Vec<f64>, upsilon: Vec<f64> },
    /// `gamma_u = sum_{nu in {1..alpha}^u} Gamma_{|nu|} prod_{j in u} upsilon_j(nu_j)`;
    /// `upsilon[j][nu - 1]`.
    Spod { gamma_order: Vec<f64>, upsilon: Vec<Vec<f64>>, alpha: usize },
    /// Listed subsets; unlisted non-empty subsets carry weight zero.
    Explicit { s: usize, weights: BTreeMap<Subset, f64> },
}

impl WeightModel {
    pub fn product(upsilon: Vec<f64>) -> Result<Self> {
        Self::Product { upsilon }.validated()
    }

    pub fn order_dependent(gamma_order: Vec<f64>, s: usize) -> Result<Self> {
        Self::OrderDependent { gamma_order, s }.validated()
    }

    pub fn pod(gamma_order: Vec<f64>, upsilon: Vec<f64>) -> Result<Self> {
        Self::Pod { gamma_order, upsilon }.validated()
    }

    pub fn spod(gamma_order: Vec<f64>, upsilon: Vec<Vec<f64>>, alpha: usize) -> Result<Self> {
        Self::Spod { gamma_order, upsilon, alpha }.validated()
    }

    pub fn explicit(s: usize, weights: BTreeMap<Subset, f64>) -> Result<Self> {
        Self::Explicit { s, weights }.validated()
    }

    /// Product weights `base^(j+1)` for `j = 0..s`.
    pub fn geometric_product(base: f64, s: usize) -> Result<Self> {
        Self::product((1..=s).map(|j| base.powi(j as i32)).collect())
    }

    fn validated(self) -> Result<Self> {
        let nonneg = |v: &[f64], what: &str| -> Result<()> {
            if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return invalid(format!("{what} must be finite and non-negative"));
            }
            Ok(())
        };
        let order_ok = |g: &[f64], s: usize| -> Result<()> {
            nonneg(g, "order weights")?;
            if g.len() < s + 1 {
                return invalid(format!("need {} order weights for s = {s}, got {}", s + 1, g.len()));
            }
            if g.first() != Some(&1.0) || (g.len() > 1 && g[1] != 1.0) {
                return invalid("order weights must start with Gamma_0 = Gamma_1 = 1");
            }
            Ok(())
        };
        match &self {
            Self::Product { upsilon } => nonneg(upsilon, "product weights")?,
            Self::OrderDependent { gamma_order, s } => order_ok(gamma_order, *s)?,
            Self::Pod { gamma_order, upsilon } => {
                order_ok(gamma_order, upsilon.len())?;
                if upsilon.iter().any(|&u| !(u > 0.0 && u.is_finite())) {
                    return invalid("POD product part must be positive");
                }
                if upsilon.windows(2).any(|w| w[1] > w[0]) {
                    return invalid("POD product part must be non-increasing");
                }
            }
            Self::Spod { gamma_order, upsilon, alpha } => {
                if *alpha == 0 {
                    return invalid("SPOD smoothness alpha must be positive");
                }
                nonneg(gamma_order, "order weights")?;
                if gamma_order.len() < alpha * upsilon.len() + 1 {
                    return invalid(format!(
                        "SPOD needs {} order weights, got {}",
                        alpha * upsilon.len() + 1,
                        gamma_order.len()
                    ));
                }
                for row in upsilon {
                    if row.len() != *alpha {
                        return Err(Error::DimensionMismatch { expected: *alpha, got: row.len() });
                    }
                    nonneg(row, "SPOD product part")?;
                }
            }
            Self::Explicit { s, weights } => {
                for (u, &g) in weights {
                    if !(g.is_finite() && g >= 0.0) {
                        return invalid(format!("weight of {{{u}}} must be non-negative"));
                    }
                    if let Some(j) = u.max_index() {
                        if j >= *s {
                            return Err(Error::IndexOutOfRange { index: j, dim: *s });
                        }
                    } else if g != 1.0 {
                        return invalid("the empty set must carry weight 1");
                    }
                }
            }
        }
        Ok(self)
    }

    /// Number of coordinates the model covers.
    pub fn s(&self) -> usize {
        match self {
            Self::Product { upsilon } | Self::Pod { upsilon, .. } => upsilon.len(),
            Self::OrderDependent { s, .. } | Self::Explicit { s, .. } => *s,
            Self::Spod { upsilon, .. } => upsilon.len(),
        }
    }

    pub fn variant(&self) -> &'static str {
        match self {
            Self::Product { .. } => "product",
            Self::OrderDependent { .. } => "order_dependent",
            Self::Pod { .. } => "pod",
            Self::Spod { .. } => "spod",
            Self::Explicit { .. } => "explicit",
        }
    }

    pub fn weight_of(&self, u: &Subset) -> Result<f64> {
        if let Some(j) = u.max_index() {
            if j >= self.s() {
                return Err(Error::IndexOutOfRange { index: j, dim: self.s() });
            }
        } else {
            return Ok(1.0);
        }
        Ok(match self {
            Self::Product { upsilon } => u.indices().iter().map(|&j| upsilon[j]).product(),
            Self::OrderDependent { gamma_order, .. } => gamma_order[u.len()],
            Self::Pod { gamma_order, upsilon } => {
                gamma_order[u.len()] * u.indices().iter().map(|&j| upsilon[j]).product::<f64>()
            }
            Self::Spod { gamma_order, upsilon, .. } => {
                // polynomial in the total order |nu|, every nu_j >= 1
                let mut poly = vec![1.0];
                for &j in u.indices() {
                    let mut next = vec![0.0; poly.len() + upsilon[j].len()];
                    for (k, &c) in poly.iter().enumerate() {
                        for (nu, &y) in upsilon[j].iter().enumerate() {
                            next[k + nu + 1] += c * y;
                        }
                    }
                    poly = next;
                }
                poly.iter().zip(gamma_order).map(|(c, g)| c * g).sum()
            }
            Self::Explicit { weights, .. } => weights.get(u).copied().unwrap_or(0.0),
        })
    }

    /// Keeps the first `s` coordinates.
    pub fn truncated(&self, s: usize) -> Result<Self> {
        if s > self.s() {
            return Err(Error::DimensionMismatch { expected: self.s(), got: s });
        }
        Ok(match self {
            Self::Product { upsilon } => Self::Product { upsilon: upsilon[..s].to_vec() },
            Self::OrderDependent { gamma_order, .. } => {
                Self::OrderDependent { gamma_order: gamma_order.clone(), s }
            }
            Self::Pod { gamma_order, upsilon } => {
                Self::Pod { gamma_order: gamma_order.clone(), upsilon: upsilon[..s].to_vec() }
            }
            Self::Spod { gamma_order, upsilon, alpha } => Self::Spod {
                gamma_order: gamma_order.clone(),
                upsilon: upsilon[..s].to_vec(),
                alpha: *alpha,
            },
            Self::Explicit { weights, .. } => Self::Explicit {
                s,
                weights: weights
                    .iter()
                    .filter(|(u, _)| u.max_index().is_none_or(|j| j < s))
                    .map(|(u, g)| (u.clone(), *g))
                    .collect(),
            },
        })
    }

    /// Expands to explicit weights over all subsets of `{0..s}`.
    pub fn to_explicit(&self) -> Result<Self> {
        let s = self.s();
        if s > MAX_ENUMERATION_DIM {
            return Err(Error::TooLarge(format!("2^{s} subsets")));
        }
        let mut weights = BTreeMap::new();
        for mask in 0..1u64 << s {
            let u = Subset::from_mask(mask);
            weights.insert(u.clone(), self.weight_of(&u)?);
        }
        Ok(Self::Explicit { s, weights })
    }

    /// `sum over non-empty u subset of {0..s} of gamma_u^lambda prod_{j in u} theta_j`.
    pub fn weighted_subset_sum(&self, s: usize, lambda: f64, theta: &[f64]) -> Result<f64> {
        if s > self.s() {
            return Err(Error::DimensionMismatch { expected: self.s(), got: s });
        }
        if theta.len() < s {
            return Err(Error::DimensionMismatch { expected: s, got: theta.len() });
        }
        Ok(match self {
            Self::Product { upsilon } => {
                upsilon[..s].iter().zip(theta).map(|(g, t)| 1.0 + g.powf(lambda) * t).product::<f64>()
                    - 1.0
            }
            Self::OrderDependent { gamma_order, .. } => {
                let e = elementary_symmetric(&theta[..s]);
                (1..=s).map(|l| gamma_order[l].powf(lambda) * e[l]).sum()
            }
            Self::Pod { gamma_order, upsilon } => {
                let x: Vec<f64> =
                    upsilon[..s].iter().zip(theta).map(|(g, t)| g.powf(lambda) * t).collect();
                let e = elementary_symmetric(&x);
                (1..=s).map(|l| gamma_order[l].powf(lambda) * e[l]).sum()
            }
            Self::Spod { gamma_order, upsilon, .. } if lambda == 1.0 => {
                let mut poly = vec![1.0];
                for j in 0..s {
                    poly = spod_multiply(&poly, &upsilon[j], theta[j]);
                }
                poly.iter().zip(gamma_order).skip(1).map(|(c, g)| c * g).sum()
            }
            Self::Spod { .. } => {
                if s > MAX_ENUMERATION_DIM {
                    return Err(Error::TooLarge(format!("2^{s} SPOD subsets")));
                }
                let mut total = 0.0;
                for mask in 1..1u64 << s {
                    let u = Subset::from_mask(mask);
                    let t: f64 = u.indices().iter().map(|&j| theta[j]).product();
                    total += self.weight_of(&u)?.powf(lambda) * t;
                }
                total
            }
            Self::Explicit { weights, .. } => {
                if s > MAX_ENUMERATION_DIM {
                    return Err(Error::TooLarge(format!("explicit weights with s = {s}")));
                }
                weights
                    .iter()
                    .filter(|(u, _)| u.max_index().is_some_and(|j| j < s))
                    .map(|(u, g)| g.powf(lambda) * u.indices().iter().map(|&j| theta[j]).product::<f64>())
                    .sum()
            }
        })
    }
}

/// `poly(t) * (1 + scale * sum_nu ups[nu-1] t^nu)`.
fn spod_multiply(poly: &[f64], ups: &[f64], scale: f64) -> Vec<f64> {
    let mut out = vec![0.0; poly.len() + ups.len()];
    for (k, &c) in poly.iter().enumerate() {
        out[k] += c;
        for (nu, &y) in ups.iter().enumerate() {
            out[k + nu + 1] += c * scale * y;
        }
    }
    out
}

/// `e[l]` = elementary symmetric polynomial of degree `l` in `x`.
pub fn elementary_symmetric(x: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; x.len() + 1];
    e[0] = 1.0;
    for (k, &xi) in x.iter().enumerate() {
        for l in (1..=k + 1).rev() {
            e[l] += xi * e[l - 1];
        }
    }
    e
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum UpsilonSpec {
    Flat(Vec<f64>),
    Nested(Vec<Vec<f64>>),
}

/// On-disk JSON layout for weight models.
#[derive(Serialize, Deserialize)]
struct WeightSpec {
    variant: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    gamma_order: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    upsilon: Option<UpsilonSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    explicit: Option<BTreeMap<String, f64>>,
}

impl TryFrom<WeightSpec> for WeightModel {
    type Error = Error;

    fn try_from(w: WeightSpec) -> Result<Self> {
        let flat = |u: Option<UpsilonSpec>| match u {
            Some(UpsilonSpec::Flat(v)) => Ok(v),
            None => invalid("missing upsilon"),
            Some(UpsilonSpec::Nested(_)) => invalid("upsilon must be a flat array"),
        };
        match w.variant.as_str() {
            "product" => WeightModel::product(flat(w.upsilon)?),
            "order_dependent" => WeightModel::order_dependent(
                w.gamma_order,
                w.s.ok_or_else(|| Error::InvalidParameter("order_dependent needs s".into()))?,
            ),
            "pod" => WeightModel::pod(w.gamma_order, flat(w.upsilon)?),
            "spod" => {
                let ups = match w.upsilon {
                    Some(UpsilonSpec::Nested(v)) => v,
                    _ => return invalid("spod upsilon must be an array of arrays"),
                };
                let alpha = w.alpha.ok_or_else(|| Error::InvalidParameter("spod needs alpha".into()))?;
                WeightModel::spod(w.gamma_order, ups, alpha)
            }
            "explicit" => {
                let s = w.s.ok_or_else(|| Error::InvalidParameter("explicit needs s".into()))?;
                let mut weights = BTreeMap::new();
                weights.insert(Subset::empty(), 1.0);
                for (k, v) in w.explicit.unwrap_or_default() {
                    weights.insert(k.parse::<Subset>()?, v);
                }
                WeightModel::explicit(s, weights)
            }
            other => invalid(format!("unknown weight variant {other:?}")),
        }
    }
}

impl From<WeightModel> for WeightSpec {
    fn from(w: WeightModel) -> Self {
        let variant = w.variant().to_string();
        let mut spec = WeightSpec {
            variant,
            s: None,
            gamma_order: Vec::new(),
            upsilon: None,
            alpha: None,
            explicit: None,
        };
        match w {
            WeightModel::Product { upsilon } => spec.upsilon = Some(UpsilonSpec::Flat(upsilon)),
            WeightModel::OrderDependent { gamma_order, s } => {
                spec.gamma_order = gamma_order;
                spec.s = Some(s);
            }
            WeightModel::Pod { gamma_order, upsilon } => {
                spec.gamma_order = gamma_order;
                spec.upsilon = Some(UpsilonSpec::Flat(upsilon));
            }
            WeightModel::Spod { gamma_order, upsilon, alpha } => {
                spec.gamma_order = gamma_order;
                spec.upsilon = Some(UpsilonSpec::Nested(upsilon));
                spec.alpha = Some(alpha);
            }
            WeightModel::Explicit { s, weights } => {
                spec.s = Some(s);
                spec.explicit = Some(
                    weights.into_iter().filter(|(u, _)| !u.is_empty()).map(|(u, g)| (u.to_string(), g)).collect(),
                );
            }
        }
        spec
    }
}

/// Riemann zeta for real `a > 1`: a direct sum plus an Euler-Maclaurin tail.
pub fn zeta(a: f64) -> Result<f64> {
    if !(a > 1.0) {
        return Err(Error::Domain(format!("zeta({a}) diverges")));
    }
    const N: u32 = 10_000;
    let nf = N as f64;
    // tail sum_{k >= N} k^-a
    let tail = nf.powf(1.0 - a) / (a - 1.0) + 0.5 * nf.powf(-a) + a / 12.0 * nf.powf(-a - 1.0)
        - a * (a + 1.0) * (a + 2.0) / 720.0 * nf.powf(-a - 3.0)
        + a * (a + 1.0) * (a + 2.0) * (a + 3.0) * (a + 4.0) / 30240.0 * nf.powf(-a - 5.0);
    let head: f64 = (1..N).rev().map(|k| (k as f64).powf(-a)).sum();
    Ok(head + tail)
}

/// `2 zeta(2 lambda) / (2 pi^2)^lambda` for `lambda > 1/2`.
pub fn theta(lambda: f64) -> Result<f64> {
    if !(lambda > 0.5) {
        return Err(Error::Domain(format!("theta needs lambda > 1/2, got {lambda}")));
    }
    Ok(2.0 * zeta(2.0 * lambda)? / (2.0 * PI * PI).powf(lambda))
}

/// `2^{alpha lambda (alpha-1)/2} ([1 + 1/(2^{alpha lambda} - 2)]^alpha - 1)`.
pub fn theta_alpha(alpha: usize, lambda: f64) -> Result<f64> {
    if alpha < 2 {
        return invalid(format!("interlacing factor must be >= 2, got {alpha}"));
    }
    let a = alpha as f64;
    if !(lambda > 1.0 / a && lambda <= 1.0) {
        return Err(Error::Domain(format!("lambda = {lambda} outside (1/{alpha}, 1]")));
    }
    let base = 1.0 + 1.0 / (2f64.powf(a * lambda) - 2.0);
    Ok(2f64.powf(a * lambda * (a - 1.0) / 2.0) * (base.powi(alpha as i32) - 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub lambda: f64,
    pub n: u64,
    pub s: usize,
    /// Interlacing factor for the higher-order bound.
    #[serde(default)]
    pub alpha: Option<usize>,
    /// Caller-supplied per-coordinate factors for integration over R^s.
    #[serde(default)]
    pub theta_per_coord: Option<Vec<f64>>,
}

impl BoundParams {
    pub fn new(lambda: f64, n: u64, s: usize) -> Self {
        Self { lambda, n, s, alpha: None, theta_per_coord: None }
    }
}

/// `((2/n) sum_{u != empty} gamma_u^lambda prod_{j in u} theta_j)^{1/(2 lambda)}`
/// with `theta_j = theta(lambda)` unless per-coordinate values are supplied.
pub fn rms_bound_factor(w: &WeightModel, bp: &BoundParams) -> Result<f64> {
    if bp.n == 0 {
        return invalid("n must be at least 1");
    }
    let theta_j = match &bp.theta_per_coord {
        Some(t) => {
            if !(bp.lambda > 0.0 && bp.lambda <= 1.0) {
                return Err(Error::Domain(format!("lambda = {} outside (0, 1]", bp.lambda)));
            }
            if t.len() != bp.s {
                return Err(Error::DimensionMismatch { expected: bp.s, got: t.len() });
            }
            t.clone()
        }
        None => {
            if !(bp.lambda > 0.5 && bp.lambda <= 1.0) {
                return Err(Error::Domain(format!("lambda = {} outside (1/2, 1]", bp.lambda)));
            }
            vec![theta(bp.lambda)?; bp.s]
        }
    };
    let sum = w.weighted_subset_sum(bp.s, bp.lambda, &theta_j)?;
    Ok((2.0 / bp.n as f64 * sum).powf(1.0 / (2.0 * bp.lambda)))
}

/// `((2/n) sum_{u != empty} gamma_u^lambda theta_alpha(lambda)^|u|)^{1/lambda}`.
pub fn interlaced_bound_factor(w: &WeightModel, bp: &BoundParams) -> Result<f64> {
    if bp.n == 0 {
        return invalid("n must be at least 1");
    }
    let alpha = bp.alpha.ok_or_else(|| Error::InvalidParameter("alpha required".into()))?;
    let t = theta_alpha(alpha, bp.lambda)?;
    let sum = w.weighted_subset_sum(bp.s, bp.lambda, &vec![t; bp.s])?;
    Ok((2.0 / bp.n as f64 * sum).powf(1.0 / bp.lambda))
}

/// Per-subset coefficients of a norm bound `||f||^2 <= sum_u B_u / gamma_u`
/// together with the error-bound coefficients `A_u`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationInput {
    pub lambda: f64,
    #[serde(with = "subset_keys")]
    pub a: BTreeMap<Subset, f64>,
    #[serde(with = "subset_keys")]
    pub b: BTreeMap<Subset, f64>,
}

impl CalibrationInput {
    /// `A_u = theta(lambda)^|u|` for every subset listed in `b`.
    pub fn with_theta(lambda: f64, b: BTreeMap<Subset, f64>) -> Result<Self> {
        let t = theta(lambda)?;
        let a = b.keys().map(|u| (u.clone(), t.powi(u.len() as i32))).collect();
        Ok(Self { lambda, a, b })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Calibration {
    pub lambda: f64,
    /// Calibrated weight for every subset in the input, including the empty set.
    #[serde(with = "subset_keys")]
    pub gammas: BTreeMap<Subset, f64>,
    pub c_gamma: f64,
}

impl Calibration {
    /// Explicit model over `s` coordinates; the empty set keeps weight 1.
    pub fn model(&self, s: usize) -> Result<WeightModel> {
        let mut weights: BTreeMap<Subset, f64> =
            self.gammas.iter().filter(|(u, _)| !u.is_empty()).map(|(u, g)| (u.clone(), *g)).collect();
        weights.insert(Subset::empty(), 1.0);
        WeightModel::explicit(s, weights)
    }
}

/// The product whose minimizer the calibration returns:
/// `(sum gamma_u^lambda A_u)^{1/(2 lambda)} (sum B_u / gamma_u)^{1/2}`.
pub fn calibration_objective(input: &CalibrationInput, gammas: &BTreeMap<Subset, f64>) -> f64 {
    let lam = input.lambda;
    let mut first = 0.0;
    let mut second = 0.0;
    for (u, &b) in &input.b {
        let g = gammas.get(u).copied().unwrap_or(0.0);
        let a = input.a.get(u).copied().unwrap_or(0.0);
        first += g.powf(lam) * a;
        if b > 0.0 {
            second += b / g;
        }
    }
    first.powf(1.0 / (2.0 * lam)) * second.sqrt()
}

/// `gamma_u = (B_u / A_u)^{1/(1+lambda)}` and
/// `C = (sum_u A_u^{1/(1+lambda)} B_u^{lambda/(1+lambda)})^{(1+lambda)/(2 lambda)}`.
pub fn calibrate_weights(input: &CalibrationInput) -> Result<Calibration> {
    let lam = input.lambda;
    if !(lam > 0.5 && lam <= 1.0) {
        return Err(Error::Domain(format!("lambda = {lam} outside (1/2, 1]")));
    }
    let mut gammas = BTreeMap::new();
    let mut sum = 0.0;
    for (u, &b) in &input.b {
        if !(b >= 0.0 && b.is_finite()) {
            return invalid(format!("B for {{{u}}} must be non-negative"));
        }
        let a = input.a.get(u).copied().unwrap_or(0.0);
        if !(a >= 0.0) {
            return invalid(format!("A for {{{u}}} must be non-negative"));
        }
        if b > 0.0 && a == 0.0 {
            return invalid(format!("A_u = 0 with B_u > 0 for {{{u}}}"));
        }
        let g = if b > 0.0 { (b / a).powf(1.0 / (1.0 + lam)) } else { 0.0 };
        gammas.insert(u.clone(), g);
        if b > 0.0 {
            sum += a.powf(1.0 / (1.0 + lam)) * b.powf(lam / (1.0 + lam));
        }
    }
    let c_gamma = sum.powf((1.0 + lam) / (2.0 * lam));
    Ok(Calibration { lambda: lam, gammas, c_gamma })
}

/// POD weights obtained by calibrating against a norm bound of the form
/// `B_u = (|u|! prod_{j in u} b_j)^2`, as arises from parametric
/// regularity of affine-coefficient PDEs.
pub fn pod_from_derivative_bounds(b: &[f64], lambda: f64) -> Result<WeightModel> {
    let t = theta(lambda)?;
    let e = 2.0 / (1.0 + lambda);
    let mut gamma_order = vec![1.0; b.len() + 1];
    let mut fact = 1.0f64;
    for (l, g) in gamma_order.iter_mut().enumerate().skip(1) {
        fact *= l as f64;
        *g = fact.powf(e);
    }
    let upsilon = b.iter().map(|&bj| (bj * bj / t).powf(1.0 / (1.0 + lambda))).collect();
    WeightModel::pod(gamma_order, upsilon)
}
