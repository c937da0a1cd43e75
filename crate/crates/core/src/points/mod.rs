//! Lattice points, randomly shifted lattice points, base-2 polynomial
//! lattice points and digit interlacing.
//!
//! A rank-1 lattice rule with generating vector `z` and `n` points uses
//! `t_i = frac(i z / n + shift)` for `i = 1..=n`. The last point (`i = n`)
//! is the pure shift. Polynomial lattice rules replace integer arithmetic
//! by arithmetic in GF(2)[x] modulo an irreducible polynomial of degree
//! `m`; their coordinates carry an exact base-2 digit view.

pub mod export;
pub mod gf2;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numtheory::gcd;

/// Name of the generator used to draw random shifts.
pub const SHIFT_GENERATOR: &str = "ChaCha8Rng";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratingVector {
    n: u64,
    z: Vec<u64>,
}

impl GeneratingVector {
    pub fn new(n: u64, z: Vec<u64>) -> Result<Self> {
        if n == 0 {
            return invalid("point count n must be positive");
        }
        for (j, &zj) in z.iter().enumerate() {
            if n > 1 && (zj == 0 || zj >= n) {
                return invalid(format!("component z[{j}] = {zj} outside 1..{n}"));
            }
            if gcd(zj, n) != 1 {
                return invalid(format!("component z[{j}] = {zj} not coprime with n = {n}"));
            }
        }
        Ok(Self { n, z })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn s(&self) -> usize {
        self.z.len()
    }

    pub fn z(&self) -> &[u64] {
        &self.z
    }

    /// Keeps the first `s` components.
    pub fn truncate(&self, s: usize) -> Self {
        Self { n: self.n, z: self.z[..s.min(self.z.len())].to_vec() }
    }

    /// Plain-text form: `"n s"` on the first line, the components on the second.
    pub fn to_text(&self) -> String {
        let comps: Vec<String> = self.z.iter().map(|z| z.to_string()).collect();
        format!("{} {}\n{}\n", self.n, self.z.len(), comps.join(" "))
    }

    /// Writes `point` (length `s`) for index `i` (taken mod n) with the given
    /// shift; `i * z_j mod n` is computed exactly.
    pub fn point_into(&self, i: u64, shift: Option<&[f64]>, out: &mut [f64]) {
        let n = self.n;
        let inv_n = 1.0 / n as f64;
        for (j, (o, &zj)) in out.iter_mut().zip(&self.z).enumerate() {
            let k = ((i % n) as u128 * zj as u128 % n as u128) as u64;
            let mut x = k as f64 * inv_n;
            if let Some(d) = shift {
                x = frac(x + d[j]);
            }
            *o = x;
        }
    }
}

impl FromStr for GeneratingVector {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace().map(|t| {
            t.parse::<u64>()
                .map_err(|e| Error::InvalidParameter(format!("bad integer {t:?}: {e}")))
        });
        let n = tokens.next().ok_or_else(|| Error::InvalidParameter("empty file".into()))??;
        let s = tokens.next().ok_or_else(|| Error::InvalidParameter("missing s".into()))??;
        let z = tokens.collect::<Result<Vec<u64>>>()?;
        if z.len() != s as usize {
            return Err(Error::DimensionMismatch { expected: s as usize, got: z.len() });
        }
        GeneratingVector::new(n, z)
    }
}

impl fmt::Display for GeneratingVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

pub(crate) fn frac(x: f64) -> f64 {
    let f = x - x.floor();
    // x slightly negative can round to exactly 1.0
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomShift {
    pub delta: Vec<f64>,
    pub seed: u64,
}

impl RandomShift {
    /// Draws `s` uniform components from a ChaCha8 stream keyed by `seed`.
    pub fn from_seed(seed: u64, s: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let delta = (0..s).map(|_| rng.random::<f64>()).collect();
        Self { delta, seed }
    }

    /// A fixed shift, e.g. for tests; the seed field is informational.
    pub fn fixed(delta: Vec<f64>) -> Result<Self> {
        if delta.iter().any(|d| !(0.0..1.0).contains(d)) {
            return invalid("shift components must lie in [0,1)");
        }
        Ok(Self { delta, seed: 0 })
    }

    pub fn s(&self) -> usize {
        self.delta.len()
    }

    pub fn negated(&self) -> Self {
        let delta = self.delta.iter().map(|&d| frac(-d)).collect();
        Self { delta, seed: self.seed }
    }
}

/// Exact base-2 digits: coordinate value equals `values[k] / 2^bits`.
#[derive(Clone, Debug, PartialEq)]
pub struct DigitView {
    pub bits: u32,
    pub values: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    n: usize,
    s: usize,
    coords: Vec<f64>,
    digits: Option<DigitView>,
}

impl PointSet {
    pub fn from_coords(n: usize, s: usize, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != n * s {
            return Err(Error::DimensionMismatch { expected: n * s, got: coords.len() });
        }
        if coords.iter().any(|x| !(0.0..1.0).contains(x)) {
            return invalid("coordinates must lie in [0,1)");
        }
        Ok(Self { n, s, coords, digits: None })
    }

    pub fn from_digits(n: usize, s: usize, bits: u32, values: Vec<u64>) -> Result<Self> {
        if values.len() != n * s {
            return Err(Error::DimensionMismatch { expected: n * s, got: values.len() });
        }
        if bits == 0 || bits > 64 {
            return invalid(format!("digit depth {bits} outside 1..=64"));
        }
        if bits < 64 && values.iter().any(|&v| v >> bits != 0) {
            return invalid("digit value exceeds declared depth");
        }
        let scale = 0.5f64.powi(bits as i32);
        let coords = values.iter().map(|&v| v as f64 * scale).collect::<Vec<_>>();
        // rounding of >53-bit integers may hit 1.0
        let coords = coords.into_iter().map(|x| if x >= 1.0 { 1.0 - f64::EPSILON / 2.0 } else { x }).collect();
        Ok(Self { n, s, coords, digits: Some(DigitView { bits, values }) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.s..(i + 1) * self.s]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn digits(&self) -> Option<&DigitView> {
        self.digits.as_ref()
    }

    pub fn digit_value(&self, i: usize, j: usize) -> Option<u64> {
        self.digits.as_ref().map(|d| d.values[i * self.s + j])
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.s.max(1)).take(self.n)
    }
}

/// Rows `i = 1..=n` of `frac(i z / n + shift)`.
pub fn lattice_points(gv: &GeneratingVector, shift: Option<&RandomShift>) -> Result<PointSet> {
    let s = gv.s();
    if let Some(sh) = shift {
        if sh.s() != s {
            return Err(Error::DimensionMismatch { expected: s, got: sh.s() });
        }
    }
    let n = gv.n() as usize;
    let mut coords = vec![0.0; n * s];
    let delta = shift.map(|sh| sh.delta.as_slice());
    for (row, i) in (1..=gv.n()).enumerate() {
        gv.point_into(i, delta, &mut coords[row * s..(row + 1) * s]);
    }
    Ok(PointSet { n, s, coords, digits: None })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolynomialLatticeRule {
    m: u32,
    modulus: u64,
    gens: Vec<u64>,
}

impl PolynomialLatticeRule {
    /// Degree bound keeps `2^m` points addressable and digit products in `u64`.
    pub const MAX_DEGREE: u32 = 30;

    pub fn new(modulus: u64, gens: Vec<u64>) -> Result<Self> {
        let m = gf2::degree(modulus)
            .ok_or_else(|| Error::InvalidParameter("zero modulus polynomial".into()))?;
        if m == 0 || m > Self::MAX_DEGREE {
            return invalid(format!("modulus degree {m} outside 1..={}", Self::MAX_DEGREE));
        }
        if !gf2::is_irreducible(modulus) {
            return Err(Error::Construction(format!("modulus {modulus:#b} is reducible")));
        }
        for (j, &q) in gens.iter().enumerate() {
            if q == 0 {
                return invalid(format!("generating polynomial q[{j}] is zero"));
            }
            if q >> m != 0 {
                return invalid(format!("generating polynomial q[{j}] has degree >= {m}"));
            }
        }
        Ok(Self { m, modulus, gens })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn gens(&self) -> &[u64] {
        &self.gens
    }

    pub fn n(&self) -> usize {
        1usize << self.m
    }

    /// Columns of the `m x m` generating matrix for coordinate `j`, each
    /// packed as an `m`-digit integer (most significant digit first).
    pub fn generating_matrix(&self, j: usize) -> Vec<u64> {
        let m = self.m as usize;
        let u = gf2::laurent_digits(self.gens[j], self.modulus, 2 * m);
        (0..m)
            .map(|c| (0..m).fold(0u64, |acc, r| (acc << 1) | u[r + c] as u64))
            .collect()
    }
}

/// All `2^m` points of a polynomial lattice rule, with an `m`-digit view.
///
/// Point `i` encodes `i` as a polynomial, multiplies by `q_j` modulo `p`
/// and keeps the first `m` Laurent digits of the quotient.
pub fn poly_lattice_points(plr: &PolynomialLatticeRule) -> Result<PointSet> {
    if !gf2::is_irreducible(plr.modulus) {
        return Err(Error::Construction("modulus polynomial is reducible".into()));
    }
    let n = plr.n();
    let s = plr.gens.len();
    let mats: Vec<Vec<u64>> = (0..s).map(|j| plr.generating_matrix(j)).collect();
    let mut values = vec![0u64; n * s];
    for i in 0..n {
        for (j, cols) in mats.iter().enumerate() {
            let mut acc = 0u64;
            let mut bits = i;
            let mut c = 0;
            while bits != 0 {
                if bits & 1 == 1 {
                    acc ^= cols[c];
                }
                bits >>= 1;
                c += 1;
            }
            values[i * s + j] = acc;
        }
    }
    PointSet::from_digits(n, s, plr.m, values)
}

/// Interleaves digits of each block of `alpha` consecutive coordinates:
/// digits `x1 x2 ..`, `y1 y2 ..` become `x1 y1 x2 y2 ..`.
pub fn interlace(ps: &PointSet, alpha: usize) -> Result<PointSet> {
    if alpha == 0 || ps.s() % alpha != 0 {
        return invalid(format!("column count {} not divisible by alpha = {alpha}", ps.s()));
    }
    let dv = ps
        .digits()
        .ok_or_else(|| Error::InvalidParameter("interlacing needs a digit view".into()))?;
    if alpha == 1 {
        return Ok(ps.clone());
    }
    let m = dv.bits as usize;
    if alpha * m > 64 {
        return invalid(format!("alpha * m = {} exceeds 64 digits", alpha * m));
    }
    let s_out = ps.s() / alpha;
    let mut out = vec![0u64; ps.n() * s_out];
    for i in 0..ps.n() {
        for k in 0..s_out {
            let mut w = 0u64;
            for t in 0..m {
                for l in 0..alpha {
                    let v = dv.values[i * ps.s() + k * alpha + l];
                    let bit = (v >> (m - 1 - t)) & 1;
                    w = (w << 1) | bit;
                }
            }
            out[i * s_out + k] = w;
        }
    }
    PointSet::from_digits(ps.n(), s_out, (alpha * m) as u32, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(ps: &PointSet) -> Vec<Vec<f64>> {
        ps.rows().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn small_lattice() {
        let gv = GeneratingVector::new(4, vec![1, 3]).unwrap();
        let ps = lattice_points(&gv, None).unwrap();
        assert_eq!(
            rows(&ps),
            vec![vec![0.25, 0.75], vec![0.5, 0.5], vec![0.75, 0.25], vec![0.0, 0.0]]
        );
        let sh = RandomShift::fixed(vec![0.5, 0.5]).unwrap();
        let ps = lattice_points(&gv, Some(&sh)).unwrap();
        assert_eq!(ps.point(0), &[0.75, 0.25]);
    }

    #[test]
    fn single_point_is_the_shift() {
        let gv = GeneratingVector::new(1, vec![1]).unwrap();
        let sh = RandomShift::fixed(vec![0.3]).unwrap();
        let ps = lattice_points(&gv, Some(&sh)).unwrap();
        assert_eq!(ps.n(), 1);
        assert_eq!(ps.point(0), &[0.3]);
    }

    #[test]
    fn invalid_vectors() {
        assert!(GeneratingVector::new(0, vec![]).is_err());
        assert!(GeneratingVector::new(8, vec![2]).is_err());
        assert!(GeneratingVector::new(8, vec![8]).is_err());
        let gv = GeneratingVector::new(8, vec![1, 3]).unwrap();
        let sh = RandomShift::from_seed(1, 3);
        assert!(matches!(lattice_points(&gv, Some(&sh)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn shift_reproducible_from_seed() {
        let a = RandomShift::from_seed(42, 10);
        let b = RandomShift::from_seed(42, 10);
        assert_eq!(a.delta.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                   b.delta.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        assert!(a.delta.iter().all(|d| (0.0..1.0).contains(d)));
        assert_ne!(a.delta, RandomShift::from_seed(43, 10).delta);
    }

    #[test]
    fn text_round_trip() {
        let gv = GeneratingVector::new(127, vec![1, 47, 61]).unwrap();
        let back: GeneratingVector = gv.to_text().parse().unwrap();
        assert_eq!(back, gv);
        assert!("8 2\n1 3 5\n".parse::<GeneratingVector>().is_err());
        assert!("8 2\n1 x\n".parse::<GeneratingVector>().is_err());
    }

    #[test]
    fn polynomial_lattice_hand_examples() {
        let plr = PolynomialLatticeRule::new(0b11, vec![1]).unwrap();
        let ps = poly_lattice_points(&plr).unwrap();
        assert_eq!(ps.coords(), &[0.0, 0.5]);

        let plr = PolynomialLatticeRule::new(0b111, vec![1]).unwrap();
        let ps = poly_lattice_points(&plr).unwrap();
        let mut xs = ps.coords().to_vec();
        xs.sort_by(f64::total_cmp);
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75]);
    }

    #[test]
    fn polynomial_point_map_matches_direct_division() {
        let p = gf2::first_irreducible(7).unwrap();
        let plr = PolynomialLatticeRule::new(p, vec![1, 0b1011, 0b110101]).unwrap();
        let ps = poly_lattice_points(&plr).unwrap();
        for i in 0..plr.n() as u64 {
            for (j, &q) in plr.gens().iter().enumerate() {
                let r = gf2::mul_mod(i, q, p);
                let want = gf2::truncated_value(r, p);
                assert_eq!(ps.digit_value(i as usize, j), Some(want));
            }
        }
    }

    #[test]
    fn reducible_modulus_rejected() {
        assert!(matches!(
            PolynomialLatticeRule::new(0b101, vec![1]),
            Err(Error::Construction(_))
        ));
    }

    #[test]
    fn interlace_examples() {
        // x = 0.10, y = 0.01 -> 0.1001
        let ps = PointSet::from_digits(1, 2, 2, vec![0b10, 0b01]).unwrap();
        let w = interlace(&ps, 2).unwrap();
        assert_eq!(w.point(0), &[0.5625]);
        assert_eq!(w.digits().unwrap().bits, 4);

        // three coordinates, three digits each
        let ps = PointSet::from_digits(1, 3, 3, vec![0b101, 0b011, 0b110]).unwrap();
        let w = interlace(&ps, 3).unwrap();
        // x1 y1 z1 x2 y2 z2 x3 y3 z3 = 1 0 1 0 1 1 1 1 0
        assert_eq!(w.digit_value(0, 0), Some(0b101011110));

        let id = interlace(&ps, 1).unwrap();
        assert_eq!(id, ps);
        assert!(interlace(&ps, 2).is_err());
    }
}
