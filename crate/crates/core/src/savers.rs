//! Cost savers: multilevel telescoping estimators with sample-size
//! allocation, the multivariate decomposition method over an active set of
//! anchored components, and fast matrix-vector products with lattice point
//! matrices for prime `n`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimate::{derive_seed, shifted_lattice, Estimate};
use crate::numtheory::{is_prime, primitive_root};
use crate::points::{GeneratingVector, RandomShift};
use crate::transforms::{norminv_clamped, GaussRule};
use crate::weights::Subset;

// ---------------------------------------------------------------------------
// Multilevel

type LevelFn<'a> = Box<dyn Fn(&[f64]) -> f64 + Send + Sync + 'a>;

struct Level<'a> {
    dim: usize,
    cost: f64,
    f: LevelFn<'a>,
}

/// Approximations `f_0, ..., f_L` of increasing fidelity. Level `l` reads
/// the first `dim_l` coordinates of a point; dimensions are non-decreasing
/// so `f_{l-1}` can be evaluated at the same point as `f_l`.
#[derive(Default)]
pub struct LevelFamily<'a> {
    levels: Vec<Level<'a>>,
}

impl<'a> LevelFamily<'a> {
    pub fn new() -> Self {
        Self { levels: Vec::new() }
    }

    pub fn push<F>(&mut self, dim: usize, cost: f64, f: F) -> Result<()>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'a,
    {
        if let Some(last) = self.levels.last() {
            if dim < last.dim {
                return invalid("level dimensions must be non-decreasing");
            }
        }
        if !(cost > 0.0) {
            return invalid("level cost must be positive");
        }
        self.levels.push(Level { dim, cost, f: Box::new(f) });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn dim(&self, level: usize) -> usize {
        self.levels[level].dim
    }

    pub fn costs(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.cost).collect()
    }

    pub fn eval(&self, level: usize, x: &[f64]) -> f64 {
        let l = &self.levels[level];
        (l.f)(&x[..l.dim])
    }

    /// `f_l(x) - f_{l-1}(x)` with `f_{-1} = 0`.
    pub fn difference(&self, level: usize, x: &[f64]) -> f64 {
        let hi = self.eval(level, x);
        if level == 0 {
            hi
        } else {
            hi - self.eval(level - 1, x)
        }
    }
}

/// Shifted-lattice estimate of `E[f_l - f_{l-1}]` with a rule of
/// dimension `dim_l`.
pub fn level_difference(
    fam: &LevelFamily<'_>,
    level: usize,
    gv: &GeneratingVector,
    shifts: usize,
    seed: u64,
) -> Result<Estimate> {
    if level >= fam.len() {
        return Err(Error::IndexOutOfRange { index: level, dim: fam.len() });
    }
    if gv.s() != fam.dim(level) {
        return Err(Error::DimensionMismatch { expected: fam.dim(level), got: gv.s() });
    }
    shifted_lattice(gv, shifts, seed, |x| fam.difference(level, x))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MultilevelEstimate {
    /// Sum over levels; the variance is the sum of the level variances.
    pub total: Estimate,
    pub levels: Vec<Estimate>,
    /// `sum_l R n_l c_l`.
    pub cost: f64,
}

/// `sum_{l=0}^{L} Q_l(f_l - f_{l-1})` with `L = rules.len() - 1`; level
/// `l` uses seed `derive_seed(seed, l)`.
pub fn multilevel_estimate(
    fam: &LevelFamily<'_>,
    rules: &[GeneratingVector],
    shifts: usize,
    seed: u64,
) -> Result<MultilevelEstimate> {
    if rules.is_empty() || rules.len() > fam.len() {
        return invalid(format!("need between 1 and {} level rules, got {}", fam.len(), rules.len()));
    }
    let levels = rules
        .iter()
        .enumerate()
        .map(|(l, gv)| level_difference(fam, l, gv, shifts, derive_seed(seed, l as u64)))
        .collect::<Result<Vec<_>>>()?;
    let value = levels.iter().map(|e| e.value).sum();
    let std_error = levels
        .iter()
        .map(|e| e.std_error.map(|s| s * s))
        .sum::<Option<f64>>()
        .map(f64::sqrt);
    let replicates = (0..shifts).map(|r| levels.iter().map(|e| e.replicates[r]).sum()).collect();
    let n = levels.iter().map(|e| e.n).sum();
    let cost = levels.iter().zip(&fam.levels).map(|(e, l)| (shifts as u64 * e.n) as f64 * l.cost).sum();
    Ok(MultilevelEstimate { total: Estimate { value, std_error, n, replicates, seed }, levels, cost })
}

/// Per-sample variance `n_l * SE_l^2` of each level difference from pilot
/// runs with at least 8 shifts.
pub fn pilot_variances(
    fam: &LevelFamily<'_>,
    rules: &[GeneratingVector],
    shifts: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if shifts < 8 {
        return invalid("pilot variances need at least 8 shifts");
    }
    let ml = multilevel_estimate(fam, rules, shifts, seed)?;
    Ok(ml.levels.iter().map(|e| e.n as f64 * e.se_or_zero().powi(2)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// Unrounded Lagrange solution.
    pub exact: Vec<f64>,
    /// Rounded up to powers of two.
    pub n: Vec<u64>,
}

/// Minimizes `sum c_l n_l` subject to `sum V_l / n_l <= (eps/2)^2`:
/// `n_l = (eps/2)^-2 sqrt(V_l / c_l) sum_k sqrt(V_k c_k)`.
pub fn allocate_levels(variances: &[f64], costs: &[f64], eps: f64) -> Result<Allocation> {
    if !(eps > 0.0) {
        return invalid("eps must be positive");
    }
    if variances.len() != costs.len() {
        return Err(Error::DimensionMismatch { expected: variances.len(), got: costs.len() });
    }
    if variances.iter().any(|&v| !(v >= 0.0)) || costs.iter().any(|&c| !(c > 0.0)) {
        return invalid("variances must be non-negative and costs positive");
    }
    let target = (0.5 * eps).powi(2);
    let sum: f64 = variances.iter().zip(costs).map(|(v, c)| (v * c).sqrt()).sum();
    let exact: Vec<f64> = variances.iter().zip(costs).map(|(v, c)| (v / c).sqrt() * sum / target).collect();
    let n = exact
        .iter()
        .map(|&x| {
            if x > 2f64.powi(62) {
                Err(Error::TooLarge(format!("sample size {x:e}")))
            } else {
                Ok((x.ceil() as u64).max(1).next_power_of_two())
            }
        })
        .collect::<Result<_>>()?;
    Ok(Allocation { exact, n })
}

// ---------------------------------------------------------------------------
// Anchored decomposition and MDM

/// Largest `|u|` accepted by [`anchored_component`].
pub const MAX_ANCHORED_ORDER: usize = 16;

/// `f_u(y_u) = sum_{v subset u} (-1)^{|u|-|v|} f(y_v; a)`, where `(y_v; a)`
/// takes `y` on `v` and the anchor elsewhere. `y` has full length; only
/// the coordinates in `u` are read.
pub fn anchored_component<F>(f: F, u: &Subset, anchor: &[f64], y: &[f64]) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    check_subset(u, anchor.len())?;
    if y.len() != anchor.len() {
        return Err(Error::DimensionMismatch { expected: anchor.len(), got: y.len() });
    }
    let idx = u.indices();
    let mut point = anchor.to_vec();
    let mut acc = 0.0;
    for mask in 0u32..1 << idx.len() {
        for (b, &j) in idx.iter().enumerate() {
            point[j] = if mask >> b & 1 == 1 { y[j] } else { anchor[j] };
        }
        let sign = if (idx.len() - mask.count_ones() as usize) % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * f(&point);
    }
    Ok(acc)
}

fn check_subset(u: &Subset, d: usize) -> Result<()> {
    if u.len() > MAX_ANCHORED_ORDER {
        return Err(Error::TooLarge(format!("anchored component of order {} exceeds {MAX_ANCHORED_ORDER}", u.len())));
    }
    match u.max_index() {
        Some(j) if j >= d => Err(Error::IndexOutOfRange { index: j, dim: d }),
        _ => Ok(()),
    }
}

/// Subsets kept by the multivariate decomposition method together with
/// the truncation certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActiveSet {
    /// Sorted by decreasing bound; the empty set comes first.
    pub sets: Vec<Subset>,
    /// `B_u` for each entry of `sets`.
    pub bounds: Vec<f64>,
    /// Every non-empty `u` with `B_u > threshold` is active.
    pub threshold: f64,
    pub epsilon: f64,
    /// `sum_{u not active} B_u`, at most `epsilon / 2`.
    pub tail: f64,
}

#[derive(PartialEq)]
struct Candidate {
    bound: f64,
    idx: Vec<usize>,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound.total_cmp(&other.bound).then_with(|| other.idx.cmp(&self.idx))
    }
}

/// Active set for product bounds `B_u = prod_{j in u} b_j` with `b`
/// non-increasing. Non-empty subsets are visited in decreasing order of
/// `B_u`; each visited `{j_1 < ... < j_k}` spawns `u + {j_k + 1}` and
/// `u - {j_k} + {j_k + 1}`, both with smaller or equal bound, so the walk
/// never needs to look past the threshold. The tail is
/// `prod (1 + b_j) - 1 - sum_{active, non-empty} B_u`. The empty set is
/// always active. Fails when more than `max_sets` subsets are needed.
pub fn build_active_set(b: &[f64], eps: f64, max_sets: usize) -> Result<ActiveSet> {
    if !(eps > 0.0) {
        return invalid("eps must be positive");
    }
    if b.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return invalid("bounds b_j must be finite and non-negative");
    }
    if b.windows(2).any(|w| w[1] > w[0]) {
        return invalid("bounds b_j must be non-increasing");
    }
    let budget = 0.5 * eps;
    let mut tail: f64 = b.iter().map(|&x| 1.0 + x).product::<f64>() - 1.0;
    let mut sets = vec![Subset::empty()];
    let mut bounds = vec![1.0];
    let mut heap = BinaryHeap::new();
    if b.first().is_some_and(|&x| x > 0.0) {
        heap.push(Candidate { bound: b[0], idx: vec![0] });
    }
    let mut last = f64::INFINITY;
    while let Some(top) = heap.peek() {
        // stop once the tail fits, but never split a group of equal bounds
        if tail <= budget && top.bound < last {
            break;
        }
        let Candidate { bound, idx } = heap.pop().expect("peeked");
        if sets.len() >= max_sets {
            return Err(Error::TooLarge(format!("active set needs more than {max_sets} subsets")));
        }
        tail -= bound;
        last = bound;
        let k = *idx.last().expect("non-empty");
        if k + 1 < b.len() && b[k + 1] > 0.0 {
            let mut ext = idx.clone();
            ext.push(k + 1);
            heap.push(Candidate { bound: bound * b[k + 1], idx: ext });
            let mut rep = idx.clone();
            *rep.last_mut().expect("non-empty") = k + 1;
            heap.push(Candidate { bound: bound / b[k] * b[k + 1], idx: rep });
        }
        sets.push(Subset::new(idx));
        bounds.push(bound);
    }
    let threshold = heap.peek().map_or(0.0, |c| c.bound);
    Ok(ActiveSet { sets, bounds, threshold, epsilon: eps, tail: tail.max(0.0) })
}

impl ActiveSet {
    /// Quadrature error budgets `eps_u` splitting `eps/2` in proportion to
    /// `B_u`.
    pub fn budgets(&self) -> Vec<f64> {
        let total: f64 = self.bounds.iter().sum();
        self.bounds.iter().map(|b| 0.5 * self.epsilon * b / total).collect()
    }

    /// Smallest power of two `n` with `B_u n^-rate <= eps_u` for every
    /// active `u`. With the proportional split this is the same `n` for all
    /// subsets: `(sum_A B_u / (eps/2))^(1/rate)`.
    pub fn common_sample_size(&self, rate: f64) -> Result<u64> {
        if !(rate > 0.0) {
            return invalid("rate must be positive");
        }
        let total: f64 = self.bounds.iter().sum();
        let n = (total / (0.5 * self.epsilon)).powf(1.0 / rate);
        if n > 2f64.powi(62) {
            return Err(Error::TooLarge(format!("sample size {n:e}")));
        }
        Ok((n.ceil() as u64).max(1).next_power_of_two())
    }

    pub fn max_order(&self) -> usize {
        self.sets.iter().map(|u| u.len()).max().unwrap_or(0)
    }
}

/// Weighted cubature on `[0,1]^dim`.
#[derive(Clone, Debug)]
pub struct Cubature {
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Cubature {
    /// Tensor product of a Gauss rule on `[-1, 1]` mapped to `[0, 1]`.
    pub fn tensor(rule: &GaussRule, dim: usize) -> Result<Self> {
        let q = rule.len();
        let count = (q as u64).checked_pow(dim as u32).filter(|&c| c <= 1 << 26);
        let Some(count) = count else {
            return Err(Error::TooLarge(format!("{q}^{dim} tensor nodes")));
        };
        let mut nodes = Vec::with_capacity(count as usize * dim);
        let mut weights = Vec::with_capacity(count as usize);
        let mut digits = vec![0usize; dim];
        for _ in 0..count {
            let mut w = 1.0;
            for &k in &digits {
                nodes.push(0.5 * (rule.nodes[k] + 1.0));
                w *= 0.5 * rule.weights[k];
            }
            weights.push(w);
            for d in digits.iter_mut() {
                *d += 1;
                if *d < q {
                    break;
                }
                *d = 0;
            }
        }
        Ok(Self { dim, nodes, weights })
    }

    /// Equal-weight (optionally shifted) lattice rule.
    pub fn lattice(gv: &GeneratingVector, shift: Option<&RandomShift>) -> Result<Self> {
        if let Some(sh) = shift {
            if sh.s() != gv.s() {
                return Err(Error::DimensionMismatch { expected: gv.s(), got: sh.s() });
            }
        }
        let (n, s) = (gv.n(), gv.s());
        let mut nodes = vec![0.0; n as usize * s];
        for (i, row) in nodes.chunks_mut(s.max(1)).enumerate().take(n as usize) {
            gv.point_into(i as u64 + 1, shift.map(|d| d.delta.as_slice()), &mut row[..s]);
        }
        nodes.truncate(n as usize * s);
        Ok(Self { dim: s, nodes, weights: vec![1.0 / n as f64; n as usize] })
    }

    /// The trivial rule for the empty set.
    pub fn point() -> Self {
        Self { dim: 0, nodes: Vec::new(), weights: vec![1.0] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn apply(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        (0..self.len()).map(|i| self.weights[i] * f(self.node(i))).sum()
    }
}

/// `A_MDM(f) = sum_{u in A} Q_u(f_u)` over `replicates` independent
/// replicates; `rule(k, r)` builds the cubature for `active[k]` in
/// replicate `r` (dimension `|u|`). Evaluations of `f` are memoized per
/// replicate, keyed by the exact bits of the evaluation point, so
/// projections shared by nested subsets are computed once.
pub fn mdm_estimate<F, R>(f: F, anchor: &[f64], active: &[Subset], replicates: usize, rule: R, seed: u64) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
    R: Fn(usize, usize) -> Result<Cubature> + Sync,
{
    if replicates == 0 {
        return invalid("at least one replicate is required");
    }
    for u in active {
        check_subset(u, anchor.len())?;
    }
    let values: Vec<Result<(f64, u64)>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut memo: HashMap<Vec<u64>, f64> = HashMap::new();
            let mut eval = |p: &[f64]| {
                let key: Vec<u64> = p.iter().map(|x| x.to_bits()).collect();
                *memo.entry(key).or_insert_with(|| f(p))
            };
            let mut point = anchor.to_vec();
            let mut total = 0.0;
            let mut nodes = 0;
            for (k, u) in active.iter().enumerate() {
                let idx = u.indices();
                let q = rule(k, r)?;
                if q.dim() != u.len() {
                    return Err(Error::DimensionMismatch { expected: u.len(), got: q.dim() });
                }
                nodes += q.len() as u64;
                total += q.apply(|x| {
                    let mut acc = 0.0;
                    for mask in 0u32..1 << idx.len() {
                        for (b, &j) in idx.iter().enumerate() {
                            point[j] = if mask >> b & 1 == 1 { x[b] } else { anchor[j] };
                        }
                        let sign = if (idx.len() - mask.count_ones() as usize) % 2 == 0 { 1.0 } else { -1.0 };
                        acc += sign * eval(&point);
                    }
                    acc
                });
                for &j in idx {
                    point[j] = anchor[j];
                }
            }
            Ok((total, nodes))
        })
        .collect();
    let values = values.into_iter().collect::<Result<Vec<_>>>()?;
    let n = values[0].1;
    Ok(Estimate::from_replicates(values.into_iter().map(|v| v.0).collect(), n, seed))
}

// ---------------------------------------------------------------------------
// Fast matrix-vector products

/// Entrywise transform applied to lattice coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chi {
    Identity,
    /// `x - 1/2`.
    Centered,
    /// Inverse standard normal CDF.
    Norminv,
}

impl Chi {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Self::Identity => x,
            Self::Centered => x - 0.5,
            Self::Norminv => norminv_clamped(x),
        }
    }
}

impl FromStr for Chi {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "centered" => Ok(Self::Centered),
            "norminv" => Ok(Self::Norminv),
            other => Err(Error::InvalidParameter(format!("unknown transform {other:?}"))),
        }
    }
}

/// Circulant factorization `Y = C P` of the transformed lattice point
/// matrix for prime `n`: rows are ordered `i_k = g^k mod n`
/// (`k = 0..n-2`, the origin row is left out) and column `j` of `Y` is
/// column `m_j` of the circulant built from `c_k = chi(frac(g^k / n))`,
/// where `z_j g^{m_j} = 1 (mod n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FastMvmPlan {
    pub n: u64,
    pub z: Vec<u64>,
    pub g: u64,
    pub offsets: Vec<u64>,
    pub chi: Chi,
}

impl FastMvmPlan {
    /// Fails for composite `n` and for shifted rules, whose point matrix
    /// has no circulant structure.
    pub fn new(gv: &GeneratingVector, chi: Chi, shift: Option<&RandomShift>) -> Result<Self> {
        if shift.is_some() {
            return Err(Error::Unsupported("fast matrix-vector products do not apply to shifted rules".into()));
        }
        let n = gv.n();
        if n < 3 || !is_prime(n) {
            return Err(Error::InvalidParameter(format!("n = {n} must be an odd prime")));
        }
        let g = primitive_root(n).expect("prime");
        let mut log = vec![0u64; n as usize];
        let mut t = 1u64;
        for k in 0..n - 1 {
            log[t as usize] = k;
            t = t * g % n;
        }
        let offsets = gv.z().iter().map(|&zj| (n - 1 - log[zj as usize]) % (n - 1)).collect();
        Ok(Self { n, z: gv.z().to_vec(), g, offsets, chi })
    }

    /// Checks the invariants of a plan loaded from disk.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if n < 3 || !is_prime(n) {
            return invalid(format!("n = {n} must be an odd prime"));
        }
        if primitive_root(n).is_none() || !is_generator(self.g, n) {
            return invalid(format!("{} does not generate the units mod {n}", self.g));
        }
        if self.z.len() != self.offsets.len() {
            return Err(Error::DimensionMismatch { expected: self.z.len(), got: self.offsets.len() });
        }
        for (&zj, &mj) in self.z.iter().zip(&self.offsets) {
            if crate::numtheory::mul_mod(zj, crate::numtheory::pow_mod(self.g, mj, n), n) != 1 {
                return invalid(format!("offset {mj} does not invert z = {zj}"));
            }
        }
        Ok(())
    }

    pub fn s(&self) -> usize {
        self.z.len()
    }

    /// Lattice indices `g^k mod n` in output row order.
    pub fn rows(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.n as usize - 1);
        let mut t = 1u64;
        for _ in 0..self.n - 1 {
            out.push(t);
            t = t * self.g % self.n;
        }
        out
    }
}

fn is_generator(g: u64, n: u64) -> bool {
    g % n != 0
        && crate::numtheory::prime_factors(n - 1)
            .iter()
            .all(|&q| crate::numtheory::pow_mod(g, (n - 1) / q, n) != 1)
}

/// `Y A` for an `s x q` matrix `A`, rows in the plan's order: one
/// length-`(n-1)` FFT of the circulant generator, then per column an
/// `O(s)` accumulation into the offsets and a cyclic convolution.
pub fn fast_mvm(plan: &FastMvmPlan, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != plan.s() {
        return Err(Error::DimensionMismatch { expected: plan.s(), got: a.nrows() });
    }
    let len = plan.n as usize - 1;
    let q = a.ncols();
    let mut out = DMatrix::zeros(len, q);
    if q == 0 {
        return Ok(out);
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut spectrum: Vec<Complex64> = plan
        .rows()
        .iter()
        .map(|&t| Complex64::new(plan.chi.apply(t as f64 / plan.n as f64), 0.0))
        .collect();
    fwd.process(&mut spectrum);
    let scale = 1.0 / len as f64;
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for col in 0..q {
        buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        for (j, &m) in plan.offsets.iter().enumerate() {
            buf[m as usize].re += a[(j, col)];
        }
        fwd.process(&mut buf);
        buf.iter_mut().zip(&spectrum).for_each(|(b, c)| *b *= c);
        inv.process(&mut buf);
        for (k, b) in buf.iter().enumerate() {
            out[(k, col)] = b.re * scale;
        }
    }
    Ok(out)
}

/// Reference product: builds `Y` row by row (same row order) and
/// multiplies densely.
pub fn naive_mvm(plan: &FastMvmPlan, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != plan.s() {
        return Err(Error::DimensionMismatch { expected: plan.s(), got: a.nrows() });
    }
    let rows = plan.rows();
    let n = plan.n;
    let y = DMatrix::from_fn(rows.len(), plan.s(), |k, j| {
        plan.chi.apply(crate::numtheory::mul_mod(rows[k], plan.z[j], n) as f64 / n as f64)
    });
    Ok(y * a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allocation_ratio_and_single_level() {
        let a = allocate_levels(&[1.0, 0.01], &[1.0, 100.0], 0.1).unwrap();
        assert!((a.exact[0] / a.exact[1] - 100.0).abs() < 1e-9);
        let single = allocate_levels(&[2.0], &[3.0], 0.1).unwrap();
        // V / n <= (eps/2)^2 needs n >= 800
        assert_eq!(single.n, vec![1024]);
        let eq = allocate_levels(&[0.5; 3], &[2.0; 3], 0.01).unwrap();
        assert!(eq.n.iter().all(|&n| n == eq.n[0]));
        assert!(allocate_levels(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn anchored_product_example() {
        let f = |y: &[f64]| y[0] * y[1];
        let a = [0.0, 0.0];
        let y = [0.3, 0.7];
        let both = anchored_component(f, &Subset::new(vec![0, 1]), &a, &y).unwrap();
        assert!((both - 0.21).abs() < 1e-15);
        assert_eq!(anchored_component(f, &Subset::new(vec![0]), &a, &y).unwrap(), 0.0);
        assert_eq!(anchored_component(f, &Subset::empty(), &a, &y).unwrap(), 0.0);
        let big = Subset::new((0..17).collect());
        assert!(matches!(anchored_component(f, &big, &[0.0; 17], &[0.0; 17]), Err(Error::TooLarge(_))));
    }

    #[test]
    fn active_set_extremes() {
        let none = build_active_set(&[0.0; 5], 1e-3, 100).unwrap();
        assert_eq!(none.sets, vec![Subset::empty()]);
        let b = [0.5, 0.25];
        let huge = build_active_set(&b, 10.0, 100).unwrap();
        assert_eq!(huge.sets, vec![Subset::empty()]);
        let tiny = build_active_set(&b, 1e-9, 100).unwrap();
        assert_eq!(tiny.sets.len(), 4);
        assert_eq!(tiny.tail, 0.0);
        assert!(build_active_set(&[0.9; 30], 1e-6, 50).is_err());
    }

    #[test]
    fn fast_mvm_tiny() {
        let gv = GeneratingVector::new(3, vec![1, 2]).unwrap();
        let plan = FastMvmPlan::new(&gv, Chi::Identity, None).unwrap();
        assert_eq!(plan.g, 2);
        assert_eq!(plan.offsets, vec![0, 1]);
        plan.validate().unwrap();
        let a = DMatrix::identity(2, 2);
        let fast = fast_mvm(&plan, &a).unwrap();
        // rows i = 1, 2: (1/3, 2/3), (2/3, 1/3)
        let want = DMatrix::from_row_slice(2, 2, &[1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0]);
        assert!((fast - want).abs().max() < 1e-14);
        assert!(FastMvmPlan::new(&GeneratingVector::new(8, vec![1]).unwrap(), Chi::Identity, None).is_err());
    }
}
