//! Gauss rules from the three-term recurrence of orthonormal polynomials:
//! Golub-Welsch for starting values, Newton polishing of each node, and
//! Christoffel weights `1 / sum_k p_k(x)^2`.

use nalgebra::{DMatrix, SymmetricEigen};

#[derive(Clone, Debug)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Sum of `w_i f(x_i)`.
    pub fn apply(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Orthonormal polynomials with `x p_k = b_{k+1} p_{k+1} + b_k p_{k-1}` and
/// zero diagonal; `b[k]` holds `b_{k+1}`.
fn symmetric_rule(n: usize, b: &[f64], mass: f64) -> GaussRule {
    assert!(n >= 1);
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 0..n - 1 {
        jac[(k, k + 1)] = b[k];
        jac[(k + 1, k)] = b[k];
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(jac).eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);
    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            // p_n and its derivative at x
            let (mut p0, mut p1) = (0.0, 1.0);
            let (mut d0, mut d1) = (0.0, 0.0);
            for k in 0..n {
                let bk = if k == 0 { 0.0 } else { b[k - 1] };
                let p2 = (*x * p1 - bk * p0) / b[k];
                let d2 = (p1 + *x * d1 - bk * d0) / b[k];
                p0 = p1;
                p1 = p2;
                d0 = d1;
                d1 = d2;
            }
            if d1 != 0.0 && p1.is_finite() && d1.is_finite() {
                *x -= p1 / d1;
            }
        }
        let (mut p0, mut p1) = (0.0, 1.0);
        let mut sum = 1.0;
        for k in 0..n - 1 {
            let bk = if k == 0 { 0.0 } else { b[k - 1] };
            let p2 = (*x * p1 - bk * p0) / b[k];
            sum += p2 * p2;
            p0 = p1;
            p1 = p2;
        }
        weights.push(mass / sum);
    }
    // exact symmetry about the origin
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -x;
        nodes[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    GaussRule { nodes, weights }
}

/// Gauss-Legendre rule for `int_{-1}^{1} f(x) dx`.
pub fn gauss_legendre(n: usize) -> GaussRule {
    let b: Vec<f64> = (1..=n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    symmetric_rule(n, &b, 2.0)
}

/// Gauss-Hermite rule for `int f(x) phi(x) dx` with the standard normal
/// density `phi`; the weights sum to one.
pub fn gauss_hermite(n: usize) -> GaussRule {
    let b: Vec<f64> = (1..=n).map(|k| (k as f64).sqrt()).collect();
    symmetric_rule(n, &b, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_exactness() {
        for n in [1usize, 2, 5, 20, 64] {
            let r = gauss_legendre(n);
            for deg in 0..2 * n {
                let got = r.apply(|x| x.powi(deg as i32));
                let want = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((got - want).abs() < 1e-13, "n {n} deg {deg}: {got}");
            }
        }
    }

    #[test]
    fn hermite_moments() {
        for n in [1usize, 3, 10, 40, 64] {
            let r = gauss_hermite(n);
            // E[x^{2k}] = (2k-1)!!
            let mut dfact = 1.0;
            for k in 0..n.min(8) {
                if k > 0 {
                    dfact *= (2 * k - 1) as f64;
                }
                let got = r.apply(|x| x.powi(2 * k as i32));
                assert!((got - dfact).abs() < 1e-12 * dfact, "n {n} k {k}: {got}");
            }
            // E[exp(x)] = e^{1/2}
            if n >= 20 {
                assert!((r.apply(f64::exp) - 0.5f64.exp()).abs() < 1e-14);
            }
        }
    }
}
